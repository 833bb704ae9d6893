"""
The batch workflow
==================

``weakfp simulate``, ``weakfp fit`` and ``weakfp report`` driven from
Python. Each step reads a flat YAML file; the report is rebuilt from
``fit.json`` alone.
"""

import tempfile
from pathlib import Path

import yaml

from weakfp.cli import main

work = Path(tempfile.mkdtemp(prefix="weakfp_demo_"))
(work / "sim.yaml").write_text(yaml.safe_dump(
    {"output": "snapshots.csv", "n": 2000, "D_x": 8.3, "D_y": 8.3, "seed": 9}))
(work / "run.yaml").write_text(yaml.safe_dump(
    {"input": "snapshots.csv", "output": "out", "families": "anisotropic,effective",
     "n_boot": 100}))

assert main(["simulate", "--config", str(work / "sim.yaml")]) == 0
assert main(["fit", "--config", str(work / "run.yaml")]) == 0
assert main(["report", "--from", str(work / "out")]) == 0

print((work / "out" / "report" / "coefficients.csv").read_text())
print((work / "out" / "report" / "empirical.csv").read_text())
