"""Batch command line: ``fit``, ``simulate``, ``stats`` and ``report``.

Exit status is 0 on success, 2 for invalid input or configuration and 3
for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from .errors import NumericalError, WeakFPError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _fit(args) -> int:
    from .pipeline import RunConfig, run_fit
    cfg = RunConfig.from_file(args.config)
    doc = run_fit(cfg)
    failed = [g["group"] for g in doc["groups"] if "error" in g]
    print(f"fit: {len(doc['groups'])} group(s) written to {cfg.output}"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    if failed and len(failed) == len(doc["groups"]):
        kinds = {g["error"]["type"] for g in doc["groups"]}
        return EXIT_NUMERICAL if kinds == {"NumericalError"} else EXIT_VALIDATION
    return EXIT_OK


def _simulate(args) -> int:
    from .data_model import save_snapshots
    from .pipeline import SimRunConfig, label_snapshots
    from .simulate import simulate
    cfg = SimRunConfig.from_file(args.config)
    snaps = label_snapshots(simulate(cfg.sim_config()), cfg.plot_id, cfg.replicate_id)
    save_snapshots(snaps, cfg.output)
    print(f"simulate: {snaps.total_count} records at {len(snaps)} times -> {cfg.output}")
    return EXIT_OK


def _stats(args) -> int:
    from . import empirical
    from .data_model import load_snapshots
    data = load_snapshots(args.input)
    rows = empirical.displacement_table(data, args.n_boot, args.seed)
    out = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.output:
            out.close()
    if args.summary:
        cr = empirical.covariance_rate(data)
        fd = empirical.fit_displacement(data, "radial")
        print(json.dumps({"covariance_rate_D": cr.D.tolist(), "covariance_rate_D_eff": cr.d_eff,
                          "displacement_D_eff": fd.d_eff}), file=sys.stderr)
    return EXIT_OK


def _report(args) -> int:
    from .pipeline import run_report
    paths = run_report(args.from_dir)
    print(f"report: {len(paths)} file(s) in {args.from_dir}/report")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weakfp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    f = sub.add_parser("fit", help="learn models for every group in a run config")
    f.add_argument("--config", required=True)
    f.set_defaults(func=_fit)
    s = sub.add_parser("simulate", help="write a synthetic snapshot CSV")
    s.add_argument("--config", required=True)
    s.set_defaults(func=_simulate)
    st = sub.add_parser("stats", help="per-time displacement table with bootstrap CIs")
    st.add_argument("--input", required=True)
    st.add_argument("--output")
    st.add_argument("--n-boot", type=int, default=1000)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--summary", action="store_true", help="also print diffusion estimates to stderr")
    st.set_defaults(func=_stats)
    r = sub.add_parser("report", help="render tables and curves from a fit directory")
    r.add_argument("--from", dest="from_dir", required=True)
    r.set_defaults(func=_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (WeakFPError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
