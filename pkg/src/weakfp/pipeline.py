"""End-to-end runs: load, group, KDE, assemble, regress, nondimensionalize, report."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import empirical
from .data_model import DomainConfig, SnapshotSet, combine, load_snapshots
from .errors import ValidationError, WeakFPError
from .kde import build_density
from .nondim import characteristic_scales, pi_groups
from .regression import default_lambdas, fit_ols, mstls_sweep
from .weakform import LibrarySpec, TestFunctionSpec, assemble

log = logging.getLogger(__name__)

FAMILIES = ("full", "anisotropic", "effective")
GROUPINGS = ("combined", "plot", "replicate", "plant", "virus")
# plot id -> (plant variety, infected)
PLOT_TREATMENTS = {"1": ("Stonewall", "No"), "2": ("Gasoy", "No"),
                   "3": ("Stonewall", "Yes"), "4": ("Gasoy", "Yes")}
FIT_FILE = "fit.json"


@dataclass
class RunConfig:
    """Flat run configuration; every default matches the reference analysis."""

    input: list = field(default_factory=list)
    output: str = "out"
    group_by: str = "combined"
    families: list = field(default_factory=lambda: list(FAMILIES))
    solver: str = "mstls"
    length_x: float = 175.0
    length_y: float = 175.0
    grid_nx: int = 80
    grid_ny: int = 80
    grid_nt: int = 98
    m_x: int = 10
    m_y: int = 10
    m_t: int = 6
    tau0: float = 1e-10
    j_v: int = 9
    j_k: int = 5
    rho0: float = 6.0
    kernel_radius: int = 30
    n_lambdas: int = 50
    n_boot: int = 1000
    seed: int = 0
    t_c: float | None = None

    def __post_init__(self):
        if isinstance(self.input, str):
            self.input = [self.input]
        if isinstance(self.families, str):
            self.families = [f.strip() for f in self.families.split(",") if f.strip()]
        if self.group_by not in GROUPINGS:
            raise ValidationError(f"group_by must be one of {GROUPINGS}, got {self.group_by!r}")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad or not self.families:
            raise ValidationError(f"unknown model families {bad}; choose from {FAMILIES}")
        if self.solver not in ("mstls", "ols"):
            raise ValidationError(f"solver must be mstls or ols, got {self.solver!r}")
        if self.n_lambdas < 1 or self.n_boot < 0:
            raise ValidationError("n_lambdas must be >= 1 and n_boot >= 0")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(_read_flat(path), base=Path(path).parent)

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "RunConfig":
        cfg = cls(**_coerce(cls, d))
        if base is not None:
            cfg.input = [str(base / p) if not Path(p).is_absolute() else p for p in cfg.input]
            if not Path(cfg.output).is_absolute():
                cfg.output = str(base / cfg.output)
        return cfg

    @property
    def domain(self) -> DomainConfig:
        return DomainConfig(self.length_x, self.length_y, self.grid_nx, self.grid_ny, self.grid_nt)

    @property
    def test_functions(self) -> TestFunctionSpec:
        return TestFunctionSpec(m=(self.m_x, self.m_y, self.m_t), tau0=self.tau0)

    def library(self, family: str, single_run: bool) -> LibrarySpec:
        # interaction terms only make sense for one experimental run
        return LibrarySpec.family(family, j_v=self.j_v, j_k=self.j_k, rho0=self.rho0,
                                  kernel_radius=self.kernel_radius,
                                  include_k=single_run and family == "full")


def _read_flat(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            d = yaml.safe_load(fh)
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ValidationError(f"config {path} is not valid YAML: {e}") from e
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ValidationError("config must be a key: value mapping")
    nested = [k for k, v in d.items() if isinstance(v, dict)]
    if nested:
        raise ValidationError(f"config must be flat; nested keys: {nested}")
    return d


def _coerce(cls, d: dict) -> dict:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(fields))
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}")
    out = {}
    for k, v in d.items():
        default = fields[k].default
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise ValidationError(f"{k} must be true/false")
        elif isinstance(default, int) and not isinstance(default, bool):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValidationError(f"{k} must be an integer, got {v!r}")
        elif isinstance(default, float) or (default is None and k == "t_c"):
            if v is not None:
                try:
                    v = float(v)
                except (TypeError, ValueError):
                    raise ValidationError(f"{k} must be a number, got {v!r}") from None
        out[k] = v
    return out


# ---- grouping ---------------------------------------------------------------

def group_selections(data: SnapshotSet, group_by: str) -> list[tuple[str, dict]]:
    """``(group id, select kwargs)`` pairs in a deterministic order."""
    plots = data.groups("plot")
    if group_by == "combined":
        return [("combined", {})]
    if group_by == "plot":
        return [(f"plot={p}", {"plot_ids": [p]}) for p in plots]
    if group_by == "replicate":
        out = []
        for p in plots:
            for r in data.select(plot_ids=[p]).groups("replicate"):
                out.append((f"plot={p},replicate={r}", {"plot_ids": [p], "replicate_ids": [r]}))
        return out
    j = 0 if group_by == "plant" else 1
    levels = {}
    for p in plots:
        if p not in PLOT_TREATMENTS:
            raise ValidationError(f"plot {p!r} has no known treatment for group_by={group_by}")
        levels.setdefault(PLOT_TREATMENTS[p][j], []).append(p)
    return [(f"{group_by}={lvl}", {"plot_ids": levels[lvl]}) for lvl in sorted(levels)]


def _single_run(s: SnapshotSet) -> bool:
    pairs = {(str(p), str(r)) for ps, rs in zip(s.plot_ids, s.replicate_ids)
             for p, r in zip(ps, rs)}
    return len(pairs) == 1


# ---- fitting ----------------------------------------------------------------

def _num(x):
    """JSON-safe float (NaN/inf become None)."""
    x = float(x)
    return x if math.isfinite(x) else None


def _model_doc(model, scales) -> dict:
    w = model.weights * scales
    se = (model.std_errors if model.std_errors is not None else np.zeros_like(w)) * np.abs(scales)
    return {
        "labels": list(model.labels),
        "weights": [_num(v) for v in w],
        "two_sigma": [_num(2 * v) for v in se],
        "selected": [str(s) for s in model.selected()],
        "r2": _num(model.r2), "aic": _num(model.aic),
        "lambda": _num(model.lam) if model.lam is not None else None,
        "zero_model": bool(model.zero_model), "method": model.method,
    }


def _diffusion_matrix(doc: dict) -> np.ndarray | None:
    lab = dict(zip(doc["labels"], doc["weights"]))
    if "D_eff" in lab:
        return np.eye(2) * (lab["D_eff"] or 0.0)
    if {"D_x", "D_xy", "D_y"} <= set(lab):
        return np.array([[lab["D_x"] or 0.0, lab["D_xy"] or 0.0],
                         [lab["D_xy"] or 0.0, lab["D_y"] or 0.0]])
    return None


def _fit_family(cfg: RunConfig, family: str, density, data: SnapshotSet, single: bool):
    lib = cfg.library(family, single)
    system = assemble(density, lib, cfg.test_functions, cfg.length_x, cfg.length_y)
    n = data.total_count
    ls = fit_ols(system.G, system.b, labels=system.labels, n_particles=n)
    if cfg.solver == "mstls":
        main = mstls_sweep(system.G, system.b, default_lambdas(cfg.n_lambdas),
                           labels=system.labels, n_particles=n)
    else:
        main = ls
    doc = {"library": {"j_v": lib.j_v if lib.include_v else 0,
                       "j_k": lib.j_k if lib.include_k else 0,
                       "n_terms": lib.n_terms},
           "model": _model_doc(main, system.scales), "ols": _model_doc(ls, system.scales),
           "delta_aic_vs_ols": _num(main.aic - ls.aic)}
    D = _diffusion_matrix(doc["model"])
    try:
        sc = characteristic_scales(main, density, lib, cfg.length_x, cfg.length_y, cfg.t_c,
                                   D=D, term_scales=system.scales)
        doc["scales"] = {"U_c": _num(sc.U_c), "V_c": _num(sc.V_c), "K_c": _num(sc.K_c),
                         "t_c": _num(sc.t_c), "A": sc.A.tolist(), "empty": sc.empty}
        if D is not None:
            pg = pi_groups(sc, D)
            doc["pi_groups"] = {"pi_v": pg.pi_v.tolist(), "pi_k": pg.pi_k.tolist(),
                                "pi_d": pg.pi_d.tolist(), "norms": pg.norms(),
                                "iso_pi_v": pg.iso_pi_v, "iso_pi_k": pg.iso_pi_k}
    except WeakFPError as e:
        doc["pi_groups_error"] = f"{type(e).__name__}: {e}"
    return doc


def _empirical_doc(cfg: RunConfig, data: SnapshotSet) -> dict:
    out = {}
    est = empirical.with_bootstrap(empirical.covariance_rate, data, cfg.n_boot, cfg.seed)
    out["covariance_rate"] = {"D": est.D.tolist(), "two_sigma": est.delta.tolist(),
                              "D_eff": est.d_eff, "two_sigma_eff": _num(est.delta_eff)}
    for axis in ("radial", "x", "y"):
        e = empirical.with_bootstrap(empirical.fit_displacement, data, cfg.n_boot, cfg.seed,
                                     axis=axis)
        val = e.d_eff if axis == "radial" else e.D["xy".index(axis), "xy".index(axis)]
        two = e.delta_eff if axis == "radial" else e.delta["xy".index(axis), "xy".index(axis)]
        out[f"displacement_{axis}"] = {"D": _num(val), "two_sigma": _num(two),
                                       "zero_variance": e.zero_variance}
    out["displacement_table"] = [{k: _num(v) for k, v in row.items()}
                                 for row in empirical.displacement_table(data, cfg.n_boot, cfg.seed)]
    return out


def _fit_group(cfg: RunConfig, gid: str, data: SnapshotSet) -> dict:
    doc = {"group": gid, "n_particles": data.total_count,
           "times": data.times.tolist(), "counts": data.counts.tolist(),
           "single_run": _single_run(data), "families": {}}
    stage = "kde"
    try:
        density = build_density(data, data.grid(cfg.grid_nt))
        for fam in cfg.families:
            stage = f"fit:{fam}"
            doc["families"][fam] = _fit_family(cfg, fam, density, data, doc["single_run"])
        fams = doc["families"]
        if "anisotropic" in fams and "full" in fams:
            a, f = fams["anisotropic"], fams["full"]
            fams["anisotropic"]["delta_aic_vs_full"] = [
                _sub(a["model"]["aic"], f["model"]["aic"]), _sub(a["ols"]["aic"], f["ols"]["aic"])]
        if "effective" in fams and "anisotropic" in fams:
            fams["effective"]["delta_aic_vs_anisotropic"] = _sub(
                fams["effective"]["model"]["aic"], fams["anisotropic"]["model"]["aic"])
        stage = "empirical"
        doc["empirical"] = _empirical_doc(cfg, data)
    except WeakFPError as e:
        doc["error"] = {"stage": stage, "type": type(e).__name__, "message": str(e)}
        log.warning("group %s failed at %s: %s", gid, stage, e)
    return doc


def _sub(a, b):
    return None if a is None or b is None else a - b


def load_inputs(cfg: RunConfig) -> SnapshotSet:
    if not cfg.input:
        raise ValidationError("config lists no input files")
    sets = [load_snapshots(p, cfg.domain) for p in cfg.input]
    return sets[0] if len(sets) == 1 else combine(sets)


def run_fit(cfg: RunConfig, data: SnapshotSet | None = None) -> dict:
    """Fit every group and write ``fit.json`` into ``cfg.output``.

    A failing group records its stage and error and the remaining groups
    still run.
    """
    data = load_inputs(cfg) if data is None else data
    groups = []
    for gid, sel in group_selections(data, cfg.group_by):
        try:
            sub = data.select(**sel) if sel else data
        except WeakFPError as e:
            groups.append({"group": gid, "error": {"stage": "select", "type": type(e).__name__,
                                                   "message": str(e)}})
            continue
        groups.append(_fit_group(cfg, gid, sub))
    doc = {"config": _config_doc(cfg), "groups": groups}
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / FIT_FILE, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def _config_doc(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["input"] = [Path(p).name for p in cfg.input]  # keep reports path-independent
    d.pop("output")
    return d


# ---- reporting --------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(v)
    return f"{float(v):.6g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])


def run_report(src) -> list[Path]:
    """Render ``fit.json`` in ``src`` into CSV tables under ``src/report``.

    Returns the written paths. The output depends only on ``fit.json``, so
    regenerating it is byte-identical.
    """
    src = Path(src)
    fit_path = src / FIT_FILE
    if not fit_path.exists():
        raise ValidationError(f"no {FIT_FILE} in {src}; run fit first")
    with open(fit_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    out = src / "report"
    out.mkdir(exist_ok=True)
    written = []

    coef_rows, pi_rows, emp_rows, err_rows = [], [], [], []
    for g in doc.get("groups", []):
        gid = g["group"]
        if "error" in g:
            e = g["error"]
            err_rows.append([gid, e["stage"], e["type"], e["message"]])
        for fam, fd in sorted(g.get("families", {}).items()):
            for solver in ("model", "ols"):
                m = fd[solver]
                if solver == "ols" and fd["model"]["method"] == "ols":
                    continue  # the companion fit is the model itself
                for lab, w, s in zip(m["labels"], m["weights"], m["two_sigma"]):
                    if w:
                        coef_rows.append([gid, fam, m["method"], lab, w, s])
                dvs = _delta_aic(fam, fd, solver)
                coef_rows.append([gid, fam, m["method"], "R2", m["r2"], None])
                coef_rows.append([gid, fam, m["method"], "dAIC", dvs, None])
            sc = fd.get("scales", {})
            pg = fd.get("pi_groups", {})
            norms = pg.get("norms", {})
            pi_rows.append([gid, fam, sc.get("U_c"), sc.get("V_c"), sc.get("K_c"), sc.get("t_c"),
                            norms.get("pi_v"), norms.get("pi_k"), norms.get("pi_d"),
                            pg.get("iso_pi_v"), pg.get("iso_pi_k")])
        emp = g.get("empirical")
        if emp:
            cr = emp["covariance_rate"]
            emp_rows.append([gid, "covariance-rate", "D_eff", cr["D_eff"], cr["two_sigma_eff"]])
            for lab, (i, j) in (("D_x", (0, 0)), ("D_xy", (0, 1)), ("D_y", (1, 1))):
                emp_rows.append([gid, "covariance-rate", lab, cr["D"][i][j], cr["two_sigma"][i][j]])
            for axis, lab in (("radial", "D_eff"), ("x", "D_x"), ("y", "D_y")):
                d = emp[f"displacement_{axis}"]
                emp_rows.append([gid, f"displacement-{axis}", lab, d["D"], d["two_sigma"]])
            written.append(_displacement_csv(out, gid, g, emp["displacement_table"]))

    for name, header, rows in (
            ("coefficients.csv", ["group", "family", "method", "term", "value", "two_sigma"], coef_rows),
            ("nondimensional.csv", ["group", "family", "U_c", "V_c", "K_c", "t_c", "norm_pi_v",
                                    "norm_pi_k", "norm_pi_d", "iso_pi_v", "iso_pi_k"], pi_rows),
            ("empirical.csv", ["group", "method", "term", "value", "two_sigma"], emp_rows),
            ("errors.csv", ["group", "stage", "type", "message"], err_rows)):
        _write_csv(out / name, header, rows)
        written.append(out / name)
    notes = doc.get("notes", [])
    (out / "notes.txt").write_text("".join(f"{n}\n" for n in notes), encoding="utf-8")
    written.append(out / "notes.txt")
    return sorted(written)


def _delta_aic(family: str, fd: dict, solver: str):
    """Full: WSINDy vs OLS. Anisotropic: vs full (per solver). Effective: vs anisotropic."""
    if family == "full":
        return fd.get("delta_aic_vs_ols") if solver == "model" else None
    if family == "anisotropic":
        ref = fd.get("delta_aic_vs_full")
        return None if ref is None else ref[0 if solver == "model" else 1]
    return fd.get("delta_aic_vs_anisotropic") if solver == "model" else None


def _displacement_csv(out: Path, gid: str, g: dict, table: list) -> Path:
    """Observed mean radial displacement plus ``sqrt(pi (D +- 2 sigma) t)`` curves."""
    d, two = None, None
    eff = g.get("families", {}).get("effective")
    if eff:
        lab = dict(zip(eff["model"]["labels"], zip(eff["model"]["weights"], eff["model"]["two_sigma"])))
        d, two = lab.get("D_eff", (None, None))
    if d is None:
        r = g["empirical"]["displacement_radial"]
        d, two = r["D"], r["two_sigma"]
    two = two or 0.0
    rows = []
    for row in table:
        t = row["time_hr"]
        curve = [math.sqrt(math.pi * max(v, 0.0) * t) if v is not None else None
                 for v in (d, d - two if d is not None else None, d + two if d is not None else None)]
        rows.append([t, row["n"], row["mean_radial"], row["ci_lo_radial"], row["ci_hi_radial"]] + curve)
    safe = "".join(c if c.isalnum() else "_" for c in gid)
    path = out / f"displacement_{safe}.csv"
    _write_csv(path, ["time_hr", "n", "mean_rho", "ci_lo", "ci_hi", "model_rho", "model_rho_lo",
                      "model_rho_hi"], rows)
    return path


# ---- simulation configs -----------------------------------------------------

@dataclass
class SimRunConfig:
    """Flat config for the ``simulate`` command."""

    output: str = "snapshots.csv"
    n: int = 2000
    D_x: float = 8.0
    D_xy: float = 0.0
    D_y: float = 8.0
    times: list = field(default_factory=lambda: [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 24.0, 48.0])
    dt: float | None = None
    boundary: str = "reflect"
    init_spread: float = 2.0
    seed: int = 0
    length_x: float = 175.0
    length_y: float = 175.0
    v_modes: list = field(default_factory=list)  # [[n, m, weight], ...]
    k_modes: list = field(default_factory=list)  # [[n, weight], ...]
    rho0: float = 6.0
    plot_id: str = "1"
    replicate_id: str = "1"

    @classmethod
    def from_file(cls, path) -> "SimRunConfig":
        cfg = cls(**_coerce(cls, _read_flat(path)))
        if not Path(cfg.output).is_absolute():
            cfg.output = str(Path(path).parent / cfg.output)
        return cfg

    def sim_config(self):
        from .simulate import SimConfig, sigma_from_diffusion
        try:
            v = {(int(n), int(m)): float(w) for n, m, w in self.v_modes}
            k = {int(n): float(w) for n, w in self.k_modes}
        except (TypeError, ValueError) as e:
            raise ValidationError("v_modes must be [[n, m, w], ...] and k_modes [[n, w], ...]") from e
        D = np.array([[self.D_x, self.D_xy], [self.D_xy, self.D_y]], dtype=float)
        return SimConfig(n=self.n, sigma=sigma_from_diffusion(D), v_weights=v, k_weights=k,
                         rho0=self.rho0, times=tuple(float(t) for t in self.times), dt=self.dt,
                         boundary=self.boundary, init_spread=self.init_spread, seed=self.seed,
                         domain=DomainConfig(self.length_x, self.length_y))


def label_snapshots(s: SnapshotSet, plot_id: str, replicate_id: str) -> SnapshotSet:
    return SnapshotSet(s.times, s.positions, s.domain, s.z,
                       tuple(np.full(n, str(plot_id), dtype=object) for n in s.counts),
                       tuple(np.full(n, str(replicate_id), dtype=object) for n in s.counts))

