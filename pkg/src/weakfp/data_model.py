"""Snapshot datasets, domain configuration and the space-time grid.

A :class:`SnapshotSet` holds unlabeled particle positions observed at a
handful of times. Particles are not tracked between frames, so every
frame is an independent ensemble whose size ``N_t`` may change over time.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import IncompatibleError, OrderingError, SchemaError, ValidationError

CSV_COLUMNS = ("time_hr", "x_cm", "y_cm", "z_cm", "plot_id", "replicate_id")
EDGE_SLACK_CM = 1.0


@dataclass(frozen=True)
class DomainConfig:
    """Rectangular plot and the default discretization used for modeling."""

    length_x: float = 175.0
    length_y: float = 175.0
    grid_nx: int = 80
    grid_ny: int = 80
    grid_nt: int = 98
    resource_rows: int = 5
    resource_cols: int = 9

    def __post_init__(self):
        if not (self.length_x > 0 and self.length_y > 0):
            raise ValidationError("domain lengths must be positive")
        if min(self.grid_nx, self.grid_ny, self.grid_nt) < 4:
            raise ValidationError("grid counts must be at least 4")


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid ``x ⊗ y ⊗ t``."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        for name in ("x", "y", "t"):
            nodes = np.asarray(getattr(self, name), dtype=float)
            if nodes.ndim != 1 or nodes.size < 2:
                raise ValidationError(f"{name}-nodes must be a 1-D array of length >= 2")
            steps = np.diff(nodes)
            if np.any(steps <= 0):
                raise ValidationError(f"{name}-nodes must be strictly increasing")
            if np.max(np.abs(steps - steps.mean())) > 1e-12 * steps.mean():
                raise ValidationError(f"{name}-nodes are not uniformly spaced")
            object.__setattr__(self, name, nodes)

    @classmethod
    def from_domain(cls, domain: DomainConfig, t0: float, tf: float, nt: int | None = None) -> "Grid":
        nt = domain.grid_nt if nt is None else nt
        return cls(
            np.linspace(0.0, domain.length_x, domain.grid_nx),
            np.linspace(0.0, domain.length_y, domain.grid_ny),
            np.linspace(t0, tf, nt),
        )

    @property
    def dx(self) -> float:
        return float((self.x[-1] - self.x[0]) / (self.x.size - 1))

    @property
    def dy(self) -> float:
        return float((self.y[-1] - self.y[0]) / (self.y.size - 1))

    @property
    def dt(self) -> float:
        return float((self.t[-1] - self.t[0]) / (self.t.size - 1))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.x.size, self.y.size, self.t.size)

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return (self.x.size, self.y.size)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Spatial node coordinates with ``indexing='ij'``."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def with_times(self, t: np.ndarray) -> "Grid":
        return Grid(self.x, self.y, np.asarray(t, dtype=float))


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Particle positions at strictly increasing observation times.

    ``positions[k]`` is an ``(N_k, 2)`` array of ``(x, y)`` in cm for
    ``times[k]``. ``z``, ``plot_ids`` and ``replicate_ids`` are parallel
    per-time arrays; ``z`` is NaN where no height was recorded.
    """

    times: np.ndarray
    positions: tuple
    domain: DomainConfig = field(default_factory=DomainConfig)
    z: tuple | None = None
    plot_ids: tuple | None = None
    replicate_ids: tuple | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValidationError("no records")
        if np.any(np.diff(times) <= 0):
            raise OrderingError("snapshot times must be strictly increasing")
        if times[0] != 0.0:
            raise ValidationError(f"first snapshot time must be 0, got {times[0]}")
        if len(self.positions) != times.size:
            raise ValidationError("one position array is required per time")
        pos = []
        for k, p in enumerate(self.positions):
            p = np.asarray(p, dtype=float).reshape(-1, 2)
            if p.shape[0] == 0:
                raise ValidationError(f"no particles at t={times[k]}")
            if not np.all(np.isfinite(p)):
                raise ValidationError(f"non-finite position at t={times[k]}")
            pos.append(p)
        counts = [p.shape[0] for p in pos]

        def per_time(arrays, fill, dtype):
            if arrays is None:
                return tuple(np.full(n, fill, dtype=dtype) for n in counts)
            if len(arrays) != len(counts):
                raise ValidationError("metadata must have one entry per time")
            out = []
            for a, n in zip(arrays, counts):
                a = np.asarray(a, dtype=dtype)
                if a.shape != (n,):
                    raise ValidationError("metadata length does not match particle count")
                out.append(a)
            return tuple(out)

        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", tuple(pos))
        object.__setattr__(self, "z", per_time(self.z, np.nan, float))
        object.__setattr__(self, "plot_ids", per_time(self.plot_ids, "1", object))
        object.__setattr__(self, "replicate_ids", per_time(self.replicate_ids, "1", object))

    @property
    def counts(self) -> np.ndarray:
        return np.array([p.shape[0] for p in self.positions])

    @property
    def total_count(self) -> int:
        """``N = N_{t_0} + ... + N_{t_F}``."""
        return int(self.counts.sum())

    def __len__(self) -> int:
        return self.times.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, SnapshotSet):
            return NotImplemented
        if self.domain != other.domain or not np.array_equal(self.times, other.times):
            return False
        for a, b in zip(self._columns(), other._columns()):
            for u, v in zip(a, b):
                if u.dtype == float:
                    if not np.array_equal(u, v, equal_nan=True):
                        return False
                elif not np.array_equal(u, v):
                    return False
        return True

    def _columns(self):
        return (self.positions, self.z, self.plot_ids, self.replicate_ids)

    def groups(self, key: str = "plot") -> list[str]:
        """Sorted distinct plot or replicate identifiers."""
        ids = self.plot_ids if key == "plot" else self.replicate_ids
        return sorted({str(v) for arr in ids for v in arr})

    def select(self, plot_ids: Iterable[str] | None = None,
               replicate_ids: Iterable[str] | None = None) -> "SnapshotSet":
        """Subset by plot and/or replicate; times left empty are dropped."""
        plots = None if plot_ids is None else {str(p) for p in plot_ids}
        reps = None if replicate_ids is None else {str(r) for r in replicate_ids}
        keep_t, cols = [], ([], [], [], [])
        for k, t in enumerate(self.times):
            mask = np.ones(self.positions[k].shape[0], dtype=bool)
            if plots is not None:
                mask &= np.array([str(v) in plots for v in self.plot_ids[k]], dtype=bool)
            if reps is not None:
                mask &= np.array([str(v) in reps for v in self.replicate_ids[k]], dtype=bool)
            if mask.any():
                keep_t.append(t)
                for col, src in zip(cols, self._columns()):
                    col.append(src[k][mask])
        if not keep_t:
            raise ValidationError("no records")
        return SnapshotSet(np.array(keep_t), tuple(cols[0]), self.domain, tuple(cols[1]),
                           tuple(cols[2]), tuple(cols[3]))

    def grid(self, nt: int | None = None) -> Grid:
        return Grid.from_domain(self.domain, self.times[0], self.times[-1], nt)


def combine(sets: Sequence[SnapshotSet]) -> SnapshotSet:
    """Superimpose several datasets into one ensemble per time."""
    sets = list(sets)
    if not sets:
        raise ValidationError("nothing to combine")
    first = sets[0]
    for s in sets[1:]:
        if s.domain != first.domain:
            raise IncompatibleError("datasets use different domains")
        if not np.array_equal(s.times, first.times):
            raise IncompatibleError(
                f"time lists differ: {first.times.tolist()} vs {s.times.tolist()}")
    cols = []
    for c in range(4):
        cols.append(tuple(np.concatenate([s._columns()[c][k] for s in sets])
                          for k in range(first.times.size)))
    return SnapshotSet(first.times.copy(), cols[0], first.domain, cols[1], cols[2], cols[3])


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def save_snapshots(snapshots: SnapshotSet, path: str | Path) -> None:
    """Write ``snapshots`` in the CSV layout read by :func:`load_snapshots`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for k, t in enumerate(snapshots.times):
            p = snapshots.positions[k]
            for i in range(p.shape[0]):
                writer.writerow([_fmt(t), _fmt(p[i, 0]), _fmt(p[i, 1]),
                                 _fmt(snapshots.z[k][i]),
                                 snapshots.plot_ids[k][i], snapshots.replicate_ids[k][i]])


def load_snapshots(path: str | Path, domain: DomainConfig | None = None) -> SnapshotSet:
    """Read and validate a snapshot CSV.

    Rows with a missing ``x_cm`` or ``y_cm`` are dropped with a single
    warning. Positions up to ``EDGE_SLACK_CM`` outside the plot are clamped
    onto its boundary; anything further out is rejected.

    Raises
    ------
    SchemaError
        Missing/unknown header columns, unparsable numbers, empty required
        fields, or an empty body.
    ValidationError
        Positions outside the domain beyond the slack.
    OrderingError
        Times decrease somewhere in the file.
    """
    domain = DomainConfig() if domain is None else domain
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("no records: file is empty") from None
        required = [c for c in CSV_COLUMNS if c != "z_cm"]
        missing = [c for c in required if c not in header]
        unknown = [c for c in header if c not in CSV_COLUMNS]
        if missing or unknown:
            raise SchemaError(f"malformed header: missing {missing}, unknown {unknown}")
        idx = {c: header.index(c) for c in header}
        rows = [r for r in reader if any(cell.strip() for cell in r)]

    if not rows:
        raise SchemaError("no records")

    times, xs, ys, zs, plots, reps = [], [], [], [], [], []
    dropped = 0
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        cell = {c: row[i].strip() for c, i in idx.items()}
        for c in ("time_hr", "plot_id", "replicate_id"):
            if not cell[c]:
                raise SchemaError(f"line {lineno}: empty {c}")
        if not cell["x_cm"] or not cell["y_cm"]:
            dropped += 1
            continue
        try:
            t = float(cell["time_hr"])
            x = float(cell["x_cm"])
            y = float(cell["y_cm"])
            z = float(cell["z_cm"]) if cell.get("z_cm") else math.nan
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
        times.append(t)
        xs.append(x)
        ys.append(y)
        zs.append(z)
        plots.append(cell["plot_id"])
        reps.append(cell["replicate_id"])

    if dropped:
        warnings.warn(f"dropped {dropped} row(s) with missing x_cm or y_cm", stacklevel=2)
    if not times:
        raise SchemaError("no records")

    t = np.array(times)
    if np.any(np.diff(t) < 0):
        bad = int(np.argmax(np.diff(t) < 0)) + 1
        raise OrderingError(f"times decrease at data row {bad + 1}: {t[bad - 1]} -> {t[bad]}")

    pos = np.column_stack([xs, ys])
    lo = np.zeros(2)
    hi = np.array([domain.length_x, domain.length_y])
    outside = np.any((pos < lo - EDGE_SLACK_CM) | (pos > hi + EDGE_SLACK_CM), axis=1)
    if outside.any():
        bad_rows = (np.flatnonzero(outside) + 1).tolist()
        raise ValidationError(f"positions outside the domain at data rows {bad_rows[:20]}")
    pos = np.clip(pos, lo, hi)

    uniq, starts = np.unique(t, return_index=True)
    bounds = list(starts) + [t.size]
    zs_arr = np.array(zs)
    plots_arr = np.array(plots, dtype=object)
    reps_arr = np.array(reps, dtype=object)
    sl = [slice(bounds[k], bounds[k + 1]) for k in range(uniq.size)]
    return SnapshotSet(
        uniq,
        tuple(pos[s] for s in sl),
        domain,
        tuple(zs_arr[s] for s in sl),
        tuple(plots_arr[s] for s in sl),
        tuple(reps_arr[s] for s in sl),
    )
