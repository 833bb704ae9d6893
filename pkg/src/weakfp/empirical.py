"""Model-free diffusion estimates computed directly from snapshots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data_model import SnapshotSet
from .errors import InsufficientDataError, ValidationError
from .kde import sample_covariance

RADIAL_COEFF = math.pi  # E|x_t - x_0| = sqrt(pi D t) in two dimensions
MARGINAL_COEFF = 4.0 / math.pi  # E|x_j - mu_j|^2 = (4 / pi) D_jj t


@dataclass
class DiffusionEstimate:
    """Diffusion estimate in cm^2/hr.

    ``D`` holds the matrix entries an estimator provides (NaN elsewhere);
    ``delta`` holds ``2 sigma`` uncertainties in the same layout once a
    bootstrap has been run.
    """

    D: np.ndarray
    d_eff: float
    method: str
    axis: str | None = None
    delta: np.ndarray = field(default_factory=lambda: np.full((2, 2), np.nan))
    delta_eff: float = math.nan
    per_time: dict = field(default_factory=dict)
    zero_variance: bool = False


def _center0(snapshots: SnapshotSet) -> np.ndarray:
    return snapshots.positions[0].mean(axis=0)


def covariance_rate(snapshots: SnapshotSet, weighted: bool = False) -> DiffusionEstimate:
    """``D_t = C_t / (2 t)`` for every frame with ``t > 0``, then averaged.

    The default is the plain mean over frames. ``weighted=True`` weights
    each frame by ``t`` so later, less initial-condition-dominated frames
    count more.
    """
    use = [k for k, t in enumerate(snapshots.times) if t > 0 and snapshots.counts[k] >= 2]
    if not use:
        raise InsufficientDataError("covariance rate needs a frame with t > 0 and N_t >= 2")
    if snapshots.counts[0] < 1 or len(snapshots) < 2:
        raise InsufficientDataError("need at least two snapshot times")
    times = snapshots.times[use]
    d_t = np.array([sample_covariance(snapshots.positions[k]).cov / (2.0 * snapshots.times[k])
                    for k in use])
    w = times / times.sum() if weighted else np.full(times.size, 1.0 / times.size)
    D = np.tensordot(w, d_t, axes=1)
    return DiffusionEstimate(D=D, d_eff=0.5 * float(np.trace(D)), method="covariance-rate",
                             per_time={"t": times, "D_t": d_t})


def fit_sqrt_curve(times, mean_disp, coeff: float) -> float:
    """``argmin_D sum_n (m_n - sqrt(coeff D t_n))^2`` over ``D >= 0``."""
    t = np.asarray(times, dtype=float)
    m = np.asarray(mean_disp, dtype=float)
    a = np.sqrt(coeff * t)
    denom = float(a @ a)
    if denom == 0:
        raise InsufficientDataError("all fit times are zero")
    s = float(a @ m) / denom
    return s * s if s > 0 else 0.0


def displacement_curve(snapshots: SnapshotSet, axis: str = "radial") -> tuple[np.ndarray, np.ndarray]:
    """Mean displacement from the initial centre of mass, minus its t=0 value.

    ``axis`` is ``radial`` (Euclidean distance in the plane) or one of
    ``x``, ``y``, ``z`` (absolute marginal offset).
    """
    values = _displacements(snapshots, axis)
    means = np.array([v.mean() if v.size else np.nan for v in values])
    return snapshots.times.copy(), means - means[0]


def _displacements(snapshots: SnapshotSet, axis: str) -> list:
    if axis == "radial":
        c = _center0(snapshots)
        return [np.linalg.norm(p - c, axis=1) for p in snapshots.positions]
    if axis in ("x", "y"):
        j = "xy".index(axis)
        c = _center0(snapshots)[j]
        return [np.abs(p[:, j] - c) for p in snapshots.positions]
    if axis == "z":
        z0 = snapshots.z[0][np.isfinite(snapshots.z[0])]
        if z0.size == 0:
            raise InsufficientDataError("no z values at t=0")
        c = z0.mean()
        return [np.abs(z[np.isfinite(z)] - c) for z in snapshots.z]
    raise ValidationError(f"unknown axis {axis!r}")


def fit_displacement(snapshots: SnapshotSet, axis: str = "radial") -> DiffusionEstimate:
    """Fit ``sqrt(pi D t)`` (radial) or ``sqrt(4 D t / pi)`` (marginal) to mean displacements."""
    if len(snapshots) < 3:
        raise InsufficientDataError("displacement fit needs at least 3 times")
    t, m = displacement_curve(snapshots, axis)
    ok = np.isfinite(m)
    coeff = RADIAL_COEFF if axis == "radial" else MARGINAL_COEFF
    degenerate = bool(np.all(m[ok] == 0))
    value = 0.0 if degenerate else fit_sqrt_curve(t[ok], m[ok], coeff)
    D = np.full((2, 2), np.nan)
    d_eff = math.nan
    if axis == "radial":
        d_eff = value
    elif axis in ("x", "y"):
        j = "xy".index(axis)
        D[j, j] = value
    else:
        d_eff = math.nan
    est = DiffusionEstimate(D=D, d_eff=d_eff, method="displacement-fit", axis=axis,
                            per_time={"t": t, "mean_displacement": m}, zero_variance=degenerate)
    if axis == "z":
        est.per_time["D_z"] = value
    return est


def resample_snapshots(snapshots: SnapshotSet, rng: np.random.Generator) -> SnapshotSet:
    """Draw each frame with replacement, independently across frames."""
    cols = ([], [], [], [])
    for k, n in enumerate(snapshots.counts):
        idx = rng.integers(0, n, size=n)
        for col, src in zip(cols, snapshots._columns()):
            col.append(src[k][idx])
    return SnapshotSet(snapshots.times, tuple(cols[0]), snapshots.domain, tuple(cols[1]),
                       tuple(cols[2]), tuple(cols[3]))


def bootstrap_se(statistic: Callable, data, n_boot: int = 1000, seed: int = 0,
                 return_samples: bool = False):
    """Bootstrap standard deviation and 2.5-97.5% percentile interval.

    ``data`` is a :class:`SnapshotSet` (frames resampled independently) or
    an array resampled along its first axis. Replicate ``i`` draws from its
    own stream spawned from ``seed``, so results do not depend on
    evaluation order. With fewer than two replicates there is no spread to
    measure: the standard error is 0 and the interval collapses onto the
    point estimate.
    """
    if isinstance(data, SnapshotSet):
        resample = resample_snapshots
    else:
        data = np.asarray(data)
        if data.shape[0] == 0:
            raise InsufficientDataError("bootstrap needs data")

        def resample(d, rng):
            return d[rng.integers(0, d.shape[0], size=d.shape[0])]

    point = np.asarray(statistic(data), dtype=float)
    if n_boot < 2:
        out = (np.zeros_like(point), (point.copy(), point.copy()))
        return out + (point[None],) if return_samples else out
    streams = np.random.SeedSequence(seed).spawn(n_boot)
    samples = np.array([statistic(resample(data, np.random.default_rng(s))) for s in streams],
                       dtype=float)
    se = samples.std(axis=0, ddof=1)
    lo, hi = np.percentile(samples, [2.5, 97.5], axis=0)
    out = (se, (lo, hi))
    return out + (samples,) if return_samples else out


def with_bootstrap(estimate_fn: Callable, snapshots: SnapshotSet, n_boot: int = 1000,
                   seed: int = 0, **kw) -> DiffusionEstimate:
    """Run an estimator and attach ``2 sigma`` bootstrap uncertainties."""
    est = estimate_fn(snapshots, **kw)

    def stat(s):
        e = estimate_fn(s, **kw)
        return np.concatenate([e.D.ravel(), [e.d_eff]])

    se, _ = bootstrap_se(stat, snapshots, n_boot, seed)
    est.delta = 2.0 * se[:4].reshape(2, 2)
    est.delta_eff = 2.0 * float(se[4])
    return est


def displacement_table(snapshots: SnapshotSet, n_boot: int = 1000, seed: int = 0) -> list[dict]:
    """Per-time radial and marginal mean displacements with bootstrap CIs.

    Displacements are raw distances from the initial centre of mass (not
    offset by their t=0 value), matching what a violin plot would show.
    """
    rows = []
    axes = ["radial", "x", "y"]
    has_z = any(np.isfinite(z).any() for z in snapshots.z) and np.isfinite(snapshots.z[0]).any()
    if has_z:
        axes.append("z")
    per_axis = {a: _displacements(snapshots, a) for a in axes}
    for k, t in enumerate(snapshots.times):
        row = {"time_hr": float(t), "n": int(snapshots.counts[k])}
        for a in axes:
            v = per_axis[a][k]
            if v.size == 0:
                row.update({f"mean_{a}": math.nan, f"ci_lo_{a}": math.nan, f"ci_hi_{a}": math.nan})
                continue
            _, (lo, hi) = bootstrap_se(np.mean, v, n_boot, seed + k)
            row.update({f"mean_{a}": float(v.mean()), f"ci_lo_{a}": float(lo),
                        f"ci_hi_{a}": float(hi)})
        rows.append(row)
    return rows
