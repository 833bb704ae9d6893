"""Covariance-scaled Gaussian kernel density estimation on a space-time grid."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .data_model import Grid, SnapshotSet
from .errors import InsufficientDataError, NumericalError, ValidationError

MAHALANOBIS_CUTOFF = 6.0
_CHUNK = 256


@dataclass(frozen=True)
class CovarianceEstimate:
    cov: np.ndarray
    mean: np.ndarray
    count: int
    singular: bool


@dataclass(frozen=True, eq=False)
class DensityField:
    """Density values ``(nx, ny, nt)`` in cm^-2 sampled on ``grid``."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValidationError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")

    @property
    def mass(self) -> np.ndarray:
        """Trapezoidal spatial integral of each frame."""
        return trapezoid_mass(self.values, self.grid)

    def frame(self, k: int) -> np.ndarray:
        return self.values[:, :, k]


def trapezoid_mass(values: np.ndarray, grid: Grid) -> np.ndarray:
    inner = trapezoid(values, dx=grid.dy, axis=1)
    return trapezoid(inner, dx=grid.dx, axis=0)


def sample_covariance(positions) -> CovarianceEstimate:
    """Unbiased sample covariance (``1/(N-1)`` prefactor) and mean."""
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = p.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 positions for a covariance, got {n}")
    mean = p.mean(axis=0)
    d = p - mean
    cov = d.T @ d / (n - 1)
    cov = 0.5 * (cov + cov.T)
    eig = np.linalg.eigvalsh(cov)
    singular = bool(eig[0] <= 1e-12 * max(eig[-1], np.finfo(float).tiny))
    return CovarianceEstimate(cov, mean, n, singular)


def silverman_bandwidth(n: int) -> float:
    """Bandwidth ``h = n**(-1/6)`` for a two-dimensional Gaussian kernel."""
    if n < 1:
        raise InsufficientDataError("bandwidth needs at least one sample")
    return float(n) ** (-1.0 / 6.0)


def kernel_covariance(cov: np.ndarray, h: float) -> np.ndarray:
    """``h**2 * cov``, or an isotropic fallback when ``cov`` is singular."""
    cov = np.asarray(cov, dtype=float)
    eig = np.linalg.eigvalsh(cov)
    if eig[0] > 1e-12 * max(eig[-1], np.finfo(float).tiny):
        return h * h * cov
    var = h * h * np.trace(cov) / 2.0
    if not var > 0:
        raise InsufficientDataError("all positions coincide; kernel covariance is zero")
    warnings.warn("singular sample covariance; using an isotropic kernel", stacklevel=3)
    return var * np.eye(2)


def _gaussian_sum(points, kcov, grid: Grid, weights=None, laplacian=False) -> np.ndarray:
    prec = np.linalg.inv(kcov)
    norm = 1.0 / (2.0 * np.pi * np.sqrt(np.linalg.det(kcov)))
    X, Y = grid.mesh()
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    out = np.zeros(nodes.shape[0])
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    w = np.ones(points.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    cut2 = MAHALANOBIS_CUTOFF ** 2
    tr = np.trace(prec)
    for start in range(0, points.shape[0], _CHUNK):
        pts = points[start:start + _CHUNK]
        d = nodes[:, None, :] - pts[None, :, :]
        pd = d @ prec
        q = np.einsum("nki,nki->nk", pd, d)
        g = np.where(q <= cut2, np.exp(-0.5 * q), 0.0)
        if laplacian:
            g = g * (np.einsum("nki,nki->nk", pd, pd) - tr)
        out += g @ w[start:start + _CHUNK]
    return (norm * out).reshape(grid.spatial_shape)


def estimate_density(positions, cov: np.ndarray, h: float, grid: Grid) -> np.ndarray:
    """One KDE frame ``(1/N) sum_i G(x - x_i; h^2 C)`` on the spatial grid.

    The kernel integrates to one on the plane. Mass falling outside the
    plot is not renormalized.
    """
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    kcov = kernel_covariance(cov, h)
    return _gaussian_sum(p, kcov, grid) / p.shape[0]


def kde_bias_estimate(positions, sigma: float, kernel_cov: np.ndarray, grid: Grid) -> np.ndarray:
    """Leading-order expected KDE error from isotropic measurement noise.

    For noise ``N(0, sigma^2 I)`` on each position the expected change of
    the estimate is ``(sigma^2 / 2N) sum_i (Laplacian G)(x - x_i; C_h)``
    up to ``O(sigma^4)``. Relative to the estimate itself this is of order
    ``sigma^2 / h^2``, i.e. it scales with ``(sigma / h)``.
    """
    if sigma < 0:
        raise ValidationError("sigma must be non-negative")
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    if sigma == 0:
        return np.zeros(grid.spatial_shape)
    lap = _gaussian_sum(p, np.asarray(kernel_cov, dtype=float), grid, laplacian=True)
    return 0.5 * sigma ** 2 * lap / p.shape[0]


def interpolate_time(frames, times, t_nodes) -> np.ndarray:
    """Piecewise-linear interpolation of snapshot frames onto ``t_nodes``.

    ``frames`` has shape ``(nx, ny, n_snap)``. Every output frame is a convex
    combination of its two bracketing snapshots.
    """
    frames = np.asarray(frames, dtype=float)
    times = np.asarray(times, dtype=float)
    t_nodes = np.asarray(t_nodes, dtype=float)
    if times.size < 2 or frames.shape[-1] != times.size:
        raise ValidationError("need at least two snapshot frames matching the times")
    if t_nodes.size < times.size:
        raise ValidationError("target time count is smaller than the snapshot count")
    if t_nodes[0] < times[0] - 1e-12 or t_nodes[-1] > times[-1] + 1e-12:
        raise ValidationError("target times leave the snapshot range")
    idx = np.clip(np.searchsorted(times, t_nodes, side="right") - 1, 0, times.size - 2)
    w = (t_nodes - times[idx]) / (times[idx + 1] - times[idx])
    w = np.clip(w, 0.0, 1.0)
    return frames[..., idx] * (1.0 - w) + frames[..., idx + 1] * w


def build_density(snapshots: SnapshotSet, grid: Grid | None = None) -> DensityField:
    """KDE every snapshot and interpolate onto the uniform time grid."""
    grid = snapshots.grid() if grid is None else grid
    frames = np.empty(grid.spatial_shape + (len(snapshots),))
    for k, pos in enumerate(snapshots.positions):
        est = sample_covariance(pos)
        frames[:, :, k] = estimate_density(pos, est.cov, silverman_bandwidth(est.count), grid)
    values = interpolate_time(frames, snapshots.times, grid.t)
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite density values")
    return DensityField(values, grid)


def write_density_csv(field: DensityField, path: str | Path) -> None:
    """CSV export: metadata row, column header, then one row per node.

    Row 1 holds ``nx,ny,nt,x0,x1,y0,y1,t0,t1``; rows follow C order of
    ``values`` (x slowest, t fastest).
    """
    g = field.grid
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"nx={g.x.size}", f"ny={g.y.size}", f"nt={g.t.size}",
                    f"x0={float(g.x[0])!r}", f"x1={float(g.x[-1])!r}", f"y0={float(g.y[0])!r}", f"y1={float(g.y[-1])!r}",
                    f"t0={float(g.t[0])!r}", f"t1={float(g.t[-1])!r}"])
        w.writerow(["i", "j", "n", "u"])
        nx, ny, nt = g.shape
        ii, jj, nn = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nt), indexing="ij")
        for i, j, n, u in zip(ii.ravel(), jj.ravel(), nn.ravel(), field.values.ravel()):
            w.writerow([i, j, n, repr(float(u))])


def read_density_csv(path: str | Path) -> DensityField:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        meta = dict(item.split("=", 1) for item in next(r))
        next(r)
        vals = np.array([float(row[3]) for row in r])
    nx, ny, nt = int(meta["nx"]), int(meta["ny"]), int(meta["nt"])
    grid = Grid(np.linspace(float(meta["x0"]), float(meta["x1"]), nx),
                np.linspace(float(meta["y0"]), float(meta["y1"]), ny),
                np.linspace(float(meta["t0"]), float(meta["t1"]), nt))
    return DensityField(vals.reshape(nx, ny, nt), grid)
