"""Euler-Maruyama simulation of the interacting-particle SDE.

``dX = -(grad V(X) + grad K * mu_t(X)) dt + sigma dB``, with ``mu_t`` the
empirical measure of the ensemble and ``D = sigma sigma^T / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .data_model import DomainConfig, Grid, SnapshotSet
from .errors import NumericalError, ValidationError
from .nondim import potential_gradient, spatial_l2
from .weakform import kernel_gradient

SURVEY_TIMES = (0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 24.0, 48.0)
_PAIR_CHUNK = 512


def sigma_from_diffusion(D) -> np.ndarray:
    """Symmetric ``sigma`` with ``sigma sigma^T / 2 = D``."""
    D = np.asarray(D, dtype=float)
    lam, Q = np.linalg.eigh(0.5 * (D + D.T))
    if lam[0] < -1e-12 * max(abs(lam[-1]), 1.0):
        raise ValidationError("D must be positive semi-definite")
    return (Q * np.sqrt(2.0 * np.clip(lam, 0.0, None))) @ Q.T


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one simulated experiment.

    ``v_weights`` maps cosine modes ``(n, m)`` to weights and ``k_weights``
    maps Bessel kernel indices ``n`` to weights. ``initial`` is either
    ``"center"`` (isotropic Gaussian cluster of std ``init_spread`` at the
    plot centre) or an ``(N, 2)`` array.
    """

    n: int = 2000
    sigma: np.ndarray = field(default_factory=lambda: np.eye(2) * 4.0)
    v_weights: dict = field(default_factory=dict)
    k_weights: dict = field(default_factory=dict)
    rho0: float = 6.0
    times: tuple = SURVEY_TIMES
    dt: float | None = None
    boundary: str = "reflect"
    initial: object = "center"
    init_spread: float = 2.0
    seed: int = 0
    domain: DomainConfig = field(default_factory=DomainConfig)

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (2, 2) or not np.all(np.isfinite(sigma)):
            raise ValidationError("sigma must be a finite 2x2 matrix")
        object.__setattr__(self, "sigma", sigma)
        times = np.asarray(self.times, dtype=float)
        if times.size < 1 or times[0] != 0 or np.any(np.diff(times) <= 0):
            raise ValidationError("times must start at 0 and increase strictly")
        object.__setattr__(self, "times", tuple(times.tolist()))
        if self.boundary not in ("reflect", "none"):
            raise ValidationError(f"unknown boundary policy {self.boundary!r}")
        if self.n < 1 and isinstance(self.initial, str):
            raise ValidationError("need at least one particle")
        if self.dt is not None:
            if not self.dt > 0:
                raise ValidationError("dt must be positive")
            if times.size > 1 and self.dt > self.max_dt * (1 + 1e-12):
                raise ValidationError(f"dt={self.dt} exceeds min snapshot gap / 10 = {self.max_dt}")

    @property
    def D(self) -> np.ndarray:
        return 0.5 * self.sigma @ self.sigma.T

    @property
    def max_dt(self) -> float:
        gaps = np.diff(self.times)
        return float(gaps.min()) / 10.0 if gaps.size else math.inf

    @property
    def step(self) -> float:
        return self.max_dt if self.dt is None else self.dt


def _initial_positions(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    if isinstance(cfg.initial, str):
        if cfg.initial != "center":
            raise ValidationError(f"unknown initial condition {cfg.initial!r}")
        c = np.array([cfg.domain.length_x, cfg.domain.length_y]) / 2.0
        return c + cfg.init_spread * rng.standard_normal((cfg.n, 2))
    x = np.array(cfg.initial, dtype=float).reshape(-1, 2)
    if x.shape[0] == 0:
        raise ValidationError("initial positions are empty")
    return x


def _reflect(x: np.ndarray, length: float) -> np.ndarray:
    y = np.mod(x, 2.0 * length)
    return np.where(y > length, 2.0 * length - y, y)


def potential_force(x: np.ndarray, v_weights: dict, length_x: float, length_y: float) -> np.ndarray:
    """``grad V`` at particle positions for a cosine-mode potential."""
    g = np.zeros_like(x)
    for (n, m), w in v_weights.items():
        if not w:
            continue
        kx, ky = 2 * np.pi * n / length_x, 2 * np.pi * m / length_y
        cx, sx = np.cos(kx * x[:, 0]), np.sin(kx * x[:, 0])
        cy, sy = np.cos(ky * x[:, 1]), np.sin(ky * x[:, 1])
        g[:, 0] -= w * kx * sx * cy
        g[:, 1] -= w * ky * cx * sy
    return g


def interaction_field(x: np.ndarray, k_weights: dict, rho0: float) -> np.ndarray:
    """``(1/N) sum_j grad K(x_i - x_j)``; the ``j = i`` term vanishes."""
    out = np.zeros_like(x)
    active = [(n, w) for n, w in k_weights.items() if w]
    if not active:
        return out
    for s in range(0, x.shape[0], _PAIR_CHUNK):
        d = x[s:s + _PAIR_CHUNK, None, :] - x[None, :, :]
        for n, w in active:
            gx, gy = kernel_gradient(n, d[..., 0], d[..., 1], rho0)
            out[s:s + _PAIR_CHUNK, 0] += w * gx.sum(axis=1)
            out[s:s + _PAIR_CHUNK, 1] += w * gy.sum(axis=1)
    return out / x.shape[0]


def simulate(config: SimConfig) -> SnapshotSet:
    """Run Euler-Maruyama and record the ensemble at ``config.times``.

    Steps between consecutive snapshots are shortened so every snapshot
    time is hit exactly; the step never exceeds ``config.step``.
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    Lx, Ly = cfg.domain.length_x, cfg.domain.length_y
    x = _initial_positions(cfg, rng)
    if cfg.boundary == "reflect":
        x[:, 0] = _reflect(x[:, 0], Lx)
        x[:, 1] = _reflect(x[:, 1], Ly)
    frames = [x.copy()]
    sig_t = cfg.sigma.T
    step_no = 0
    for t0, t1 in zip(cfg.times[:-1], cfg.times[1:]):
        n_sub = max(1, math.ceil((t1 - t0) / cfg.step - 1e-9))
        h = (t1 - t0) / n_sub
        for _ in range(n_sub):
            step_no += 1
            drift = potential_force(x, cfg.v_weights, Lx, Ly)
            if cfg.k_weights:
                drift += interaction_field(x, cfg.k_weights, cfg.rho0)
            if not np.all(np.isfinite(drift)):
                raise NumericalError(f"non-finite force at step {step_no}")
            x = x - drift * h + math.sqrt(h) * rng.standard_normal(x.shape) @ sig_t
            if cfg.boundary == "reflect":
                x[:, 0] = _reflect(x[:, 0], Lx)
                x[:, 1] = _reflect(x[:, 1], Ly)
        frames.append(x.copy())
    return SnapshotSet(np.array(cfg.times), tuple(frames), cfg.domain)


def heat_kernel_density(u0: np.ndarray, D, t: float, grid: Grid) -> np.ndarray:
    """``u0 * H_D(., t)`` with ``H_D`` the Gaussian of covariance ``2 t D``.

    Mass leaving the grid is lost (no boundary condition is imposed).
    """
    if not t > 0:
        raise ValidationError("t must be positive")
    D = np.asarray(D, dtype=float)
    cov = 2.0 * t * D
    if np.linalg.eigvalsh(cov)[0] <= 0:
        raise ValidationError("D must be positive definite")
    nx, ny = grid.spatial_shape
    ox = np.arange(-(nx - 1), nx) * grid.dx
    oy = np.arange(-(ny - 1), ny) * grid.dy
    X, Y = np.meshgrid(ox, oy, indexing="ij")
    P = np.linalg.inv(cov)
    q = P[0, 0] * X ** 2 + 2 * P[0, 1] * X * Y + P[1, 1] * Y ** 2
    H = np.exp(-0.5 * q) / (2 * np.pi * math.sqrt(np.linalg.det(cov)))
    full = signal.fftconvolve(np.asarray(u0, dtype=float), H * grid.dx * grid.dy, mode="full")
    return full[nx - 1:2 * nx - 1, ny - 1:2 * ny - 1]


def _reference_density(cfg: SimConfig, grid: Grid, t_c: float) -> np.ndarray:
    """Pure-diffusion Gaussian at ``t_c`` from the initial cluster, on ``grid``."""
    X, Y = grid.mesh()
    c = np.array([cfg.domain.length_x, cfg.domain.length_y]) / 2.0
    cov = cfg.init_spread ** 2 * np.eye(2) + 2.0 * t_c * cfg.D
    P = np.linalg.inv(cov)
    dx, dy = X - c[0], Y - c[1]
    q = P[0, 0] * dx ** 2 + 2 * P[0, 1] * dx * dy + P[1, 1] * dy ** 2
    return np.exp(-0.5 * q) / (2 * np.pi * math.sqrt(np.linalg.det(cov)))


def scale_to_groups(base: SimConfig, pi_v: float, pi_k: float, t_c: float | None = None,
                    kernel_radius: int = 30) -> SimConfig:
    """Rescale ``base`` potentials so ``V_c / D = pi_v`` and ``t_c K_c U_c = pi_k``.

    ``D`` is the mean diagonal of ``sigma sigma^T / 2``. ``U_c`` and ``K_c``
    are taken from the pure-diffusion Gaussian at ``t_c`` (default: last
    snapshot time), since the true density is not known in advance.
    """
    d = 0.5 * float(np.trace(base.D))
    if not d > 0:
        raise ValidationError("regime scaling needs positive diffusion")
    t_c = base.times[-1] if t_c is None else t_c
    grid = Grid.from_domain(base.domain, 0.0, max(t_c, 1.0))
    v_w, k_w = dict(base.v_weights), dict(base.k_weights)
    if pi_v:
        if not v_w:
            raise ValidationError("pi_v > 0 needs base v_weights")
        v_c = spatial_l2(*potential_gradient(v_w, grid, base.domain.length_x,
                                             base.domain.length_y), grid)
        v_w = {k: w * pi_v * d / v_c for k, w in v_w.items()}
    else:
        v_w = {}
    if pi_k:
        if not k_w:
            raise ValidationError("pi_k > 0 needs base k_weights")
        u = _reference_density(base, grid, t_c)
        off = np.arange(-kernel_radius, kernel_radius + 1)
        DX, DY = np.meshgrid(off * grid.dx, off * grid.dy, indexing="ij")
        kx = sum(w * kernel_gradient(n, DX, DY, base.rho0)[0] for n, w in k_w.items())
        ky = sum(w * kernel_gradient(n, DX, DY, base.rho0)[1] for n, w in k_w.items())
        a = grid.dx * grid.dy
        k_c = spatial_l2(signal.fftconvolve(u, kx, mode="same") * a,
                         signal.fftconvolve(u, ky, mode="same") * a, grid)
        k_w = {k: w * pi_k / (t_c * k_c * u.max()) for k, w in k_w.items()}
    else:
        k_w = {}
    return replace(base, v_weights=v_w, k_weights=k_w)


def regime_gallery(pi_v_list, pi_k_list, base: SimConfig | None = None) -> list:
    """One simulation per ``(pi_v, pi_k)`` pair, row-major over the two lists.

    Returns ``[(pi_v, pi_k, SnapshotSet), ...]``. Every run reuses the base
    seed so differences come from the potentials alone.
    """
    if len(pi_v_list) == 0 or len(pi_k_list) == 0:
        raise ValidationError("regime lists must be nonempty")
    base = base or SimConfig(n=500, v_weights={(2, 4): 1.0}, k_weights={1: 1.0})
    return [(pv, pk, simulate(scale_to_groups(base, pv, pk)))
            for pv in pi_v_list for pk in pi_k_list]
