"""Characteristic scales and dimensionless groups of a learned model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.integrate import trapezoid

from .data_model import Grid
from .errors import NumericalError, ValidationError
from .kde import DensityField, trapezoid_mass
from .weakform import (LibrarySpec, env_basis_gradients, interaction_force,
                       interaction_kernel_fields)


@dataclass(frozen=True)
class ScaleSet:
    """``x = A xi``, ``t = t_c tau`` plus magnitudes of u, V and K."""

    A: np.ndarray
    t_c: float
    U_c: float
    V_c: float
    K_c: float
    empty: bool = False

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.shape != (2, 2) or not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValidationError("A must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(A)[0] <= 0:
            raise ValidationError("A must be positive definite")
        if not self.t_c > 0:
            raise ValidationError("t_c must be positive")

    @property
    def Lambda(self) -> np.ndarray:
        A = np.asarray(self.A, dtype=float)
        return A.T @ A


@dataclass(frozen=True)
class PiGroups:
    pi_v: np.ndarray
    pi_k: np.ndarray
    pi_d: np.ndarray
    iso_pi_v: float | None = None  # only when D is a multiple of I
    iso_pi_k: float | None = None

    def norms(self) -> dict:
        """Spectral norms of each group."""
        return {name: float(np.linalg.norm(getattr(self, name), 2))
                for name in ("pi_v", "pi_k", "pi_d")}


def spatial_l2(gx: np.ndarray, gy: np.ndarray, grid: Grid) -> float:
    """``(int |g|^2 dx dy)^(1/2)`` by the trapezoid rule."""
    sq = gx ** 2 + gy ** 2
    return math.sqrt(float(trapezoid(trapezoid(sq, dx=grid.dy, axis=1), dx=grid.dx, axis=0)))


def potential_gradient(v_weights: dict, grid: Grid, length_x: float, length_y: float):
    gx = np.zeros(grid.spatial_shape)
    gy = np.zeros(grid.spatial_shape)
    for (n, m), w in v_weights.items():
        if w:
            ax, ay = env_basis_gradients(n, m, grid, length_x, length_y)
            gx += w * ax
            gy += w * ay
    return gx, gy


def interaction_scale(k_weights: dict, density: DensityField, rho0: float, radius: int) -> float:
    """Time-RMS of ``||grad K_w * u(., t)||_2`` over the density's frames."""
    grid = density.grid
    active = {n: w for n, w in k_weights.items() if w}
    if not active:
        return 0.0
    grads = interaction_kernel_fields(max(active), rho0, radius, grid)
    kx = sum(w * grads[n][0] for n, w in active.items())
    ky = sum(w * grads[n][1] for n, w in active.items())
    sq = np.array([spatial_l2(*interaction_force((kx, ky), density.frame(k), grid), grid) ** 2
                   for k in range(grid.t.size)])
    if grid.t.size == 1:
        return math.sqrt(sq[0])
    return math.sqrt(float(trapezoid(sq, grid.t)) / (grid.t[-1] - grid.t[0]))


def split_weights(labels, weights) -> tuple[dict, dict, dict]:
    """Physical weights by label -> (V modes, K kernels, diffusion entries)."""
    v, k, d = {}, {}, {}
    for lab, w in zip(labels, weights):
        if lab.startswith("V["):
            n, m = (int(s) for s in lab[2:-1].split(","))
            v[(n, m)] = float(w)
        elif lab.startswith("K["):
            k[int(lab[2:-1])] = float(w)
        else:
            d[lab] = float(w)
    return v, k, d


def characteristic_scales(model, density: DensityField, lib: LibrarySpec | None = None,
                          length_x: float | None = None, length_y: float | None = None,
                          t_c: float | None = None, D=None, term_scales=None) -> ScaleSet:
    """Scales ``U_c = max u``, ``V_c = ||grad V_w||_2``, ``K_c = ||grad K_w * u||_2``.

    ``model`` needs ``labels`` and ``weights``; ``term_scales`` converts the
    weights to physical units when they were fit on rescaled columns.
    ``A`` is diffusion-centric, ``(D t_c)^(1/2)``, when an SPD ``D`` is
    given and the identity (cm) otherwise.
    """
    lib = LibrarySpec() if lib is None else lib
    grid = density.grid
    length_x = grid.x[-1] - grid.x[0] if length_x is None else length_x
    length_y = grid.y[-1] - grid.y[0] if length_y is None else length_y
    t_c = float(grid.t[-1] - grid.t[0]) if t_c is None else float(t_c)
    w = np.asarray(model.weights, dtype=float)
    if term_scales is not None:
        w = w * np.asarray(term_scales, dtype=float)
    v_w, k_w, _ = split_weights(model.labels, w)
    V_c = spatial_l2(*potential_gradient(v_w, grid, length_x, length_y), grid) if v_w else 0.0
    K_c = interaction_scale(k_w, density, lib.rho0, lib.kernel_radius) if k_w else 0.0
    A = np.eye(2)
    if D is not None:
        D = np.asarray(D, dtype=float)
        if np.linalg.eigvalsh(0.5 * (D + D.T))[0] > 0:
            A = diffusion_centric_A(D, t_c)
    return ScaleSet(A, t_c, float(np.max(density.values)), V_c, K_c, empty=not np.any(w))


def diffusion_centric_A(D, t_c: float) -> np.ndarray:
    """Symmetric square root of ``D t_c``."""
    D = np.asarray(D, dtype=float)
    lam, Q = np.linalg.eigh(0.5 * (D + D.T) * t_c)
    if lam[0] <= 0:
        raise ValidationError("D must be positive definite for diffusion-centric coordinates")
    A = (Q * np.sqrt(lam)) @ Q.T
    return 0.5 * (A + A.T)


def pi_groups(scales: ScaleSet, D) -> PiGroups:
    """``Pi_V = t_c V_c Lambda^-1``, ``Pi_K = t_c K_c U_c |Lambda|^(1/2) Lambda^-1``,
    ``Pi_D = t_c A^-1 D A^-1``."""
    D = np.asarray(D, dtype=float)
    if D.shape != (2, 2):
        raise ValidationError("D must be 2x2")
    if abs(np.linalg.det(D)) <= 1e-14 * max(np.abs(D).max(), 1e-300) ** 2:
        raise NumericalError("diffusion matrix is singular")
    A = np.asarray(scales.A, dtype=float)
    Ainv = sla.inv(A)
    lam_inv = Ainv @ Ainv.T
    det_lam = np.linalg.det(scales.Lambda)
    t_c = scales.t_c
    pi_v = t_c * scales.V_c * lam_inv
    pi_k = t_c * scales.K_c * scales.U_c * math.sqrt(det_lam) * lam_inv
    pi_d = t_c * Ainv @ D @ Ainv
    iso_v = iso_k = None
    if abs(D[0, 1]) <= 1e-12 * abs(D[0, 0]) and abs(D[1, 0]) <= 1e-12 * abs(D[0, 0]) \
            and math.isclose(D[0, 0], D[1, 1], rel_tol=1e-12):
        iso_v = scales.V_c / D[0, 0]
        iso_k = t_c * scales.K_c * scales.U_c
    return PiGroups(pi_v, pi_k, pi_d, iso_v, iso_k)


def boltzmann_stationary(V: np.ndarray, pi_v: float, grid: Grid) -> np.ndarray:
    """``exp(-Pi_V V)`` normalized to unit trapezoidal mass."""
    V = np.asarray(V, dtype=float)
    if not np.all(np.isfinite(V)):
        raise ValidationError("potential must be finite")
    e = -pi_v * V
    u = np.exp(e - e.max())
    return u / trapezoid_mass(u, grid)
