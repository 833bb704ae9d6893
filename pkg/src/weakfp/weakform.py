"""Discrete weak-form linear system ``b = G w`` for the Fokker-Planck library.

Test functions are separable piecewise polynomials
``psi(x, y, t) = phi_x(x) phi_y(y) phi_t(t)`` with
``phi(s) = (1 - (s / (m * delta))**2)**p`` on ``[-m delta, m delta]``.
All convolutions are true convolutions against the *unreflected* test
function, which makes every library column enter with a plus sign:

    psi_t * u = grad(psi) . * (u grad V) + grad(psi) . * (u (grad K * u))
                + div(D grad psi) * u

Quadrature (trapezoidal) weights are folded into the stencils once.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal, special

from .data_model import Grid
from .errors import IncompatibleError, NumericalError, ValidationError
from .kde import DensityField

DEFAULT_SUPPORT = (10, 10, 6)
DEFAULT_MAX_ORDERS = (2, 2, 1)
DEFAULT_TAU0 = 1e-10


def test_function_degree(m: int, max_order: int, tau0: float = DEFAULT_TAU0) -> int:
    """Smallest degree whose value one node inside the support edge is ``<= tau0``.

    ``p = max(ceil(ln tau0 / ln((2m - 1) / m^2)), max_order + 1)``.
    """
    if m < 2:
        raise ValidationError("support radius must be at least 2 cells")
    ratio = math.log((2 * m - 1) / m ** 2)
    p = math.ceil(math.log(tau0) / ratio) if tau0 < 1 else 0
    return max(p, max_order + 1)


@dataclass(frozen=True)
class TestFunctionSpec:
    """Support radii ``m`` (grid cells) and degrees ``p`` per axis ``(x, y, t)``."""

    __test__ = False  # not a pytest class

    m: tuple = DEFAULT_SUPPORT
    p: tuple | None = None
    tau0: float = DEFAULT_TAU0
    max_orders: tuple = DEFAULT_MAX_ORDERS

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        orders = tuple(int(v) for v in self.max_orders)
        if len(m) != 3 or len(orders) != 3:
            raise ValidationError("m and max_orders need one entry per axis")
        p = self.p
        if p is None:
            p = tuple(test_function_degree(mi, ai, self.tau0) for mi, ai in zip(m, orders))
        p = tuple(int(v) for v in p)
        if any(pi < ai + 1 for pi, ai in zip(p, orders)):
            raise ValidationError(f"degrees {p} too low for derivative orders {orders}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "max_orders", orders)

    def check_grid(self, grid: Grid) -> None:
        for mi, n, name in zip(self.m, grid.shape, "xyt"):
            if not 2 * mi < n:
                raise ValidationError(f"{name}-support 2*{mi}+1 does not fit in {n} nodes")

    def query_shape(self, grid: Grid) -> tuple[int, int, int]:
        self.check_grid(grid)
        return tuple(n - 2 * mi for n, mi in zip(grid.shape, self.m))


def query_point_count(grid_shape, m=DEFAULT_SUPPORT) -> int:
    """Number of interior nodes where the whole support fits."""
    return int(np.prod([n - 2 * mi for n, mi in zip(grid_shape, m)]))


def axis_stencil(m: int, p: int, delta: float) -> np.ndarray:
    """``phi``, ``phi'`` and ``phi''`` at offsets ``-m..m``, times quadrature weights.

    Returns an array of shape ``(3, 2m + 1)``.
    """
    s = np.arange(-m, m + 1) / m
    a = m * delta
    q = 1.0 - s * s
    phi = q ** p
    d1 = -2.0 * p * s * q ** (p - 1) / a
    d2 = (-2.0 * p * q ** (p - 1) + 4.0 * p * (p - 1) * s * s * q ** max(p - 2, 0)) / a ** 2
    out = np.vstack([phi, d1, d2])
    out[:, [0, -1]] = 0.0  # exact zeros at the support edge
    w = np.full(2 * m + 1, delta)
    w[[0, -1]] *= 0.5
    return out * w


@dataclass(frozen=True)
class Stencils:
    """Per-axis weighted stencils, each ``(3, 2m + 1)``: value, 1st, 2nd derivative."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    m: tuple


def build_stencils(spec: TestFunctionSpec, grid: Grid) -> Stencils:
    spec.check_grid(grid)
    (mx, my, mt), (px, py, pt) = spec.m, spec.p
    return Stencils(axis_stencil(mx, px, grid.dx), axis_stencil(my, py, grid.dy),
                    axis_stencil(mt, pt, grid.dt), spec.m)


def _banded(stencil: np.ndarray, n: int) -> np.ndarray:
    """Matrix of the 'valid' 1-D convolution with ``stencil`` on ``n`` nodes."""
    width = stencil.size
    rows = n - width + 1
    mat = np.zeros((rows, n))
    rev = stencil[::-1]
    for k in range(rows):
        mat[k, k:k + width] = rev
    return mat


class SeparableConvolver:
    """Valid-region convolutions with products of per-axis stencils."""

    def __init__(self, stencils: Stencils, shape: tuple[int, int, int]):
        self.shape = tuple(shape)
        nx, ny, nt = shape
        self._mx = [_banded(stencils.x[d], nx) for d in range(3)]
        self._my = [_banded(stencils.y[d], ny) for d in range(3)]
        self._mt = [_banded(stencils.t[d], nt) for d in range(2)]

    def time(self, field: np.ndarray, order: int) -> np.ndarray:
        return field @ self._mt[order].T

    def space(self, field: np.ndarray, ox: int, oy: int) -> np.ndarray:
        out = np.tensordot(self._mx[ox], field, axes=(1, 0))
        return np.matmul(self._my[oy], out)

    def full(self, field: np.ndarray, ox: int, oy: int, ot: int) -> np.ndarray:
        return self.space(self.time(field, ot), ox, oy)


def fft_convolve(field: np.ndarray, stencil: np.ndarray) -> np.ndarray:
    """Valid-region N-D convolution via FFT."""
    return signal.fftconvolve(field, stencil, mode="valid")


def direct_convolve(field: np.ndarray, stencil: np.ndarray) -> np.ndarray:
    """Valid-region N-D convolution by summing shifted slices."""
    field = np.asarray(field, dtype=float)
    stencil = np.asarray(stencil, dtype=float)
    out_shape = tuple(f - s + 1 for f, s in zip(field.shape, stencil.shape))
    if any(n < 1 for n in out_shape):
        raise ValidationError("stencil larger than field")
    out = np.zeros(out_shape)
    flipped = stencil[(slice(None, None, -1),) * stencil.ndim]
    for idx in np.ndindex(*stencil.shape):
        w = flipped[idx]
        if w != 0.0:
            sl = tuple(slice(i, i + n) for i, n in zip(idx, out_shape))
            out += w * field[sl]
    return out


def env_basis_gradients(n: int, m: int, grid: Grid, length_x: float, length_y: float):
    """``(dV/dx, dV/dy)`` of ``V = cos(2 pi n x / L) cos(2 pi m y / W)``."""
    X, Y = grid.mesh()
    kx, ky = 2 * np.pi * n / length_x, 2 * np.pi * m / length_y
    gx = -kx * np.sin(kx * X) * np.cos(ky * Y)
    gy = -ky * np.cos(kx * X) * np.sin(ky * Y)
    return gx, gy


def env_basis_fields(j_v: int, grid: Grid, length_x: float | None = None,
                     length_y: float | None = None) -> dict:
    """Gradient fields of every cosine mode ``1 <= n, m <= j_v``.

    The constant mode is excluded, so each potential (and gradient) has
    zero mean over a full period.
    """
    if j_v < 1:
        raise ValidationError("j_v must be >= 1")
    length_x = grid.x[-1] - grid.x[0] if length_x is None else length_x
    length_y = grid.y[-1] - grid.y[0] if length_y is None else length_y
    if min(grid.x.size, grid.y.size) < 4 * j_v:
        warnings.warn(f"grid {grid.spatial_shape} may alias cosine modes up to {j_v}",
                      stacklevel=2)
    return {(n, m): env_basis_gradients(n, m, grid, length_x, length_y)
            for n in range(1, j_v + 1) for m in range(1, j_v + 1)}


def env_potential(weights: dict, grid: Grid, length_x: float, length_y: float) -> np.ndarray:
    """``V_w(x, y) = sum w_nm cos(2 pi n x / L) cos(2 pi m y / W)`` on the grid."""
    X, Y = grid.mesh()
    out = np.zeros_like(X)
    for (n, m), w in weights.items():
        out += w * np.cos(2 * np.pi * n * X / length_x) * np.cos(2 * np.pi * m * Y / length_y)
    return out


def kernel_value(n: int, rho, rho0: float):
    """``K_n(rho) = j_{n-1}(rho / rho0)``."""
    return special.spherical_jn(n - 1, np.asarray(rho, dtype=float) / rho0)


def kernel_radial_derivative(n: int, rho, rho0: float):
    """``d K_n / d rho``."""
    return special.spherical_jn(n - 1, np.asarray(rho, dtype=float) / rho0, derivative=True) / rho0


def kernel_gradient(n: int, dx, dy, rho0: float):
    """``grad K_n = (x / rho) K_n'(rho)``, set to zero at ``rho = 0``."""
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    rho = np.hypot(dx, dy)
    kp = kernel_radial_derivative(n, rho, rho0)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(rho > 0, kp / np.where(rho > 0, rho, 1.0), 0.0)
    return dx * scale, dy * scale


def interaction_kernel_fields(j_k: int, rho0: float, radius: int, grid: Grid) -> dict:
    """Gradient stencils of each Bessel kernel on a ``(2 radius + 1)^2`` patch."""
    if radius < 1:
        raise ValidationError("kernel radius must be at least one cell")
    off = np.arange(-radius, radius + 1)
    DX, DY = np.meshgrid(off * grid.dx, off * grid.dy, indexing="ij")
    return {n: kernel_gradient(n, DX, DY, rho0) for n in range(1, j_k + 1)}


def interaction_force(kernel_grad, frame: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """``(grad K * u)`` for one spatial frame, zero outside the domain."""
    w = grid.dx * grid.dy
    gx, gy = kernel_grad
    return (signal.fftconvolve(frame, gx, mode="same") * w,
            signal.fftconvolve(frame, gy, mode="same") * w)


@dataclass(frozen=True)
class LibrarySpec:
    """Candidate terms. Column order: V modes, K kernels, then diffusion."""

    j_v: int = 9
    j_k: int = 5
    rho0: float = 6.0
    kernel_radius: int = 30
    include_v: bool = True
    include_k: bool = False
    include_d: bool = True
    include_deff_only: bool = False

    @property
    def n_terms(self) -> int:
        n = self.j_v ** 2 * self.include_v + self.j_k * self.include_k
        if self.include_deff_only:
            return n + 1
        return n + 3 * self.include_d

    @classmethod
    def family(cls, name: str, **kw) -> "LibrarySpec":
        """Library for a model family: ``full``, ``anisotropic`` or ``effective``."""
        if name == "full":
            return cls(**kw)
        if name in ("anisotropic", "anisotropic-diffusive"):
            return cls(**{**kw, "include_v": False, "include_k": False})
        if name in ("effective", "effective-diffusive"):
            return cls(**{**kw, "include_v": False, "include_k": False,
                          "include_deff_only": True})
        raise ValidationError(f"unknown model family {name!r}")


@dataclass(frozen=True)
class Term:
    kind: str  # "V", "K", "D" or "Deff"
    index: tuple

    @property
    def label(self) -> str:
        if self.kind == "V":
            return f"V[{self.index[0]},{self.index[1]}]"
        if self.kind == "K":
            return f"K[{self.index[0]}]"
        if self.kind == "D":
            return {"xx": "D_x", "xy": "D_xy", "yy": "D_y"}[self.index[0]]
        return "D_eff"


DIFFUSION_LABELS = ("D_x", "D_xy", "D_y")


@dataclass(eq=False)
class WeakSystem:
    """Assembled ``b`` and ``G`` plus what each column means.

    ``G[:, j]`` equals the physical column times ``scales[j]``; the
    physical weight of term ``j`` is therefore ``w[j] * scales[j]``.
    """

    G: np.ndarray
    b: np.ndarray
    terms: list
    query_shape: tuple
    offset: tuple
    scales: np.ndarray = field(default=None)
    u_c: float = 1.0

    def __post_init__(self):
        if self.scales is None:
            self.scales = np.ones(self.G.shape[1])

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    @property
    def n_query(self) -> int:
        return self.G.shape[0]

    def query_indices(self) -> np.ndarray:
        """Grid indices ``(i, j, n)`` of each row, in row order."""
        idx = np.indices(self.query_shape).reshape(3, -1).T
        return idx + np.asarray(self.offset)

    def physical_weights(self, w: np.ndarray) -> np.ndarray:
        return np.asarray(w) * self.scales

    def subset(self, labels) -> "WeakSystem":
        keep = [self.labels.index(lab) for lab in labels]
        return WeakSystem(self.G[:, keep], self.b, [self.terms[k] for k in keep],
                          self.query_shape, self.offset, self.scales[keep], self.u_c)

    def save(self, path: str | Path) -> None:
        """Write ``G``, ``b`` and term descriptors to an ``.npz`` archive.

        Keys: ``G`` (kappa x J float64), ``b`` (kappa), ``scales`` (J),
        ``query_shape`` (3 ints), ``offset`` (3 ints), ``u_c`` (scalar) and
        ``terms`` (JSON list of ``[kind, index]``).
        """
        np.savez(path, G=self.G, b=self.b, scales=self.scales,
                 query_shape=np.array(self.query_shape), offset=np.array(self.offset),
                 u_c=np.array(self.u_c),
                 terms=np.array(json.dumps([[t.kind, list(t.index)] for t in self.terms])))

    @classmethod
    def load(cls, path: str | Path) -> "WeakSystem":
        with np.load(path) as z:
            terms = [Term(k, tuple(i)) for k, i in json.loads(str(z["terms"]))]
            return cls(z["G"], z["b"], terms, tuple(int(v) for v in z["query_shape"]),
                       tuple(int(v) for v in z["offset"]), z["scales"], float(z["u_c"]))


def assemble(density: DensityField, lib: LibrarySpec | None = None,
             tf: TestFunctionSpec | None = None, length_x: float | None = None,
             length_y: float | None = None) -> WeakSystem:
    """Build ``b`` and ``G`` at every interior query point of ``density``.

    ``length_x``/``length_y`` set the period of the cosine basis and default
    to the grid extent.
    """
    lib = LibrarySpec() if lib is None else lib
    tf = TestFunctionSpec() if tf is None else tf
    grid = density.grid
    u = density.values
    bad = ~np.isfinite(u)
    if bad.any():
        frames = sorted(set(np.nonzero(bad)[2].tolist()))
        raise NumericalError(f"non-finite density in time frame(s) {frames[:10]}")
    qshape = tf.query_shape(grid)
    conv = SeparableConvolver(build_stencils(tf, grid), grid.shape)
    length_x = grid.x[-1] - grid.x[0] if length_x is None else length_x
    length_y = grid.y[-1] - grid.y[0] if length_y is None else length_y

    columns, terms, scales = [], [], []
    b = conv.full(u, 0, 0, 1).ravel()
    u_t = conv.time(u, 0)  # time-smoothed data, reused by time-independent terms

    if lib.include_v:
        for (n, m), (gx, gy) in env_basis_fields(lib.j_v, grid, length_x, length_y).items():
            col = conv.space(u_t * gx[:, :, None], 1, 0) + conv.space(u_t * gy[:, :, None], 0, 1)
            columns.append(col.ravel())
            terms.append(Term("V", (n, m)))
            scales.append(1.0)

    u_c = float(np.max(u))
    if lib.include_k:
        if not u_c > 0:
            raise NumericalError("density is identically zero; cannot scale interaction terms")
        for n, kgrad in interaction_kernel_fields(lib.j_k, lib.rho0, lib.kernel_radius, grid).items():
            fx = np.empty_like(u)
            fy = np.empty_like(u)
            for k in range(u.shape[2]):
                cx, cy = interaction_force(kgrad, u[:, :, k], grid)
                fx[:, :, k] = u[:, :, k] * cx
                fy[:, :, k] = u[:, :, k] * cy
            col = (conv.full(fx, 1, 0, 0) + conv.full(fy, 0, 1, 0)) / u_c
            columns.append(col.ravel())
            terms.append(Term("K", (n,)))
            scales.append(1.0 / u_c)

    if lib.include_deff_only:
        columns.append((conv.space(u_t, 2, 0) + conv.space(u_t, 0, 2)).ravel())
        terms.append(Term("Deff", ()))
        scales.append(1.0)
    elif lib.include_d:
        columns.append(conv.space(u_t, 2, 0).ravel())
        columns.append(2.0 * conv.space(u_t, 1, 1).ravel())
        columns.append(conv.space(u_t, 0, 2).ravel())
        terms += [Term("D", ("xx",)), Term("D", ("xy",)), Term("D", ("yy",))]
        scales += [1.0, 1.0, 1.0]

    if not columns:
        raise ValidationError("library is empty")
    G = np.column_stack(columns)
    zero = [t.label for t, c in zip(terms, columns) if not np.any(c)]
    if zero:
        warnings.warn(f"identically zero library columns: {zero}", stacklevel=2)
    return WeakSystem(G, b, terms, qshape, tf.m, np.array(scales), u_c)


def check_same_grid(a: Grid, b: Grid) -> None:
    for name in ("x", "y", "t"):
        if not np.array_equal(getattr(a, name), getattr(b, name)):
            raise IncompatibleError(f"grids differ along {name}")
