"""Least squares, MSTLS sparse regression and fit diagnostics for ``b = G w``."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, ValidationError

RANK_RTOL = 1e-12
COND_DIRECT_LIMIT = 1e6
N_LAMBDAS = 50
LOG10_LAMBDA_RANGE = (-4.0, -0.08)


def default_lambdas(n: int = N_LAMBDAS) -> np.ndarray:
    """Thresholds log-spaced over ``[1e-4, 10**-0.08]``."""
    return np.logspace(*LOG10_LAMBDA_RANGE, n)


def _rank_check(G: np.ndarray, labels=None) -> None:
    _, R, piv = sla.qr(G, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0:
        return
    tol = RANK_RTOL * d[0]
    rank = int(np.sum(d > tol))
    if rank < G.shape[1]:
        dep = sorted(int(j) for j in piv[rank:])
        names = dep if labels is None else [labels[j] for j in dep]
        raise NumericalError(f"library is rank deficient; dependent columns: {names}")


def ols(G, b, labels=None) -> np.ndarray:
    """Least-squares weights ``argmin ||b - G w||``.

    Well-conditioned systems go through a Cholesky solve of the normal
    equations; anything with condition number above ``COND_DIRECT_LIMIT``
    is solved by SVD.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if G.shape[0] != b.size:
        raise ValidationError(f"G has {G.shape[0]} rows but b has {b.size}")
    s = np.linalg.svd(G, compute_uv=False)
    if s.size and (s[-1] <= RANK_RTOL * s[0] or s[0] == 0):
        _rank_check(G, labels)
        raise NumericalError("library is rank deficient")
    cond = s[0] / s[-1]
    if cond <= COND_DIRECT_LIMIT:
        return sla.cho_solve(sla.cho_factor(G.T @ G), G.T @ b)
    return np.linalg.lstsq(G, b, rcond=None)[0]


class ReducedSystem:
    """``b = G w`` compressed through a thin QR factorization of ``G``.

    Least squares on any column subset ``S`` only needs ``R[:, S]`` and
    ``c = Q^T b``: ``||b - G_S w||^2 = ||c - R_S w||^2 + ||b||^2 - ||c||^2``.
    """

    def __init__(self, G, b):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if G.shape[0] != b.size:
            raise ValidationError(f"G has {G.shape[0]} rows but b has {b.size}")
        if G.shape[0] < G.shape[1]:
            raise ValidationError("underdetermined system: fewer query points than terms")
        Q, R = np.linalg.qr(G, mode="reduced")
        self.R = R
        self.c = Q.T @ b
        self.b_norm2 = float(b @ b)
        self.perp2 = max(self.b_norm2 - float(self.c @ self.c), 0.0)
        self.col_norms = np.linalg.norm(R, axis=0)
        self.n_terms = G.shape[1]

    def solve(self, support) -> np.ndarray:
        w = np.zeros(self.n_terms)
        support = np.asarray(support, dtype=int)
        if support.size:
            w[support] = np.linalg.lstsq(self.R[:, support], self.c, rcond=None)[0]
        return w

    def residual_norm2(self, w) -> float:
        d = self.c - self.R @ w
        return float(d @ d) + self.perp2


@dataclass
class MSTLSResult:
    weights: np.ndarray
    support: np.ndarray
    lam: float
    iterations: int
    zero_model: bool


def _as_reduced(G, b) -> ReducedSystem:
    return G if isinstance(G, ReducedSystem) else ReducedSystem(G, b)


def mstls(G, b=None, lam: float = 1e-2, w_init=None, max_iter: int = 100) -> MSTLSResult:
    """Modified sequential thresholding least squares at a single threshold.

    Term ``j`` survives while
    ``lam * max(1, |b|/|G_j|) <= |w_j| <= min(1, |b|/|G_j|) / lam``;
    survivors are refit and the loop stops once the surviving set repeats.
    ``G`` may be a :class:`ReducedSystem`, in which case ``b`` is ignored.
    """
    if not 0 < lam < 1:
        raise ValidationError("lambda must lie in (0, 1)")
    red = _as_reduced(G, b)
    ratio = np.sqrt(red.b_norm2) / np.where(red.col_norms > 0, red.col_norms, np.inf)
    lower = lam * np.maximum(1.0, ratio)
    upper = np.minimum(1.0, ratio) / lam
    support = np.flatnonzero(red.col_norms > 0)
    w = red.solve(support) if w_init is None else np.asarray(w_init, dtype=float).copy()
    it = 0
    for it in range(1, max_iter + 1):
        mag = np.abs(w)
        keep = support[(mag[support] >= lower[support]) & (mag[support] <= upper[support])]
        if np.array_equal(keep, support):
            break
        support = keep
        w = red.solve(support)
        if support.size == 0:
            break
    return MSTLSResult(w, support, lam, it, support.size == 0)


@dataclass
class SparseModel:
    """Selected weights with diagnostics.

    ``weights`` are in the units of the columns of ``G`` they were fit on.
    """

    weights: np.ndarray
    support: np.ndarray
    labels: list = field(default_factory=list)
    lam: float | None = None
    r2: float = math.nan
    aic: float = math.nan
    std_errors: np.ndarray | None = None
    loss: float = math.nan
    lambdas: np.ndarray | None = None
    losses: np.ndarray | None = None
    zero_model: bool = False
    method: str = "mstls"

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.weights))

    def selected(self) -> list:
        return [self.labels[j] if self.labels else j for j in self.support]


def normalized_loss(red: ReducedSystem, w, w_ls, eta: float) -> float:
    """``||G (w_ls - w)||^2 / ||G w_ls||^2 + eta ||w||_0``."""
    d = red.R @ (w_ls - w)
    b_ls = red.R @ w_ls
    denom = float(b_ls @ b_ls)
    if denom == 0:
        raise NumericalError("least-squares prediction is identically zero")
    return float(d @ d) / denom + eta * np.count_nonzero(w)


def mstls_sweep(G, b, lambdas=None, labels=None, n_particles: int | None = None) -> SparseModel:
    """Pick the threshold minimizing the normalized sparse loss.

    Ties go to the larger threshold (sparser model), except that the zero
    model only wins a tie against other zero models; with one candidate
    term its loss always equals that of the one-term fit. ``n_particles`` is the
    total particle count used for AIC; without it AIC is left as NaN.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    lambdas = default_lambdas() if lambdas is None else np.sort(np.asarray(lambdas, dtype=float))
    red = ReducedSystem(G, b)
    if labels is not None:
        _check_rank_reduced(red, labels)
    w_ls = red.solve(np.arange(red.n_terms))
    eta = 1.0 / red.n_terms
    losses = np.empty(lambdas.size)
    best = None
    for i, lam in enumerate(lambdas):
        res = mstls(red, lam=lam, w_init=w_ls)
        losses[i] = normalized_loss(red, res.weights, w_ls, eta)
        if best is None:
            best = (i, res)
            continue
        cur = losses[best[0]]
        tie = abs(losses[i] - cur) <= 1e-12 * max(cur, 1e-300)
        if losses[i] < cur and not tie:
            best = (i, res)
        elif tie and (best[1].zero_model or not res.zero_model):
            # equal loss: a nonempty model beats the zero model, then larger lambda wins
            best = (i, res)
    i, res = best
    return finalize_model(G, b, res.weights, res.support, labels=labels, lam=res.lam,
                          loss=losses[i], lambdas=lambdas, losses=losses,
                          zero_model=res.zero_model, n_particles=n_particles)


def _check_rank_reduced(red: ReducedSystem, labels) -> None:
    d = np.linalg.svd(red.R, compute_uv=False)
    if d.size and d[-1] <= RANK_RTOL * d[0]:
        _rank_check(red.R, labels)


def finalize_model(G, b, weights, support, labels=None, lam=None, loss=math.nan,
                   lambdas=None, losses=None, zero_model=False, n_particles=None,
                   method="mstls") -> SparseModel:
    """Attach R^2, AIC and robust standard errors to a weight vector."""
    r = b - G @ weights
    se = robust_standard_errors(G, r, support)
    return SparseModel(
        weights=np.asarray(weights, dtype=float), support=np.asarray(support, dtype=int),
        labels=list(labels) if labels is not None else [], lam=lam, r2=r_squared(G, b, weights),
        aic=aic(weights, r, n_particles) if n_particles else math.nan, std_errors=se, loss=loss,
        lambdas=lambdas, losses=losses, zero_model=zero_model, method=method)


def fit_ols(G, b, labels=None, n_particles=None) -> SparseModel:
    G = np.atleast_2d(np.asarray(G, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    w = ols(G, b, labels)
    return finalize_model(G, b, w, np.arange(G.shape[1]), labels=labels,
                          n_particles=n_particles, method="ols")


def r_squared(G, b, w) -> float:
    """Coefficient of determination; NaN when ``b`` is constant."""
    b = np.asarray(b, dtype=float).ravel()
    if b.size < 2:
        raise ValidationError("R^2 needs at least two query points")
    r = b - np.asarray(G) @ np.asarray(w)
    tot = float(np.sum((b - b.mean()) ** 2))
    if tot == 0:
        return math.nan
    return 1.0 - float(r @ r) / tot


def log_likelihood(r, n_particles: int) -> float:
    """``-(N/2) ln ||r||^2`` with the normalization constant dropped."""
    rss = float(np.dot(r, r))
    if rss == 0:
        warnings.warn("zero residual: log-likelihood is infinite", stacklevel=2)
        return math.inf
    return -0.5 * n_particles * math.log(rss)


def aic(w, r, n_particles: int) -> float:
    """``2 ||w||_0 - 2 l(w)`` using the least-squares likelihood surrogate."""
    return 2.0 * np.count_nonzero(w) - 2.0 * log_likelihood(r, n_particles)


def delta_aic(model_a: SparseModel, model_b: SparseModel) -> float:
    return model_a.aic - model_b.aic


def robust_standard_errors(G, r, support=None) -> np.ndarray:
    """Heteroskedasticity-robust (sandwich) standard errors on ``support``.

    ``S = G+ diag(r^2) G+^T`` with ``G+`` the left pseudo-inverse of the
    active columns; off-support entries are zero.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    r = np.asarray(r, dtype=float).ravel()
    support = np.arange(G.shape[1]) if support is None else np.asarray(support, dtype=int)
    se = np.zeros(G.shape[1])
    if support.size == 0:
        return se
    Gs = G[:, support]
    R = np.linalg.qr(Gs, mode="r")
    d = np.abs(np.diag(R))
    if d.min() <= RANK_RTOL * d.max():
        _rank_check(Gs)
        raise NumericalError("active columns are rank deficient")
    # bread = (Gs^T Gs)^-1 = R^-1 R^-T
    rinv = sla.solve_triangular(R, np.eye(R.shape[0]))
    bread = rinv @ rinv.T
    scaled = Gs * r[:, None]
    meat = scaled.T @ scaled
    S = bread @ meat @ bread
    se[support] = np.sqrt(np.clip(np.diag(S), 0.0, None))
    return se

