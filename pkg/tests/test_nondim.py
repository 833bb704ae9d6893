import math
from types import SimpleNamespace

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from weakfp.data_model import Grid
from weakfp.errors import NumericalError, ValidationError
from weakfp.kde import DensityField, trapezoid_mass
from weakfp.nondim import (ScaleSet, boltzmann_stationary, characteristic_scales,
                           diffusion_centric_A, pi_groups)
from weakfp.weakform import LibrarySpec

from conftest import heat_field


def spd(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((2, 2))
    return M @ M.T + 0.5 * np.eye(2)


def model(labels, weights):
    return SimpleNamespace(labels=labels, weights=np.asarray(weights, dtype=float))


def test_identity_case():
    pg = pi_groups(ScaleSet(np.eye(2), 1.0, 1.0, 1.0, 1.0), np.eye(2))
    for m in (pg.pi_v, pg.pi_k, pg.pi_d):
        assert np.allclose(m, np.eye(2), atol=1e-15)
    assert pg.iso_pi_v == 1.0 and pg.iso_pi_k == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.5, 100))
def test_diffusion_centric_gives_unit_pi_d(seed, t_c):
    D = spd(seed)
    A = diffusion_centric_A(D, t_c)
    sc = ScaleSet(A, t_c, 0.01, 2.0, 3.0)
    assert np.allclose(sc.Lambda, D * t_c, rtol=1e-12, atol=1e-12 * t_c)
    assert np.allclose(pi_groups(sc, D).pi_d, np.eye(2), atol=1e-10)
    assert math.sqrt(np.linalg.det(sc.Lambda)) == pytest.approx(abs(np.linalg.det(A)), rel=1e-12)
    # reduced forms: Pi_V = V_c D^-1, Pi_K = t_c K_c U_c |D|^(1/2) D^-1
    pg = pi_groups(sc, D)
    Dinv = np.linalg.inv(D)
    assert np.allclose(pg.pi_v, 2.0 * Dinv, rtol=1e-9)
    assert np.allclose(pg.pi_k, t_c * 3.0 * 0.01 * math.sqrt(np.linalg.det(D)) * Dinv, rtol=1e-9)


def test_isotropic_reduction():
    D = 8.0 * np.eye(2)
    pg = pi_groups(ScaleSet(diffusion_centric_A(D, 48), 48, 0.02, 4.0, 0.5), D)
    assert pg.iso_pi_v == pytest.approx(0.5) and pg.iso_pi_k == pytest.approx(48 * 0.5 * 0.02)
    assert np.allclose(pg.pi_v, 0.5 * np.eye(2)) and np.allclose(pg.pi_k, pg.iso_pi_k * np.eye(2))
    assert pg.norms()["pi_d"] == pytest.approx(1.0)


def test_errors():
    with pytest.raises(NumericalError):
        pi_groups(ScaleSet(np.eye(2), 1, 1, 1, 1), np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        ScaleSet(np.array([[1.0, 0], [0, -1.0]]), 1, 1, 1, 1)


def test_symbolic_substitution_of_nondimensional_pde():
    # t_c [div(u grad V) + div(D grad u)] at x = A xi must equal
    # U_c [div_xi(Pi_V U grad_xi Vhat) + div_xi(Pi_D grad_xi U)]
    x, y, xi, eta = sp.symbols("x y xi eta", real=True)
    A = np.array([[3.0, 0.7], [0.7, 2.0]])
    D = np.array([[5.0, 1.2], [1.2, 4.0]])
    t_c, U_c, V_c = 2.5, 0.03, 1.7
    u = sp.exp(-(x ** 2 + x * y / 2 + y ** 2) / 60)
    V = sp.cos(x / 7) * sp.cos(y / 5) + x * y / 100
    lhs = t_c * (sp.diff(u * sp.diff(V, x), x) + sp.diff(u * sp.diff(V, y), y)
                 + sum(D[i, j] * sp.diff(u, a, b) for i, a in enumerate((x, y))
                       for j, b in enumerate((x, y))))
    sub = {x: A[0, 0] * xi + A[0, 1] * eta, y: A[1, 0] * xi + A[1, 1] * eta}
    U = u.subs(sub) / U_c
    Vh = V.subs(sub) / V_c
    pg = pi_groups(ScaleSet(A, t_c, U_c, V_c, 0.0), D)
    gU = [sp.diff(U, xi), sp.diff(U, eta)]
    gV = [sp.diff(Vh, xi), sp.diff(Vh, eta)]
    flux = [sum(pg.pi_v[i, j] * U * gV[j] + pg.pi_d[i, j] * gU[j] for j in range(2))
            for i in range(2)]
    rhs = U_c * (sp.diff(flux[0], xi) + sp.diff(flux[1], eta))
    for x0 in ([3.0, -2.0], [10.0, 4.0], [-6.0, 1.0]):
        s0 = np.linalg.solve(A, x0)
        l = float(lhs.subs({x: x0[0], y: x0[1]}))
        r = float(rhs.subs({xi: s0[0], eta: s0[1]}))
        assert r == pytest.approx(l, rel=1e-10)


def small_density(L=175.0, D=np.eye(2) * 8):
    g = Grid(np.linspace(0, L, 80), np.linspace(0, L, 80), np.linspace(0, 48, 7))
    return DensityField(heat_field(g, D, C0=np.eye(2) * (L / 17.5) ** 2, center=(L / 2, L / 2)), g)


def test_scales_zero_and_closed_form():
    d = small_density()
    sc = characteristic_scales(model(["V[1,1]", "D_x"], [0.0, 0.0]), d)
    assert sc.V_c == 0 and sc.K_c == 0 and sc.empty
    assert sc.U_c == d.values.max() and sc.t_c == 48
    sc = characteristic_scales(model(["V[2,3]"], [1.0]), d)
    k = 2 * math.pi / 175
    closed = math.sqrt(((2 * k) ** 2 + (3 * k) ** 2) * 175 * 175 / 4)
    assert sc.V_c == pytest.approx(closed, rel=1e-10)


def test_dimensional_homogeneity():
    c = 2.0
    lab = ["V[1,2]", "V[3,1]", "K[1]", "K[2]", "D_x", "D_xy", "D_y"]
    w = np.array([5.0, -3.0, 40.0, -25.0, 0, 0, 0])
    D = np.array([[8.0, 1.0], [1.0, 9.0]])
    groups = []
    for scale in (1.0, c):
        d = small_density(175 * scale, D * scale ** 2)
        lib = LibrarySpec(j_v=3, j_k=2, rho0=6.0 * scale, kernel_radius=10, include_k=True)
        wk = w * np.array([scale ** 2] * 4 + [1] * 3)
        sc = characteristic_scales(model(lab, wk), d, lib, D=D * scale ** 2)
        groups.append(pi_groups(sc, D * scale ** 2))
    for name in ("pi_v", "pi_k", "pi_d"):
        assert np.allclose(getattr(groups[0], name), getattr(groups[1], name), rtol=1e-9)
    assert groups[0].norms()["pi_k"] > 0


def test_boltzmann():
    g = Grid(np.linspace(-20, 20, 201), np.linspace(-20, 20, 201), np.array([0.0, 1.0]))
    X, Y = g.mesh()
    flat = boltzmann_stationary(np.sin(X) + Y, 0.0, g)
    assert np.allclose(flat, 1 / 40 ** 2)
    pv = 0.5
    gauss = boltzmann_stationary((X ** 2 + Y ** 2) / 2, pv, g)
    assert trapezoid_mass(gauss, g) == pytest.approx(1.0)
    assert trapezoid_mass(gauss * X ** 2, g) == pytest.approx(1 / pv, rel=1e-6)
    V = np.cos(2 * np.pi * X / 10) * np.cos(2 * np.pi * Y / 10)
    u = boltzmann_stationary(V, 3.0, g)
    order = np.argsort(V.ravel(), kind="stable")
    assert np.all(np.diff(u.ravel()[order]) <= 1e-15)
    assert V.ravel()[np.argmax(u)] == V.min()
    with pytest.raises(ValidationError):
        boltzmann_stationary(np.full(g.spatial_shape, np.inf), 1.0, g)
