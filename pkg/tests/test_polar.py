import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from platelab.errors import ResolutionError, UsageError, ParameterError
from platelab.params import Geometry
from platelab.polar import (
    bilaplacian_k, boundary_rows, build_mode_grid, chebdif, geometric_condition_scan,
    laplacian_k, trace_constant_fit,
)

GEO = Geometry()


@pytest.fixture(scope="module")
def g0():
    return build_mode_grid(GEO, 0)


def _norm_tol(mat, f, factor=100.0):
    # dense matvec rounding: eps * ||D|| * ||f||
    return factor * np.finfo(float).eps * np.linalg.norm(mat, np.inf) * np.max(np.abs(f))


def test_second_derivative_of_r_squared(g0):
    r = g0.annulus_nodes
    np.testing.assert_allclose(g0.d2 @ r ** 2, 2.0, atol=_norm_tol(g0.d2, r ** 2))


def test_annulus_quadrature_area(g0):
    assert g0.quad_annulus.sum() == pytest.approx(np.pi * (2.0 ** 2 - 1.0), rel=1e-12)


def test_disk_quadrature_of_regular_part(g0):
    # ∫ r² dA over the unit disk = π/2
    assert g0.quad_disk @ g0.disk_nodes ** 2 == pytest.approx(np.pi / 2, rel=1e-12)


def test_disk_laplacian_of_harmonic_mode():
    g = build_mode_grid(GEO, 3)
    # r³ e^{3iθ}: regular part q ≡ 1
    res = laplacian_k(g, "disk") @ np.ones(g.n_disk)
    assert np.max(np.abs(res)) <= 1e-9


@pytest.mark.parametrize("k, f, expected", [
    (0, lambda r: r ** 2, lambda r: 4.0 + 0 * r),
    (1, lambda r: r, lambda r: 0 * r),
])
def test_annulus_laplacian_examples(k, f, expected):
    g = build_mode_grid(GEO, k)
    r = g.annulus_nodes
    lap = laplacian_k(g, "annulus")
    np.testing.assert_allclose(lap @ f(r), expected(r), atol=_norm_tol(lap, f(r)))


def test_annulus_laplacian_symbolic_oracle():
    rs = sp.symbols("r", positive=True)
    k = 2
    u = rs ** 4
    oracle = sp.lambdify(rs, sp.diff(u, rs, 2) + sp.diff(u, rs) / rs - k ** 2 * u / rs ** 2)
    g = build_mode_grid(GEO, k)
    r = g.annulus_nodes
    lap = laplacian_k(g, "annulus")
    np.testing.assert_allclose(lap @ r ** 4, oracle(r), atol=_norm_tol(lap, r ** 4))
    np.testing.assert_allclose(oracle(r), 12 * r ** 2)


@pytest.mark.parametrize("k, power, value", [(0, 4, 64.0), (0, 2, 0.0), (1, 3, 0.0)])
def test_bilaplacian_examples(k, power, value):
    g = build_mode_grid(GEO, k)
    f = g.annulus_nodes ** power
    b = bilaplacian_k(g)
    np.testing.assert_allclose(b @ f, value, atol=_norm_tol(b, f, 1000.0))


def test_bilaplacian_symbolic_oracle_biharmonic():
    rs = sp.symbols("r", positive=True)
    lap = lambda u, k: sp.diff(u, rs, 2) + sp.diff(u, rs) / rs - k ** 2 * u / rs ** 2
    assert sp.simplify(lap(lap(rs ** 3, 1), 1)) == 0


@pytest.mark.parametrize("k", [0, 1, 5])
def test_differentiation_exact_on_polynomials(k):
    g = build_mode_grid(GEO, k, n_annulus=24)
    r = g.annulus_nodes
    coeffs = np.random.default_rng(k).standard_normal(24)
    p = np.polynomial.Polynomial(coeffs, domain=[1, 2], window=[-1, 1])
    np.testing.assert_allclose(g.d1 @ p(r), p.deriv()(r), atol=1e-10 * np.max(np.abs(p.deriv()(r))))
    for j, d in enumerate((g.d2, g.d3, g.d4), start=2):
        exact = p.deriv(j)(r)
        np.testing.assert_allclose(d @ p(r), exact, atol=_norm_tol(d, p(r), 1000.0) + 1e-10 * np.max(np.abs(exact)))


def test_spectral_accuracy_exponential():
    errs = []
    for n in (8, 12, 16, 20, 24, 28, 32):
        x, (d1,) = chebdif(n, 1)
        r = 1.5 + 0.5 * x
        errs.append(np.max(np.abs(2.0 * d1 @ np.exp(r) - np.exp(r))))
    assert errs[4] < 1e-8
    pre_floor = [e for e in errs if e > 1e-12]
    assert all(b < a for a, b in zip(pre_floor, pre_floor[1:]))


def test_fine_quadrature_exact_on_polynomials(g0):
    r, w = g0.fine_annulus_r, g0.fine_annulus_w
    # ∫ r^3 dA = 2π (2^5 - 1)/5
    assert w @ r ** 3 == pytest.approx(2 * np.pi * 31 / 5, rel=1e-12)


def test_interpolation_weights_are_reproducible(g0):
    g = build_mode_grid(GEO, 0)
    assert np.array_equal(g.fine_annulus_tables[1], g0.fine_annulus_tables[1])


@given(st.integers(0, 12), st.lists(st.floats(-1, 1), min_size=4, max_size=4))
@settings(max_examples=25, deadline=None)
def test_disk_parity(k, cs):
    g = build_mode_grid(GEO, k, n_disk=16, k_max=12)
    q = np.polynomial.Polynomial(np.array([cs[0], 0, cs[1], 0, cs[2], 0, cs[3]]))
    r = g.disk_nodes
    u_pos = (r / g.r_in) ** k * q(r)
    u_neg = (-r / g.r_in) ** k * q(-r)
    np.testing.assert_allclose(u_neg, (-1) ** k * u_pos, atol=1e-14)


def test_resolution_and_geometry_errors():
    with pytest.raises(ResolutionError):
        build_mode_grid(GEO, 0, n_annulus=6)
    with pytest.raises(ResolutionError):
        build_mode_grid(GEO, 30)
    with pytest.raises(ParameterError):
        Geometry(r_in=2.0, r_out=1.0)


def test_b1_on_constant_vanishes(g0):
    row = boundary_rows(g0, "B1_I", mu=0.3)
    ones = np.ones(g0.n_annulus)
    assert abs(row[: g0.n_annulus] @ ones) <= _norm_tol(row[None, : g0.n_annulus], ones)


def test_b1_on_r_squared(g0):
    row = boundary_rows(g0, "B1_I", mu=0.3)
    assert row[: g0.n_annulus] @ g0.annulus_nodes ** 2 == pytest.approx(2.6, abs=1e-9)


def test_continuity_row(g0):
    row = boundary_rows(g0, "continuity_I")
    u = np.zeros(g0.n_annulus + g0.n_disk)
    u[0] = 0.7
    u[-1] = 0.7
    assert row @ u == 0.0


def test_boundary_row_errors(g0):
    with pytest.raises(UsageError):
        boundary_rows(g0, "B1_Γ", mu=0.3)
    with pytest.raises(UsageError):
        boundary_rows(g0, "B1_I")
    with pytest.raises(UsageError):
        boundary_rows(g0, "nonsense")


def test_robin_and_normal_rows(g0):
    r = g0.annulus_nodes
    u = np.concatenate([r ** 2, np.zeros(g0.n_disk)])
    # on Γ, ∂ν = +∂r: 2*2 + κ*4
    assert boundary_rows(g0, "robin_Γ", kappa=1.0) @ u == pytest.approx(8.0, abs=1e-10)
    # on I, ∂ν = -∂r: -2 + κ*1
    assert boundary_rows(g0, "robin_I", kappa=1.0) @ u == pytest.approx(-1.0, abs=1e-10)
    rows = boundary_rows(g0, "normal_derivative_I")
    assert rows.shape == (2, g0.n_annulus + g0.n_disk)
    assert rows[0] @ u == pytest.approx(-2.0, abs=1e-10)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_b1_polar_matches_cartesian(k):
    mu = 0.3
    x, y = sp.symbols("x y", real=True)
    cs = sp.symbols("c0:6", real=True)
    r = sp.sqrt(x ** 2 + y ** 2)
    prof = sum(c * r ** j for j, c in enumerate(cs))
    u = prof * ((x + sp.I * y) / r) ** k
    uxx, uyy, uxy = sp.diff(u, x, 2), sp.diff(u, y, 2), sp.diff(u, x, y)
    nx, ny = -x / r, -y / r  # plate normal on I
    expr = uxx + uyy + (1 - mu) * (2 * nx * ny * uxy - nx ** 2 * uyy - ny ** 2 * uxx)
    f = sp.lambdify((x, y, *cs), expr, "numpy")
    g = build_mode_grid(GEO, k)
    row = boundary_rows(g, "B1_I", mu=mu)[: g.n_annulus]
    rng = np.random.default_rng(k)
    thetas = np.linspace(0.1, 2 * np.pi, 8, endpoint=False)
    for _ in range(20):
        c = rng.standard_normal(6)
        polar = row @ np.polynomial.polynomial.polyval(g.annulus_nodes, c)
        for th in thetas:
            cart = complex(f(np.cos(th), np.sin(th), *c))
            assert abs(cart - polar * np.exp(1j * k * th)) <= 1e-8 * max(1.0, abs(cart))


@pytest.mark.parametrize("x0, lo, hi", [((0, 0), -1, -1), ((2, 0), -3, 1), ((0.5, 0), -1.5, -0.5)])
def test_geometric_condition(x0, lo, hi):
    mn, mx = geometric_condition_scan(GEO, x0)
    assert mn == pytest.approx(lo, abs=1e-12)
    assert mx == pytest.approx(hi, abs=1e-12)


def test_trace_constant_stable_under_refinement():
    c1, ratios = trace_constant_fit(GEO, 16, n_functions=30)
    c2, _ = trace_constant_fit(GEO, 32, n_functions=30)
    assert len(ratios) == 30 and np.all(ratios > 0)
    assert abs(c2 - c1) <= 0.2 * c1
