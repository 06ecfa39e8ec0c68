import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import jn_zeros

from platelab import operator as opmod
from platelab.errors import AssemblyError, DiscretizationError, UsageError
from platelab.operator import (
    BlockLayout, StateVector, assemble, collocation_pairing, constraint_residual,
    disk_coefficients, dissipation_rate, energy, energy_pairing, random_constrained_state,
    random_smooth_coefficients, smooth_state,
)
from platelab.params import Geometry, PhysicalParams
from platelab.polar import build_mode_grid

GEO = Geometry()
_CACHE = {}


def op_for(k=0, m=0.0, n=24, variant="full", **kw):
    key = (k, m, n, variant, tuple(sorted(kw.items())))
    if key not in _CACHE:
        p = PhysicalParams(m=m, **kw)
        _CACHE[key] = assemble(p, build_mode_grid(GEO, k, n_annulus=n, n_disk=n), variant)
    return _CACHE[key]


def test_layout():
    lay = BlockLayout(10, 8)
    assert lay.sizes == (10, 10, 8, 8, 10)
    assert lay.size == 46
    assert lay.slice("w4") == slice(28, 36)
    s = StateVector.from_blocks(lay, w3=np.arange(8.0))
    assert np.array_equal(s.w3, np.arange(8.0))
    assert not s.w1.any()
    with pytest.raises(UsageError):
        StateVector(lay, np.zeros(5))


def test_zero_state():
    op = op_for()
    z = StateVector.zeros(op.layout)
    assert energy(op, z) == 0.0
    assert dissipation_rate(op.params, op.grid, z) == 0.0


def test_energy_of_constant_membrane_velocity():
    op = op_for()
    c = 0.7
    w = StateVector.from_blocks(op.layout, w4=disk_coefficients(op.grid, lambda r: c + 0 * r))
    assert energy(op, w) == pytest.approx(op.params.rho2 * c ** 2 * np.pi * GEO.r_in ** 2, rel=1e-12)


@pytest.mark.parametrize("sigma", [0.0, 1.0])
def test_dissipation_of_constant_temperature(sigma):
    op = op_for(sigma=sigma)
    c = 1.3
    w = StateVector.from_blocks(op.layout, w5=np.full(op.grid.n_annulus, c))
    p = op.params
    area = np.pi * (GEO.r_out ** 2 - GEO.r_in ** 2)
    length = 2 * np.pi * (GEO.r_in + GEO.r_out)
    expected = sigma * c ** 2 * area + p.beta * p.kappa * c ** 2 * length
    assert dissipation_rate(p, op.grid, w) == pytest.approx(expected, rel=1e-12)


def test_membrane_damping_term():
    op = op_for(m=1.0)
    w = StateVector.from_blocks(op.layout, w4=disk_coefficients(op.grid, lambda r: r ** 2))
    # m ∫ |∇ r²|² dA over the unit disk = 2π ∫ 4r³ dr
    assert dissipation_rate(op.params, op.grid, w) == pytest.approx(2 * np.pi, rel=1e-10)


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
@settings(max_examples=20, deadline=None)
def test_energy_is_quadratic(seed, t):
    op = op_for(k=1)
    w = random_constrained_state(op, np.random.default_rng(seed)).data
    assert energy(op, t * w) == pytest.approx(t * t * energy(op, w), rel=1e-10)
    assert energy(op, w) == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("k", [0, 1, 3, 8])
@pytest.mark.parametrize("m", [0.0, 1.0])
def test_basis_is_constrained_and_orthonormal(k, m):
    op = op_for(k, m)
    b = op.basis
    # the nodal plate Gram block is stiff; orthonormality holds to ~1e-9
    np.testing.assert_allclose(b.T @ op.gram @ b, np.eye(op.dim), atol=1e-8)
    scale = np.linalg.norm(op.constraints, axis=1)[:, None] * np.linalg.norm(b, axis=0)[None, :]
    assert np.max(np.abs(op.constraints @ b) / scale) < 1e-10


@pytest.mark.parametrize("k", [0, 2, 5])
@pytest.mark.parametrize("m", [0.0, 1.0])
def test_exact_dissipativity(k, m):
    op = op_for(k, m)
    a = op.reduced_generator
    sym = 0.5 * (a + a.T)
    assert np.max(np.linalg.eigvalsh(sym)) <= 1e-12 * np.linalg.norm(a, 2)
    rng = np.random.default_rng(k)
    for _ in range(10):
        c = rng.standard_normal(op.dim)
        w = op.lift(c)
        d = dissipation_rate(op.params, op.grid, w)
        assert energy_pairing(op, w) == pytest.approx(c @ a @ c, rel=1e-8, abs=1e-10)
        assert abs(energy_pairing(op, w) + d) <= 1e-8 * max(1.0, d)


def test_pairing_for_dirichlet_membrane_is_skew():
    op = op_for(0, 0.0, variant="membrane_dirichlet")
    a = op.reduced_generator
    assert np.max(np.abs(a + a.T)) <= 1e-12 * np.max(np.abs(a))


@pytest.mark.parametrize("k", [0, 2])
def test_membrane_oracle(k):
    op = op_for(k, 0.0, n=32, variant="membrane_dirichlet")
    ev = np.linalg.eigvals(op.reduced_generator)
    assert np.max(np.abs(ev.real)) < 1e-9
    pos = np.sort(ev.imag[ev.imag > 1e-8])
    p = op.params
    exact = np.sqrt(p.beta2 / p.rho2) * jn_zeros(k, 3) / GEO.r_in
    # each membrane frequency appears once among the positive ones
    for z in exact:
        assert np.min(np.abs(pos - z)) < 1e-8 * z


def test_mode_sign_symmetry():
    a = np.sort_complex(np.linalg.eigvals(op_for(3).reduced_generator))
    b = np.sort_complex(np.linalg.eigvals(op_for(-3).reduced_generator))
    np.testing.assert_allclose(a, b, atol=1e-9 * np.max(np.abs(a)))


def test_smooth_state_satisfies_constraints():
    op = op_for(2, n=32)
    ann, disk = random_smooth_coefficients(np.random.default_rng(0), degree=40)
    w = smooth_state(op, ann, disk)
    assert constraint_residual(op, w) < 1e-9 * np.max(np.abs(w.data))


def test_collocation_defect_shrinks_with_resolution():
    rng = np.random.default_rng(3)
    ann, disk = random_smooth_coefficients(rng, degree=60)
    defects = []
    for n in (16, 32):
        op = op_for(1, 1.0, n=n)
        w = smooth_state(op, ann, disk)
        d = dissipation_rate(op.params, op.grid, w)
        defects.append(abs(collocation_pairing(op, w) + d) / max(d, energy(op, w)))
    assert defects[1] * 4 <= defects[0]


def test_reduced_spectrum_stable_under_refinement():
    lo = np.max(np.linalg.eigvals(op_for(0, 1.0, n=24).reduced_generator).real)
    hi = np.max(np.linalg.eigvals(op_for(0, 1.0, n=32).reduced_generator).real)
    assert abs(lo - hi) <= 0.05 * abs(hi)


def test_assembly_errors(monkeypatch):
    grid = build_mode_grid(GEO, 0, n_annulus=16, n_disk=16)
    with pytest.raises(UsageError):
        assemble(PhysicalParams(), grid, "bogus")
    with pytest.raises(UsageError):
        assemble({"m": 0}, grid)
    rows = np.vstack([np.eye(4, 6), np.eye(4, 6)[1]])
    with pytest.raises(AssemblyError) as info:
        opmod._check_rank(rows, [f"r{i}" for i in range(5)])
    assert set(info.value.rows) & {1, 4}

    def fail(_):
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(opmod.np.linalg, "cholesky", fail)
    with pytest.raises(DiscretizationError):
        assemble(PhysicalParams(), grid)


def test_state_layout_mismatch():
    op = op_for()
    other = StateVector.zeros(BlockLayout(8, 8))
    with pytest.raises(UsageError):
        energy(op, other)
    with pytest.raises(UsageError):
        dissipation_rate(op.params, op.grid, np.zeros(3))
