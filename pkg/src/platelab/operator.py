"""Discrete generator of the plate/membrane semigroup for one angular mode.

The raw state stacks five nodal blocks ``(w1, w2, w3, w4, w5)``: plate
displacement, plate velocity, membrane displacement, membrane velocity and
temperature. The annulus blocks hold nodal samples. The membrane blocks hold
coefficients in the orthonormal disk modes of :mod:`platelab.polar`, because
nodal disk samples make the energy Gram matrix numerically singular once
``|k|`` is moderately large.

All boundary and transmission conditions become rows of ``constraints``. They
are imposed exactly, because each circle is a single radial endpoint. The
energy Gram matrix and the energy pairing ``(A w, φ)_H`` are integrated exactly
with Gauss-Legendre tables. The pairing is assembled after integration by
parts, with the transmission and Robin conditions substituted. On the
constrained subspace it equals ``gram @ A w`` with no quadrature error. Its
Hermitian part is exactly minus the dissipation form, so the reduced
generator is dissipative by construction and not only up to rounding.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import AssemblyError, DiscretizationError, UsageError
from .params import PhysicalParams
from .polar import (
    ModeGrid,
    bilaplacian_k,
    boundary_rows,
    laplacian_k,
    plate_b1_coeffs,
    plate_b2_coeffs,
)

BLOCKS = ("w1", "w2", "w3", "w4", "w5")
VARIANTS = ("full", "membrane_dirichlet")
CONSTRAINT_NAMES = (
    "w1=0 on Γ",
    "∂ν w1=0 on Γ",
    "w2=0 on Γ",
    "∂ν w2=0 on Γ",
    "Robin w5 on Γ",
    "w1=w3 on I",
    "w2=w4 on I",
    "β1 B1 w1 + α w5=0 on I",
    "β1 B2 w1 + α∂ν w5 + β2∂ν w3 + m∂ν w4=0 on I",
    "Robin w5 on I",
)


@dataclass(frozen=True)
class BlockLayout:
    n_annulus: int
    n_disk: int

    @property
    def sizes(self):
        na, nd = self.n_annulus, self.n_disk
        return (na, na, nd, nd, na)

    @property
    def offsets(self):
        return tuple(np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).tolist())

    @property
    def size(self):
        return sum(self.sizes)

    def slice(self, block):
        i = BLOCKS.index(block) if isinstance(block, str) else block
        start = self.offsets[i]
        return slice(start, start + self.sizes[i])


@dataclass
class StateVector:
    """Five-block discrete state for one mode; ``data`` is the stacked raw vector."""

    layout: BlockLayout
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.shape != (self.layout.size,):
            raise UsageError(f"state has shape {self.data.shape}, layout expects ({self.layout.size},)")

    @classmethod
    def zeros(cls, layout, dtype=float):
        return cls(layout, np.zeros(layout.size, dtype=dtype))

    @classmethod
    def from_blocks(cls, layout, **blocks):
        data = np.zeros(layout.size, dtype=np.result_type(*blocks.values()) if blocks else float)
        for name, values in blocks.items():
            data[layout.slice(name)] = values
        return cls(layout, data)

    def block(self, name):
        return self.data[self.layout.slice(name)]

    w1 = property(lambda self: self.block("w1"))
    w2 = property(lambda self: self.block("w2"))
    w3 = property(lambda self: self.block("w3"))
    w4 = property(lambda self: self.block("w4"))
    w5 = property(lambda self: self.block("w5"))


@dataclass(frozen=True, eq=False)
class ModeOperator:
    """Discrete generator of one angular mode.

    ``generator`` is the collocation matrix of the differential expression on
    raw nodal states. ``pairing`` is the exact energy pairing of the generator,
    so ``w.conj() @ pairing @ w == (A w, w)_H`` for constrained ``w``.
    ``basis`` holds gram-orthonormal columns spanning ``ker(constraints)``, and
    ``reduced_generator`` is the compression ``basis^H @ pairing @ basis``.
    """

    params: PhysicalParams
    grid: ModeGrid
    variant: str
    layout: BlockLayout
    generator: np.ndarray
    constraints: np.ndarray
    constraint_names: tuple
    gram: np.ndarray
    pairing: np.ndarray
    dissipation: np.ndarray
    dissipation_factor: np.ndarray
    basis: np.ndarray
    reduced_generator: np.ndarray
    reduced_dissipation: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def k(self):
        return self.grid.k

    @property
    def dim(self):
        return self.basis.shape[1]

    def lift(self, c):
        """Raw state from reduced coordinates."""
        return self.basis @ c

    def project(self, w):
        """Gram-orthogonal projection of a raw state onto the constrained subspace (reduced coords)."""
        w = w.data if isinstance(w, StateVector) else np.asarray(w)
        return self.basis.T @ (self.gram @ w)

    def state(self, data):
        return StateVector(self.layout, data)


# ----------------------------------------------------------------------------
# exact integral tables


def _annulus_tables(grid):
    r = grid.fine_annulus_r
    p0, p1, p2 = grid.fine_annulus_tables
    return r, grid.fine_annulus_w, p0, p1, p2


def _disk_tables(grid):
    """Mode values and first derivatives at the fine disk points."""
    z0, z1, _ = grid.disk_modes_fine
    return grid.fine_disk_r, grid.fine_disk_w, z0, z1


def _weighted_gram(w, *tables):
    # sum over tables of T^T diag(w) T
    return sum(t.T @ (w[:, None] * t) for t in tables)


def plate_energy_matrix(grid, mu):
    """Matrix of ``mu (Δu, Δv) + (1-mu)(∇²u, ∇²v)`` over the annulus for mode profiles."""
    k2 = grid.k ** 2
    r, w, p0, p1, p2 = _annulus_tables(grid)
    inv_r = (1.0 / r)[:, None]
    lap = p2 + inv_r * p1 - k2 * inv_r ** 2 * p0
    h_rt = inv_r * p1 - inv_r ** 2 * p0
    h_tt = inv_r * p1 - k2 * inv_r ** 2 * p0
    hess = _weighted_gram(w, p2, h_tt) + 2 * k2 * _weighted_gram(w, h_rt)
    return mu * _weighted_gram(w, lap) + (1.0 - mu) * hess


def annulus_mass(grid):
    _, w, p0, _, _ = _annulus_tables(grid)
    return _weighted_gram(w, p0)


def annulus_stiffness(grid):
    r, w, p0, p1, _ = _annulus_tables(grid)
    return _weighted_gram(w, p1, grid.k * p0 / r[:, None])


def disk_mass(grid):
    _, w, u0, _ = _disk_tables(grid)
    return _weighted_gram(w, u0)


def disk_stiffness(grid):
    r, w, u0, u1 = _disk_tables(grid)
    return _weighted_gram(w, u1, grid.k * u0 / r[:, None])


def boundary_mass(grid):
    """``∫_{∂Ω1} u v ds`` for annulus profiles (both circles)."""
    na = grid.n_annulus
    b = np.zeros((na, na))
    b[0, 0] = 2 * np.pi * grid.r_in
    b[-1, -1] = 2 * np.pi * grid.r_out
    return b


def _dissipation_factor(params, grid, layout):
    """Matrix ``F`` with ``F^T F`` = dissipation form ``D``."""
    p = params
    na = grid.n_annulus
    rows = []
    ra, wa, p0, p1, _ = _annulus_tables(grid)
    sw = np.sqrt(wa)[:, None]
    s5 = layout.slice("w5")
    s4 = layout.slice("w4")

    def put(block_slice, mat):
        out = np.zeros((mat.shape[0], layout.size))
        out[:, block_slice] = mat
        rows.append(out)

    if p.m > 0:
        rd, wd, u0, u1 = _disk_tables(grid)
        swd = np.sqrt(p.m * wd)[:, None]
        put(s4, swd * u1)
        put(s4, swd * grid.k * u0 / rd[:, None])
    if p.sigma > 0:
        put(s5, np.sqrt(p.sigma) * sw * p0)
    put(s5, np.sqrt(p.beta) * sw * p1)
    put(s5, np.sqrt(p.beta) * sw * grid.k * p0 / ra[:, None])
    bnd = np.zeros((2, na))
    bnd[0, 0] = np.sqrt(p.beta * p.kappa * 2 * np.pi * grid.r_in)
    bnd[1, -1] = np.sqrt(p.beta * p.kappa * 2 * np.pi * grid.r_out)
    put(s5, bnd)
    return np.vstack(rows)


# ----------------------------------------------------------------------------
# assembly


def _collocation_generator(params, grid, layout):
    p = params
    n = layout.size
    gen = np.zeros((n, n))
    s = [layout.slice(b) for b in BLOCKS]
    lap_a = laplacian_k(grid, "annulus")
    lap_d = grid.disk_modes_laplacian
    bil = bilaplacian_k(grid)
    gen[s[0], s[1]] = np.eye(grid.n_annulus)
    gen[s[1], s[0]] = -p.beta1 / p.rho1 * bil
    gen[s[1], s[4]] = -p.alpha / p.rho1 * lap_a
    gen[s[2], s[3]] = np.eye(grid.n_disk)
    gen[s[3], s[2]] = p.beta2 / p.rho2 * lap_d
    gen[s[3], s[3]] = p.m / p.rho2 * lap_d
    gen[s[4], s[1]] = p.alpha / p.rho0 * lap_a
    gen[s[4], s[4]] = p.beta / p.rho0 * lap_a - p.sigma / p.rho0 * np.eye(grid.n_annulus)
    return gen


def _constraint_rows(params, grid, layout, variant):
    p = params
    na, nd = grid.n_annulus, grid.n_disk
    s = [layout.slice(b) for b in BLOCKS]
    ia, ig = 0, na - 1

    def row():
        return np.zeros(layout.size)

    if variant == "membrane_dirichlet":
        rows, names = [], []
        for b in ("w1", "w2", "w5"):
            for j in range(layout.sizes[BLOCKS.index(b)]):
                r = row()
                r[layout.offsets[BLOCKS.index(b)] + j] = 1.0
                rows.append(r)
                names.append(f"{b}[{j}]=0")
        for b in ("w3", "w4"):
            r = row()
            r[s[BLOCKS.index(b)]] = grid.disk_modes_boundary[0]
            rows.append(r)
            names.append(f"{b}=0 on I")
        return np.array(rows), tuple(names)

    d1 = grid.d1
    val_disk, dvec_disk = grid.disk_modes_boundary
    rows = []
    r = row(); r[s[0]][ig] = 1.0; rows.append(r)
    r = row(); r[s[0]] = d1[ig]; rows.append(r)
    r = row(); r[s[1]][ig] = 1.0; rows.append(r)
    r = row(); r[s[1]] = d1[ig]; rows.append(r)
    r = row(); r[s[4]] = boundary_rows(grid, "robin_Γ", kappa=p.kappa)[:na]; rows.append(r)
    r = row(); r[s[0]][ia] = 1.0; r[s[2]] = -val_disk; rows.append(r)
    r = row(); r[s[1]][ia] = 1.0; r[s[3]] = -val_disk; rows.append(r)
    mats = (np.eye(na), d1, grid.d2, grid.d3)
    c1 = plate_b1_coeffs(grid.k, grid.r_in, p.mu)
    c2 = plate_b2_coeffs(grid.k, grid.r_in, p.mu, -1.0)
    r = row()
    r[s[0]] = p.beta1 * sum(c * m[ia] for c, m in zip(c1, mats))
    r[s[4]][ia] = p.alpha
    rows.append(r)
    r = row()
    r[s[0]] = p.beta1 * sum(c * m[ia] for c, m in zip(c2, mats))
    r[s[4]] = -p.alpha * d1[ia]
    r[s[2]] = -p.beta2 * dvec_disk
    r[s[3]] = -p.m * dvec_disk
    rows.append(r)
    r = row(); r[s[4]] = boundary_rows(grid, "robin_I", kappa=p.kappa)[:na]; rows.append(r)
    return np.array(rows), CONSTRAINT_NAMES


def _pairing_skew(params, grid, layout, h2, ka, kd):
    """Skew part of the energy pairing on the constrained subspace."""
    p = params
    n = layout.size
    s = [layout.slice(b) for b in BLOCKS]
    a = np.zeros((n, n))
    a[s[0], s[1]] = p.beta1 * h2
    a[s[1], s[0]] = -p.beta1 * h2
    a[s[1], s[4]] = p.alpha * ka
    a[s[4], s[1]] = -p.alpha * ka
    a[s[2], s[3]] = p.beta2 * kd
    a[s[3], s[2]] = -p.beta2 * kd
    # α ∫_I (∂ν w2 φ5 - w5 ∂ν φ2), ∂ν = -d/dr on I
    dnu = -grid.d1[0]
    length = 2 * np.pi * grid.r_in
    e0 = np.zeros(grid.n_annulus)
    e0[0] = 1.0
    a[s[4], s[1]] += p.alpha * length * np.outer(e0, dnu)
    a[s[1], s[4]] -= p.alpha * length * np.outer(dnu, e0)
    return a


def _check_rank(constraints, names, tol=1e-10):
    norms = np.linalg.norm(constraints, axis=1)
    scaled = constraints / norms[:, None]
    sv = np.linalg.svd(scaled, compute_uv=False)
    rank = int(np.sum(sv > tol * sv[0]))
    if rank < constraints.shape[0]:
        _, _, piv = sla.qr(scaled.T, pivoting=True)
        bad = sorted(piv[rank:].tolist())
        raise AssemblyError(
            "constraint rows are linearly dependent: " + ", ".join(f"{i} ({names[i]})" for i in bad), rows=bad
        )
    return scaled


def assemble(params, grid, variant="full"):
    """Assemble the discrete generator of mode ``grid.k``.

    Parameters
    ----------
    params : PhysicalParams
    grid : ModeGrid
    variant : {"full", "membrane_dirichlet"}
        ``"membrane_dirichlet"`` replaces the plate and every coupling row by
        ``w1 = w2 = w5 = 0`` and clamps the membrane on I. With ``m = 0`` it is
        the unitary comparison group of the membrane alone.

    Raises
    ------
    AssemblyError
        Dependent constraint rows; ``rows`` lists the offending indices.
    DiscretizationError
        The Gram matrix is not positive definite on ``ker(constraints)``.
    """
    if variant not in VARIANTS:
        raise UsageError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if not isinstance(params, PhysicalParams):
        raise UsageError("params must be a PhysicalParams instance")
    p = params
    layout = BlockLayout(grid.n_annulus, grid.n_disk)
    s = [layout.slice(b) for b in BLOCKS]

    h2 = plate_energy_matrix(grid, p.mu)
    ma, ka = annulus_mass(grid), annulus_stiffness(grid)
    md, kd = disk_mass(grid), disk_stiffness(grid)

    gram = np.zeros((layout.size, layout.size))
    gram[s[0], s[0]] = p.beta1 * h2
    gram[s[1], s[1]] = p.rho1 * ma
    gram[s[2], s[2]] = p.beta2 * kd
    gram[s[3], s[3]] = p.rho2 * md
    gram[s[4], s[4]] = p.rho0 * ma

    factor = _dissipation_factor(p, grid, layout)
    dissipation = factor.T @ factor
    skew = _pairing_skew(p, grid, layout, h2, ka, kd)
    pairing = skew - dissipation

    constraints, names = _constraint_rows(p, grid, layout, variant)
    scaled = _check_rank(constraints, names)
    null = sla.null_space(scaled, rcond=1e-13)
    gz = null.T @ gram @ null
    gz = 0.5 * (gz + gz.T)
    try:
        chol = np.linalg.cholesky(gz)
    except np.linalg.LinAlgError as exc:
        raise DiscretizationError(
            f"energy Gram matrix is not positive on the constrained subspace (k={grid.k}); increase resolution"
        ) from exc
    basis = sla.solve_triangular(chol, null.T, lower=True).T

    x = basis.T @ skew @ basis
    red_skew = 0.5 * (x - x.T)
    fb = factor @ basis
    red_diss = fb.T @ fb
    reduced = red_skew - red_diss

    generator = _collocation_generator(p, grid, layout)
    for a in (generator, constraints, gram, pairing, dissipation, factor, basis, reduced, red_diss):
        a.setflags(write=False)
    return ModeOperator(
        params=p, grid=grid, variant=variant, layout=layout, generator=generator,
        constraints=constraints, constraint_names=names, gram=gram, pairing=pairing,
        dissipation=dissipation, dissipation_factor=factor, basis=basis,
        reduced_generator=reduced, reduced_dissipation=red_diss,
    )


# ----------------------------------------------------------------------------
# functionals


def _data(op, w):
    if isinstance(w, StateVector):
        if w.layout != op.layout:
            raise UsageError("state layout does not match the operator")
        return w.data
    w = np.asarray(w)
    if w.shape != (op.layout.size,):
        raise UsageError(f"state has shape {w.shape}, operator expects ({op.layout.size},)")
    return w


def energy(op, w):
    """``||w||_H^2`` of a raw state."""
    x = _data(op, w)
    return float(np.real(np.vdot(x, op.gram @ x)))


def dissipation_rate(params, grid, w):
    """``D(w) = m||∇w4||² + σ||w5||² + β||∇w5||² + βκ||w5||²_{∂Ω1}`` (nonnegative)."""
    layout = BlockLayout(grid.n_annulus, grid.n_disk)
    x = w.data if isinstance(w, StateVector) else np.asarray(w)
    if x.shape != (layout.size,):
        raise UsageError(f"state has shape {x.shape}, grid expects ({layout.size},)")
    f = _dissipation_factor(params, grid, layout)
    return float(np.sum(np.abs(f @ x) ** 2))


def energy_pairing(op, w):
    """``Re (A w, w)_H`` through the exact pairing (valid for constrained states)."""
    x = _data(op, w)
    return float(np.real(np.vdot(x, op.pairing @ x)))


def collocation_pairing(op, w):
    """``Re <gram · generator · w, w>``: the collocated image paired in the energy metric.

    The collocated image interpolates ``A w`` at the nodes, so integration by
    parts is only approximate. The gap to ``-D(w)`` is a discretization error.
    """
    x = _data(op, w)
    return float(np.real(np.vdot(x, op.gram @ (op.generator @ x))))


def constraint_residual(op, w):
    """Largest constraint violation, each row scaled to unit norm."""
    x = _data(op, w)
    c = op.constraints
    return float(np.max(np.abs(c @ x) / np.linalg.norm(c, axis=1)))


# ----------------------------------------------------------------------------
# constrained states


def random_constrained_state(op, rng):
    """Gram-normal random state in ``ker(constraints)`` (rough: all discrete modes excited)."""
    c = rng.standard_normal(op.dim)
    c /= np.linalg.norm(c)
    return op.state(op.lift(c))


def _annulus_x(grid, r):
    return 2.0 * (r - grid.r_in) / (grid.r_out - grid.r_in) - 1.0


def disk_coefficients(grid, regular_part):
    """Mode coefficients of the disk profile ``(r/r_in)**|k| * regular_part(r)``.

    Exact for even polynomial regular parts of degree below ``2 n_disk``;
    otherwise the L2-orthogonal projection onto the modes.
    """
    r = grid.fine_disk_r
    u = (r / grid.r_in) ** abs(grid.k) * regular_part(r)
    return grid.disk_modes_fine[0].T @ (grid.fine_disk_w * u)


def disk_regular_samples(grid, coeffs):
    """Regular part of a disk block at ``grid.disk_nodes``."""
    return grid.disk_modes_nodes @ coeffs


def _even_cheb(grid, c):
    even = np.zeros(2 * len(c) - 1)
    even[::2] = c
    return disk_coefficients(grid, lambda r: np.polynomial.chebyshev.chebval(r / grid.r_in, even))


def lifting_functions(op):
    """Low-degree polynomial raw states used to repair constraint residuals.

    They are represented exactly at every admissible resolution, so a repaired
    smooth state converges as the grid is refined.
    """
    grid, layout = op.grid, op.layout
    xa = _annulus_x(grid, grid.annulus_nodes)
    cols = []
    for b in ("w1", "w2", "w5"):
        for j in range(6):
            v = np.zeros(layout.size)
            v[layout.slice(b)] = np.polynomial.chebyshev.chebval(xa, np.eye(j + 1)[j])
            cols.append(v)
    for b in ("w3", "w4"):
        for j in range(2):
            v = np.zeros(layout.size)
            v[layout.slice(b)] = _even_cheb(grid, np.eye(j + 1)[j])
            cols.append(v)
    return np.array(cols).T


def smooth_state(op, annulus_coeffs, disk_coeffs):
    """Constrained raw state built from resolution-independent Chebyshev series.

    ``annulus_coeffs`` maps ``w1, w2, w5`` to Chebyshev coefficients in the
    annulus coordinate ``x ∈ [-1, 1]``. ``disk_coeffs`` maps ``w3, w4`` to
    coefficients of even Chebyshev polynomials ``T_{2j}(r/r_in)`` of the regular
    part. Annulus series are sampled at the nodes; disk series are projected
    onto the disk modes. The constraint residual is then
    removed with the minimum-norm combination of :func:`lifting_functions`,
    followed by the gram projection onto the constrained subspace.
    """
    grid, layout = op.grid, op.layout
    xa = _annulus_x(grid, grid.annulus_nodes)
    x = np.zeros(layout.size)
    for b, c in annulus_coeffs.items():
        x[layout.slice(b)] = np.polynomial.chebyshev.chebval(xa, c)
    for b, c in disk_coeffs.items():
        x[layout.slice(b)] = _even_cheb(grid, c)
    lift = lifting_functions(op)
    cl = op.constraints @ lift
    y = np.linalg.lstsq(cl, -(op.constraints @ x), rcond=None)[0]
    # the lifted vector satisfies the rows only to rounding; the gram projection
    # lands exactly in the constrained subspace and moves it by that rounding
    return op.state(op.lift(op.project(x + lift @ y)))


def random_smooth_coefficients(rng, degree=200, length=4.0):
    """Random decaying Chebyshev coefficients for :func:`smooth_state`."""
    decay = np.exp(-np.arange(degree + 1) / length)
    ann = {b: rng.standard_normal(degree + 1) * decay for b in ("w1", "w2", "w5")}
    disk = {b: rng.standard_normal(degree // 2 + 1) * decay[: degree // 2 + 1] for b in ("w3", "w4")}
    return ann, disk
