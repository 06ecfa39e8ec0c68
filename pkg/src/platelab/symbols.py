"""Frozen-coefficient symbol analysis of the thermoelastic plate system.

With ``λ`` the Laplace variable and ``s = |ξ|²``, the principal symbol of the
plate/heat pair has determinant

    ρ0ρ1 λ³ + ρ1 β s λ² + (β1 ρ0 + α²) s² λ + β1 β s³,

which after dividing by ``ρ0ρ1`` and scaling ``λ = s μ`` becomes the monic cubic
``μ³ + a μ² + b μ + c``. On a half-space ``x2 > 0`` with tangential frequency
``ξ1``, the substitution ``ξ2 = -iκ`` turns the determinant into a sextic in ``κ``.
The three roots with ``Re κ < 0`` give the decaying solutions tested against the
boundary symbols.
"""

from dataclasses import dataclass

import numpy as np
import numpy.polynomial.polynomial as npoly
import scipy.linalg as sla

from .errors import ConsistencyError, DegenerateSymbolError, ParameterError, UsageError
from .params import PhysicalParams

BC_SETS = ("B1", "B2")
SPLIT_TOL = 1e-10
BOUNDARY_SHIFT = 1e-8
ROOT_COINCIDENCE = 1e-7
BASIS_DEPENDENCE = 1e-6


@dataclass(frozen=True)
class CubicCoeffs:
    """Monic cubic ``λ³ + aλ² + bλ + c`` with positive coefficients."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ParameterError(f"cubic coefficient {name}={v!r} must be positive", field=name)

    @property
    def routh(self):
        return self.a * self.b > self.c

    def __call__(self, lam):
        return ((lam + self.a) * lam + self.b) * lam + self.c


@dataclass(frozen=True)
class SymbolPoint:
    lam: complex
    xi: tuple

    def __post_init__(self):
        if self.lam == 0 and not any(self.xi):
            raise DegenerateSymbolError("the symbol point (λ, ξ) = (0, 0) is excluded")


@dataclass(frozen=True)
class LSProblem:
    params: PhysicalParams
    xi1: float
    lam: complex
    bc_set: str

    def __post_init__(self):
        if self.bc_set not in BC_SETS:
            raise UsageError(f"unknown boundary set {self.bc_set!r}; expected one of {BC_SETS}")
        if complex(self.lam).real < 0:
            raise UsageError("the Lopatinskii check needs Re λ >= 0")
        if self.xi1 == 0 and self.lam == 0:
            raise DegenerateSymbolError("(ξ1, λ) = (0, 0) is excluded")


# ----------------------------------------------------------------------------
# cubic


def characteristic_cubic(params, xi_norm=1.0):
    """Coefficients of the ``|ξ|²``-scaled characteristic cubic.

    The result is independent of ``xi_norm`` by homogeneity. ``xi_norm = 0``
    raises :class:`DegenerateSymbolError`, because the determinant is then
    just ``λ³``.
    """
    if xi_norm < 0:
        raise ParameterError(f"xi_norm={xi_norm} must be nonnegative", field="xi_norm")
    if xi_norm == 0:
        raise DegenerateSymbolError("at ξ = 0 the determinant reduces to λ³")
    p = params
    for name in ("alpha", "beta", "beta1", "rho0", "rho1"):
        if getattr(p, name) <= 0:
            raise ParameterError(f"{name} must be positive", field=name)
    return CubicCoeffs(
        a=p.beta / p.rho0,
        b=(p.alpha ** 2 + p.beta1 * p.rho0) / (p.rho0 * p.rho1),
        c=p.beta * p.beta1 / (p.rho0 * p.rho1),
    )


def hurwitz_stable(coeffs):
    """All roots in the open left half-plane, decided by ``a b > c``."""
    if not isinstance(coeffs, CubicCoeffs):
        coeffs = CubicCoeffs(*coeffs)
    return coeffs.routh


def _real_root(a, b, c):
    # Cardano/Viète for the depressed cubic t³ + p t + q, λ = t - a/3
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc >= 0:
        sq = np.sqrt(disc)
        # add the two cube roots without cancellation
        u = np.cbrt(-q / 2.0 - np.copysign(sq, q))
        t = u - p / (3.0 * u) if u != 0 else 0.0
    else:
        m = 2.0 * np.sqrt(-p / 3.0)
        arg = np.clip(3.0 * q / (p * m), -1.0, 1.0)
        t = m * np.cos(np.arccos(arg) / 3.0)  # largest of the three real roots
    lam = t - a / 3.0
    # Newton polish on the original polynomial
    for _ in range(4):
        f = ((lam + a) * lam + b) * lam + c
        df = (3 * lam + 2 * a) * lam + b
        if df == 0:
            break
        step = f / df
        new = lam - step
        if abs(((new + a) * new + b) * new + c) >= abs(f):
            break
        lam = new
    return lam


def _quadratic_roots(e, f):
    # roots of x² + e x + f without cancellation
    disc = e * e - 4.0 * f
    if disc >= 0:
        s = -0.5 * (e + np.copysign(np.sqrt(disc), e))
        if s == 0:
            return np.array([0.0 + 0j, 0.0 + 0j])
        return np.array([s + 0j, f / s + 0j])
    re = -0.5 * e
    im = 0.5 * np.sqrt(-disc)
    return np.array([complex(re, -im), complex(re, im)])


def cubic_roots(coeffs):
    """The three roots in closed form, sorted by (real part, imaginary part).

    One real root comes from Cardano's formula (trigonometric branch for three
    real roots) and is polished by Newton's method. The remaining quadratic
    factor is solved in cancellation-free form.
    """
    if not isinstance(coeffs, CubicCoeffs):
        coeffs = CubicCoeffs(*coeffs)
    a, b, c = coeffs.a, coeffs.b, coeffs.c
    r = _real_root(a, b, c)
    e = a + r
    f = b + e * r
    if abs(r) > 1e-300:
        # the constant term gives a better-conditioned f when |r| dominates
        alt = -c / r
        if abs(r) ** 2 > abs(b):
            f = alt
    roots = np.concatenate([[complex(r, 0.0)], _quadratic_roots(e, f)])
    order = np.lexsort((roots.imag, roots.real))
    return roots[order]


# ----------------------------------------------------------------------------
# parameter ellipticity


def symbol_determinant(params, lam, xi):
    """``det(λ - A⁰(ξ))`` normalized by ``ρ0ρ1``."""
    cc = characteristic_cubic(params)
    s = float(np.sum(np.square(np.asarray(xi, dtype=float))))
    return lam ** 3 + cc.a * s * lam ** 2 + cc.b * s ** 2 * lam + cc.c * s ** 3


@dataclass(frozen=True)
class EllipticityScan:
    min_abs_det: float
    argmin: SymbolPoint
    n_points: int


def ellipticity_scan(params, grid_density=64):
    """Minimum of ``|det(λ - A⁰(ξ))|`` on ``|λ| + |ξ|² = 1``, ``Re λ >= 0``.

    The determinant depends on ``ξ`` only through ``|ξ|``, so the scan runs over
    ``|ξ|² ∈ [0, 1]`` and ``arg λ ∈ [-π/2, π/2]``. Both ranges include their
    endpoints. The minimizer is reported with ``ξ`` along the first axis.
    """
    if int(grid_density) != grid_density or grid_density < 8:
        raise UsageError("grid_density must be an integer >= 8")
    n = int(grid_density)
    s = np.linspace(0.0, 1.0, n)
    phi = np.linspace(-np.pi / 2, np.pi / 2, n)
    ss, pp = np.meshgrid(s, phi, indexing="ij")
    lam = (1.0 - ss) * np.exp(1j * pp)
    cc = characteristic_cubic(params)
    det = lam ** 3 + cc.a * ss * lam ** 2 + cc.b * ss ** 2 * lam + cc.c * ss ** 3
    vals = np.abs(det)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    point = SymbolPoint(complex(lam[i, j]), (float(np.sqrt(ss[i, j])), 0.0))
    return EllipticityScan(float(vals[i, j]), point, vals.size)


# ----------------------------------------------------------------------------
# Lopatinskii-Shapiro


def boundary_symbol(params, xi1, bc_set):
    """Rows of the principal boundary symbol acting on ``(u, u', u'', u''', θ, θ')``.

    Derivatives are along the interior normal ``x2``; the outward normal is
    ``-x2``, so ``∂ν = -∂2`` and the tangential second derivative is ``-ξ1²``.
    """
    p = params
    x2 = xi1 * xi1
    if bc_set == "B1":
        # clamped plate, principal part of the Robin law
        return np.array([
            [1.0, 0, 0, 0, 0, 0],
            [0, -1.0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, -1.0],
        ])
    if bc_set == "B2":
        mu = p.mu
        return np.array([
            [-p.beta1 * mu * x2, 0, p.beta1, 0, p.alpha, 0],
            [0, p.beta1 * (2 - mu) * x2, 0, -p.beta1, 0, -p.alpha],
            [0, 0, 0, 0, 0, -1.0],
        ])
    raise UsageError(f"unknown boundary set {bc_set!r}; expected one of {BC_SETS}")


def half_line_system(params, xi1, lam):
    """First-order form ``y' = M y`` of the frozen half-line ODEs, ``y = (u, u', u'', u''', θ, θ')``."""
    p = params
    x2 = xi1 * xi1
    m = np.zeros((6, 6), dtype=complex)
    m[0, 1] = m[1, 2] = m[2, 3] = m[4, 5] = 1.0
    # β θ'' = (ρ0 λ + β ξ1²) θ - α λ (u'' - ξ1² u)
    th2 = np.zeros(6, dtype=complex)
    th2[4] = (p.rho0 * lam + p.beta * x2) / p.beta
    th2[2] = -p.alpha * lam / p.beta
    th2[0] = p.alpha * lam * x2 / p.beta
    m[5] = th2
    # β1 u'''' = -ρ1 λ² u - β1 (ξ1⁴ u - 2 ξ1² u'') - α (θ'' - ξ1² θ)
    u4 = np.zeros(6, dtype=complex)
    u4[0] = (-p.rho1 * lam ** 2 - p.beta1 * x2 ** 2) / p.beta1
    u4[2] = 2 * x2
    u4 -= p.alpha / p.beta1 * th2
    u4[4] += p.alpha * x2 / p.beta1
    m[3] = u4
    return m


def sextic_coefficients(params, xi1, lam):
    """Ascending coefficients in ``κ`` of ``det(λ - A⁰(ξ1, -iκ))`` (times ``ρ0ρ1``)."""
    p = params
    s = np.array([xi1 * xi1, 0.0, -1.0])
    terms = (
        np.array([p.rho0 * p.rho1 * lam ** 3]),
        p.rho1 * p.beta * lam ** 2 * s,
        (p.beta1 * p.rho0 + p.alpha ** 2) * lam * npoly.polypow(s, 2),
        p.beta1 * p.beta * npoly.polypow(s, 3),
    )
    out = np.zeros(7, dtype=complex)
    for t in terms:
        out[: len(t)] += t
    return out


@dataclass(frozen=True)
class LSResult:
    min_sv: float
    stable_roots: np.ndarray
    basis: str
    lam_used: complex


def _symbol_null(params, s, lam):
    p = params
    mat = np.array([
        [p.rho1 * lam ** 2 + p.beta1 * s * s, -p.alpha * s],
        [p.alpha * s * lam, p.rho0 * lam + p.beta * s],
    ])
    _, _, vh = np.linalg.svd(mat)
    return vh[-1].conj()


def lopatinskii_shapiro_check(problem):
    """Smallest singular value of the column-normalized 3×3 Lopatinskii matrix.

    ``Re λ = 0`` is replaced by ``λ + 1e-8``. Stable roots that coincide within
    1e-7 (relative) switch the solution basis from exponentials to an
    orthonormal basis of the stable invariant subspace of
    :func:`half_line_system`. That subspace contains the polynomial × exponential
    solutions. The same switch happens when the normalized exponential
    solutions are numerically dependent (smallest singular value below 1e-6).

    Raises
    ------
    ConsistencyError
        The roots do not split 3/3 across the imaginary axis.
    """
    p, xi1, lam = problem.params, float(problem.xi1), complex(problem.lam)
    if lam.real == 0:
        lam = lam + BOUNDARY_SHIFT
    roots = npoly.polyroots(sextic_coefficients(p, xi1, lam))
    scale = max(1.0, np.max(np.abs(roots)))
    if np.any(np.abs(roots.real) <= SPLIT_TOL * scale):
        raise ConsistencyError(f"root on the imaginary axis at ξ1={xi1}, λ={lam}")
    stable = np.sort_complex(roots[roots.real < 0])
    if len(stable) != 3:
        raise ConsistencyError(f"roots split {len(stable)}/{6 - len(stable)} at ξ1={xi1}, λ={lam}")
    bmat = boundary_symbol(p, xi1, problem.bc_set)
    gaps = [abs(stable[i] - stable[j]) / max(abs(stable[i]), abs(stable[j]), 1e-300)
            for i in range(3) for j in range(i + 1, 3)]
    sol = None
    if min(gaps) > ROOT_COINCIDENCE:
        cols = []
        for kap in stable:
            u, th = _symbol_null(p, xi1 * xi1 - kap * kap, lam)
            cols.append([u, kap * u, kap ** 2 * u, kap ** 3 * u, th, kap * th])
        sol = np.array(cols).T
        sol = sol / np.linalg.norm(sol, axis=0)
        kind = "exponential"
        # a split cluster (e.g. a triple root moved by the boundary shift) leaves
        # the exponentials numerically dependent
        if np.linalg.svd(sol, compute_uv=False)[-1] < BASIS_DEPENDENCE:
            sol = None
    if sol is None:
        t, z, _ = sla.schur(half_line_system(p, xi1, lam), output="complex", sort="lhp")
        sol = z[:, :3]
        kind = "generalized"
    lop = bmat @ sol
    norms = np.linalg.norm(lop, axis=0)
    if np.any(norms == 0):
        return LSResult(0.0, stable, kind, lam)
    lop = lop / norms
    return LSResult(float(np.linalg.svd(lop, compute_uv=False)[-1]), stable, kind, lam)


def ls_grid(params, bc_set, n=32):
    """Lopatinskii values on ``ξ1² + |λ| = 1``, ``ξ1 ∈ [0, 1]``, ``arg λ ∈ [-π/2, π/2]``.

    The excluded corner ``(ξ1, λ) = (0, 0)`` does not lie on this slice.
    Returns ``(xi1, lam, values)`` arrays of shape ``(n, n)``.
    """
    s = np.linspace(0.0, 1.0, n)
    phi = np.linspace(-np.pi / 2, np.pi / 2, n)
    xi = np.sqrt(s)[:, None] * np.ones(n)
    lam = (1.0 - s)[:, None] * np.exp(1j * phi)[None, :]
    vals = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            vals[i, j] = lopatinskii_shapiro_check(LSProblem(params, xi[i, j], lam[i, j], bc_set)).min_sv
    return xi, lam, vals
