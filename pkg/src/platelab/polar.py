"""Radial spectral discretization of the disk-in-disk geometry.

Every field is reduced to a single angular Fourier mode ``U(r) exp(ik theta)``.
The plate occupies the annulus ``r_in < r < r_out`` and is sampled at
Chebyshev-Gauss-Lobatto nodes. The membrane occupies the disk ``r < r_in``.
Its nodes are the positive half of a Chebyshev grid on ``[-r_in, r_in]`` that
does not contain the origin.

Disk profiles are stored through their *regular part*: ``U(r) = (r/r_in)**|k| q(r)``
with ``q`` an even polynomial. This is the form of every smooth function of
mode ``k`` on the disk. It keeps the parity of ``U`` equal to the parity of
``k``, and it keeps gradient energies finite for ``|k| >= 2``, which a bare
parity condition does not. Samples of ``q`` are well scaled for every ``k``.
Samples of ``U`` underflow near the origin once ``k`` is large.

Boundary rows act on the concatenation ``[annulus profile | disk regular part]``.

Nodal samples of ``q`` still lose conditioning for large ``|k|``: the weight
``(r/r_in)**(2|k|)`` hides whatever ``q`` does near the center. The grid therefore
also carries the orthonormal disk modes ``Z_j = c_j (r/r_in)**|k| P_j(2 r²/r_in² - 1)``
(``P_j`` Jacobi with parameters ``(0, |k|)``), which span the same space as the
nodal regular parts. Their mass matrix is the identity, and their Laplacian
is an exact triangular matrix.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.special import eval_jacobi

from .errors import ResolutionError, UsageError
from .params import Geometry

K_MAX_DEFAULT = 24
MIN_POINTS = 8

BOUNDARY_ROWS = (
    "dirichlet_Γ",
    "neumann_Γ",
    "robin_Γ",
    "robin_I",
    "continuity_I",
    "B1_I",
    "B2_I",
    "normal_derivative_I",
)


def chebdif(n, order):
    """CGL nodes on [-1, 1] (ascending) and derivative matrices of orders 1..order.

    Weideman-Reddy recursion: node differences from trigonometric identities,
    flipping symmetry and the negative-sum diagonal keep rounding at the level
    of the matrix entries instead of accumulating through matrix powers.
    """
    if n < 2:
        raise ResolutionError("chebdif needs at least two points")
    npts = n
    n1, n2 = npts // 2, (npts + 1) // 2
    k = np.arange(npts)
    th = k * np.pi / (npts - 1)
    x = np.sin(np.pi * np.arange(npts - 1, -npts, -2) / (2 * (npts - 1)))
    t = np.tile(th / 2, (npts, 1))
    dx = 2 * np.sin(t.T + t) * np.sin(t - t.T)
    dx = np.vstack([dx[:n1], -np.flipud(np.fliplr(dx[:n2]))])
    dx[k, k] = 1.0
    c = ((-1.0) ** (k[:, None] + k[None, :])).astype(float)
    c[0] *= 2
    c[-1] *= 2
    c[:, 0] /= 2
    c[:, -1] /= 2
    z = 1.0 / dx
    z[k, k] = 0.0
    d = np.eye(npts)
    mats = []
    for ell in range(1, order + 1):
        d = ell * z * (c * np.diag(d)[:, None] - d)
        d[k, k] = -d.sum(axis=1)
        mats.append(d[::-1, ::-1].copy())
    return x[::-1].copy(), mats


def cheb(n):
    """CGL nodes on [-1, 1] (ascending, ``n + 1`` points) and the first-derivative matrix."""
    x, (d,) = chebdif(n + 1, 1)
    return x, d


def _interp_matrix(nodes, targets):
    # rows: targets, columns: nodal Lagrange basis
    # fixed rng: the weight computation permutes nodes randomly otherwise
    return BarycentricInterpolator(nodes, np.eye(len(nodes)), rng=0)(targets)


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True, eq=False)
class ModeGrid:
    """Radial grids, differentiation matrices and quadrature for one angular mode.

    Attributes
    ----------
    k : int
        Angular wavenumber.
    annulus_nodes : ndarray, shape (n_annulus,)
        Ascending CGL nodes on ``[r_in, r_out]``; ``[0]`` is on I, ``[-1]`` on Γ.
    disk_nodes : ndarray, shape (n_disk,)
        Ascending positive half-nodes on ``(0, r_in]``; ``[-1]`` is on I.
    d1, d2, d3, d4 : ndarray
        Annulus differentiation matrices (exact on polynomials of degree < n_annulus).
    disk_d1, disk_d2 : ndarray
        First and second derivative of the even regular part ``q``.
    quad_annulus, quad_disk : ndarray
        Area weights (``2*pi*r`` included). ``quad_disk`` integrates the regular
        part, which coincides with the profile for ``k = 0``.
    fine_* : ndarray
        Gauss-Legendre tables used to evaluate every energy integral exactly.
    disk_modes_nodes : ndarray, shape (n_disk, n_disk)
        Regular parts of the orthonormal disk modes at ``disk_nodes`` (columns).
    disk_modes_boundary : ndarray, shape (2, n_disk)
        ``Z_j(r_in)`` and ``Z_j'(r_in)``.
    disk_modes_fine : tuple
        ``Z_j``, ``Z_j'`` and ``Δ_k Z_j`` at the fine disk points.
    disk_modes_laplacian : ndarray
        Coefficients of ``Δ_k Z_j`` in the modes (strictly upper triangular).
    """

    geometry: Geometry
    k: int
    n_annulus: int
    n_disk: int
    annulus_nodes: np.ndarray
    disk_nodes: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    d4: np.ndarray
    disk_d1: np.ndarray
    disk_d2: np.ndarray
    quad_annulus: np.ndarray
    quad_disk: np.ndarray
    fine_annulus_r: np.ndarray
    fine_annulus_w: np.ndarray
    fine_annulus_tables: tuple
    fine_disk_r: np.ndarray
    fine_disk_w: np.ndarray
    fine_disk_tables: tuple
    disk_modes_nodes: np.ndarray
    disk_modes_boundary: np.ndarray
    disk_modes_fine: tuple
    disk_modes_laplacian: np.ndarray

    @property
    def r_in(self):
        return self.geometry.r_in

    @property
    def r_out(self):
        return self.geometry.r_out

    @property
    def disk_scale(self):
        """``(r/r_in)**|k|`` at the disk nodes."""
        return (self.disk_nodes / self.r_in) ** abs(self.k)

    def disk_profile(self, q):
        """Profile samples ``U`` from regular-part samples ``q``."""
        return self.disk_scale * np.asarray(q)

    def disk_regular(self, u):
        """Regular-part samples from profile samples (ill scaled for large ``k``)."""
        return np.asarray(u) / self.disk_scale

    def annulus_fine(self, values, order=0):
        """Derivative ``order`` (0..2) of the annulus interpolant at the fine points."""
        return self.fine_annulus_tables[order] @ values

    def disk_fine(self, q, order=0):
        """Derivative ``order`` (0..2) of the regular-part interpolant at the fine points."""
        return self.fine_disk_tables[order] @ q


def _disk_grid(n_disk, radius):
    """Half of a symmetric 2n-point CGL grid and the even-extension machinery."""
    x, (d1, d2) = chebdif(2 * n_disk, 2)
    r_full = radius * x
    d_full = (d1 / radius, d2 / radius ** 2)
    half = np.arange(n_disk, 2 * n_disk)  # positive nodes, ascending
    # even extension: the full-grid node i mirrors half node (2n-1-i) for i < n
    ext = np.zeros((2 * n_disk, n_disk))
    for col, i in enumerate(half):
        ext[i, col] = 1.0
        ext[2 * n_disk - 1 - i, col] = 1.0
    return r_full, d_full, half, ext


def _disk_modes(k, radius, n, r_nodes, r_fine, w_fine):
    """Orthonormal disk modes of wavenumber ``k`` sampled on nodes and fine points."""
    ka = abs(k)
    j = np.arange(n)
    norm = np.sqrt((2 * j + ka + 1) / (np.pi * radius ** 2))

    def jac(deg_shift, a, x):
        # P_{j-deg_shift}^{(a, ka+a)}(x) column by column, zero for negative degree
        out = np.zeros((len(x), n))
        for col in range(n):
            d = col - deg_shift
            if d >= 0:
                out[:, col] = eval_jacobi(d, a, ka + a, x)
        return out

    def regular(r):
        x = 2 * (r / radius) ** 2 - 1
        p0 = jac(0, 0, x)
        p1 = jac(1, 1, x) * (j + ka + 1) / 2
        p2 = jac(2, 2, x) * (j + ka + 1) * (j + ka + 2) / 4
        return x, p0 * norm, p1 * norm, p2 * norm

    _, q_nodes, _, _ = regular(r_nodes)
    x, q0, q1x, q2x = regular(r_fine)
    s = ((r_fine / radius) ** ka)[:, None]
    rr = r_fine[:, None]
    z0 = s * q0
    # q' = 4 r / R^2 P_x;  Δ_k(s q) = s [q'' + (2|k|+1) q'/r]
    z1 = s * (ka / rr * q0 + 4 * rr / radius ** 2 * q1x)
    lap = s * (8 / radius ** 2) * ((1 + x)[:, None] * q2x + (ka + 1) * q1x)
    bnd = np.vstack([norm, norm * (ka / radius + 4 / radius * (j * (j + ka + 1) / 2))])
    lap_coeffs = z0.T @ (w_fine[:, None] * lap)
    lap_coeffs = np.triu(lap_coeffs, 1)  # Δ_k Z_j has degree below Z_j
    return q_nodes, bnd, (z0, z1, lap), lap_coeffs


def build_mode_grid(geometry, k, n_annulus=32, n_disk=32, k_max=K_MAX_DEFAULT):
    """Build the radial discretization of mode ``k``.

    Raises
    ------
    ResolutionError
        If either point count is below 8 or ``|k| > k_max``.
    """
    if not isinstance(geometry, Geometry):
        raise UsageError("geometry must be a Geometry instance")
    if n_annulus < MIN_POINTS or n_disk < MIN_POINTS:
        raise ResolutionError(f"need n_annulus, n_disk >= {MIN_POINTS}, got {n_annulus}, {n_disk}")
    if abs(int(k)) != abs(k) or abs(k) > k_max:
        raise ResolutionError(f"angular wavenumber |k|={abs(k)} exceeds k_max={k_max}")
    k = int(k)
    ka = abs(k)
    r_in, r_out = geometry.r_in, geometry.r_out
    half_width = 0.5 * (r_out - r_in)

    x, mats = chebdif(n_annulus, 4)
    r_a = r_in + (x + 1.0) * half_width
    d1, d2, d3, d4 = (mat / half_width ** (j + 1) for j, mat in enumerate(mats))

    r_full, d_full, half, ext = _disk_grid(n_disk, r_in)
    r_d = r_full[half]
    dd1_full = d_full[0] @ ext
    dd2_full = d_full[1] @ ext
    disk_d1 = dd1_full[half]
    disk_d2 = dd2_full[half]

    # Gauss-Legendre tables; the disk integrands are polynomials of degree
    # <= 2|k| + 4 n_disk, the annulus integrands are analytic on [r_in, r_out].
    ng_a = 2 * n_annulus + 16
    xg, wg = np.polynomial.legendre.leggauss(ng_a)
    fa_r = r_in + (xg + 1.0) * half_width
    fa_w = 2 * np.pi * wg * half_width * fa_r
    pa = _interp_matrix(r_a, fa_r)
    ann_tables = (pa, pa @ d1, pa @ d2)

    ng_d = ka + 2 * n_disk + 8
    xg, wg = np.polynomial.legendre.leggauss(ng_d)
    fd_r = 0.5 * r_in * (xg + 1.0)
    fd_w = 2 * np.pi * wg * 0.5 * r_in * fd_r
    pd = _interp_matrix(r_full, fd_r)
    disk_tables = (pd @ ext, pd @ dd1_full, pd @ dd2_full)

    quad_a = fa_w @ pa
    quad_d = fd_w @ disk_tables[0]
    modes_nodes, modes_bnd, modes_fine, modes_lap = _disk_modes(k, r_in, n_disk, r_d, fd_r, fd_w)

    _freeze(r_a, r_d, d1, d2, d3, d4, disk_d1, disk_d2, quad_a, quad_d, fa_r, fa_w, fd_r, fd_w,
            *ann_tables, *disk_tables, modes_nodes, modes_bnd, *modes_fine, modes_lap)
    return ModeGrid(
        geometry=geometry, k=k, n_annulus=n_annulus, n_disk=n_disk,
        annulus_nodes=r_a, disk_nodes=r_d, d1=d1, d2=d2, d3=d3, d4=d4,
        disk_d1=disk_d1, disk_d2=disk_d2, quad_annulus=quad_a, quad_disk=quad_d,
        fine_annulus_r=fa_r, fine_annulus_w=fa_w, fine_annulus_tables=ann_tables,
        fine_disk_r=fd_r, fine_disk_w=fd_w, fine_disk_tables=disk_tables,
        disk_modes_nodes=modes_nodes, disk_modes_boundary=modes_bnd,
        disk_modes_fine=modes_fine, disk_modes_laplacian=modes_lap,
    )


def laplacian_k(grid, domain):
    """Mode Laplacian ``d2/dr2 + (1/r) d/dr - k^2/r^2``.

    On the disk the matrix acts on regular-part samples and returns the regular
    part of the Laplacian, ``q'' + (2|k|+1) q'/r``.
    """
    k2 = grid.k ** 2
    if domain == "annulus":
        inv_r = 1.0 / grid.annulus_nodes
        return grid.d2 + inv_r[:, None] * grid.d1 - np.diag(k2 * inv_r ** 2)
    if domain == "disk":
        inv_r = 1.0 / grid.disk_nodes
        return grid.disk_d2 + (2 * abs(grid.k) + 1) * inv_r[:, None] * grid.disk_d1
    raise UsageError(f"unknown domain {domain!r}; expected 'annulus' or 'disk'")


def bilaplacian_k(grid):
    """Square of the annulus mode Laplacian on the shared grid."""
    lap = laplacian_k(grid, "annulus")
    return lap @ lap


def _annulus_row(grid, index, coeffs):
    """Row evaluating ``sum_j coeffs[j] * U^(j)`` at annulus node ``index``."""
    mats = (np.eye(grid.n_annulus), grid.d1, grid.d2, grid.d3)
    row = np.zeros(grid.n_annulus)
    for c, mat in zip(coeffs, mats):
        if c:
            row += c * mat[index]
    return row


def plate_b1_coeffs(k, radius, mu):
    """Coefficients of (U, U', U'', U''') in the mode form of the first boundary operator.

    ``Δu + (1-mu) B1 u`` equals ``u_rr + mu (u_r/r + u_θθ/r^2)`` on any circle;
    it is even in the orientation of the normal.
    """
    return (-mu * k ** 2 / radius ** 2, mu / radius, 1.0, 0.0)


def plate_b2_coeffs(k, radius, mu, sign):
    """Coefficients of (U, U', U'', U''') in the mode form of the second boundary operator.

    ``∂_ν Δu + (1-mu) ∂_τ B2 u`` on a circle with ``ν = sign * r_hat``.
    """
    k2 = k ** 2
    r = radius
    return (
        sign * (3.0 - mu) * k2 / r ** 3,
        -sign * (1.0 + (2.0 - mu) * k2) / r ** 2,
        sign / r,
        sign,
    )


def boundary_rows(grid, which, mu=None, kappa=None):
    """Boundary functional(s) acting on ``[annulus profile | disk regular part]``.

    Outward normal of the plate: ``+r_hat`` on Γ (``r = r_out``), ``-r_hat`` on I.
    ``continuity_I`` is ``U_plate(r_in) - U_disk(r_in)``. ``normal_derivative_I``
    returns two rows: ``∂_ν`` of the plate profile and ``∂_ν`` of the disk profile,
    both taken with the plate normal ``ν = -r_hat``.
    """
    na, nd = grid.n_annulus, grid.n_disk
    out = np.zeros(na + nd)
    ia, ig = 0, na - 1
    r_in, r_out, k = grid.r_in, grid.r_out, grid.k
    if which in ("B1_I", "B2_I") and mu is None:
        raise UsageError(f"{which} needs the Poisson ratio mu")
    if which in ("robin_Γ", "robin_I") and kappa is None:
        raise UsageError(f"{which} needs kappa")
    if which in ("B1_Γ", "B2_Γ"):
        raise UsageError("the plate boundary operators only act on the interface I in this model")
    if which == "dirichlet_Γ":
        out[ig] = 1.0
    elif which == "neumann_Γ":
        out[:na] = grid.d1[ig]
    elif which == "robin_Γ":
        out[:na] = grid.d1[ig]
        out[ig] += kappa
    elif which == "robin_I":
        out[:na] = -grid.d1[ia]
        out[ia] += kappa
    elif which == "continuity_I":
        out[ia] = 1.0
        out[na + nd - 1] = -1.0
    elif which == "B1_I":
        out[:na] = _annulus_row(grid, ia, plate_b1_coeffs(k, r_in, mu))
    elif which == "B2_I":
        out[:na] = _annulus_row(grid, ia, plate_b2_coeffs(k, r_in, mu, -1.0))
    elif which == "normal_derivative_I":
        rows = np.zeros((2, na + nd))
        rows[0, :na] = -grid.d1[ia]
        rows[1, na:] = -disk_derivative_row(grid)
        return rows
    else:
        raise UsageError(f"unknown boundary row {which!r}; expected one of {BOUNDARY_ROWS}")
    return out


def disk_derivative_row(grid):
    """Row giving ``U'(r_in)`` of the disk profile from its regular-part samples."""
    row = grid.disk_d1[-1].copy()
    row[-1] += abs(grid.k) / grid.r_in
    return row


def geometric_condition_scan(geometry, x0, n_samples=720):
    """Range of ``(x - x0)·ν`` over the interface, ``ν`` the plate's outward normal.

    On I the plate normal points to the center, so the value at angle θ is
    ``-r_in + x0·(cos θ, sin θ)``. The extremal directions ``±x0/|x0|`` are added
    to the uniform sample so the reported range is exact.
    """
    x0 = np.asarray(x0, dtype=float).reshape(2)
    theta = np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False)
    if np.any(x0):
        phi = np.arctan2(x0[1], x0[0])
        theta = np.concatenate([theta, [phi, phi + np.pi]])
    pts = geometry.r_in * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    nu = -pts / geometry.r_in
    vals = np.einsum("ij,ij->i", pts - x0, nu)
    return float(vals.min()), float(vals.max())


def annulus_norms(grid, u):
    """Squared norms of a mode profile on the annulus: (L2 boundary, H1, L2).

    The boundary norm covers both circles of the plate.
    """
    u = np.asarray(u)
    vals = grid.annulus_fine(u)
    der = grid.annulus_fine(u, 1)
    r = grid.fine_annulus_r
    w = grid.fine_annulus_w
    l2 = float(w @ np.abs(vals) ** 2)
    grad = float(w @ (np.abs(der) ** 2 + grid.k ** 2 * np.abs(vals / r) ** 2))
    bnd = 2 * np.pi * (grid.r_in * abs(u[0]) ** 2 + grid.r_out * abs(u[-1]) ** 2)
    return bnd, l2 + grad, l2


def trace_constant_fit(geometry, n_annulus, n_functions=100, k_band=6, freq_band=8.0, seed=0):
    """Fit the constant of ``||u||^2_{L2(∂Ω1)} <= C ||u||_{H1} ||u||_{L2}``.

    Each test function is a random finite Fourier sum over modes ``|k| <= k_band``
    with band-limited radial profiles ``sum a_j cos(w_j s) + b_j sin(w_j s)``,
    ``s = r - r_in`` and ``w_j <= freq_band``. Modes are orthogonal in all three
    norms, so each norm is a sum over modes.
    Returns ``(C, ratios)`` where ``C`` is the maximal ratio.
    """
    rng = np.random.default_rng(seed)
    grids = [build_mode_grid(geometry, k, n_annulus, MIN_POINTS, k_max=k_band) for k in range(k_band + 1)]
    ratios = np.empty(n_functions)
    for i in range(n_functions):
        bnd = h1 = l2 = 0.0
        for grid in grids:
            mult = 1 if grid.k == 0 else 2  # ±k carry the same profile norm
            s = grid.annulus_nodes - geometry.r_in
            nterm = 4
            freqs = rng.uniform(0.0, freq_band, nterm)
            a = rng.standard_normal(nterm) / (1.0 + grid.k)
            b = rng.standard_normal(nterm) / (1.0 + grid.k)
            u = (a * np.cos(np.outer(s, freqs)) + b * np.sin(np.outer(s, freqs))).sum(axis=1)
            nb, nh, nl = annulus_norms(grid, u)
            bnd += mult * nb
            h1 += mult * nh
            l2 += mult * nl
        ratios[i] = bnd / np.sqrt(h1 * l2)
    return float(ratios.max()), ratios
