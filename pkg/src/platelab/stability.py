"""Stability experiments on the per-mode reduced generators.

Reduced coordinates are orthonormal in the energy metric, so every norm here
is a plain Euclidean norm of reduced vectors.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import ztrtrs

from .errors import NumericalError, ResolutionError, SingularityError, UsageError
from .operator import assemble, disk_coefficients
from .polar import build_mode_grid

SINGULAR_TOL = 1e-12
EXPONENTIAL_ABSCISSA = -1e-3
EXPONENTIAL_SLOPE = 0.1
POLYNOMIAL_SLOPE = 0.25
POLYNOMIAL_RESIDUAL = 0.15
POLYNOMIAL_TAIL_START = 4
ANALYTIC_RATE_BOUND = 192.0
VERDICTS = ("exponential", "polynomial-evidence", "inconclusive")
PRESETS = ("plate_bump", "membrane_bump", "thermal_spot", "mixed")


def build_operators(params, geometry, modes, n_annulus=32, n_disk=32, variant="full", k_max=None):
    """Assemble one :class:`~platelab.operator.ModeOperator` per wavenumber in ``modes``."""
    modes = [int(k) for k in modes]
    if not modes:
        raise UsageError("at least one mode is required")
    kmax = max(abs(k) for k in modes) if k_max is None else k_max
    return [assemble(params, build_mode_grid(geometry, k, n_annulus, n_disk, k_max=kmax), variant) for k in modes]


# ----------------------------------------------------------------------------
# spectra


def _eigvals(op):
    if "eigvals" not in op._cache:
        try:
            op._cache["eigvals"] = np.linalg.eigvals(op.reduced_generator)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigensolver failed for mode k={op.k}", mode=op.k) from exc
    return op._cache["eigvals"]


def _schur(op):
    if "schur" not in op._cache:
        try:
            t, _ = sla.schur(op.reduced_generator.astype(complex), output="complex")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"Schur decomposition failed for mode k={op.k}", mode=op.k) from exc
        op._cache["schur"] = t
        op._cache.setdefault("eigvals", np.diag(t).copy())
    return op._cache["schur"]


def spectrum(op):
    """Eigenvalues of the reduced generator sorted by real part, largest first."""
    ev = _eigvals(op)
    order = np.lexsort((-ev.imag, -ev.real))
    return ev[order]


def spectral_abscissa(op):
    return float(np.max(_eigvals(op).real))


def spectral_abscissa_profile(params, geometry, k_max, n=32, n_disk=None):
    """Largest real part of the spectrum for each mode ``k = 0..k_max``."""
    if k_max < 8:
        raise UsageError("spectral_abscissa_profile needs k_max >= 8")
    ops = build_operators(params, geometry, range(k_max + 1), n, n_disk or n)
    return np.array([spectral_abscissa(op) for op in ops])


# ----------------------------------------------------------------------------
# resolvent


def resolvent_norm(op, lam):
    """``||(λ - A)^{-1}||`` in the energy norm, via one dense SVD.

    Raises
    ------
    SingularityError
        ``λ`` lies within 1e-12 of an eigenvalue.
    """
    lam = complex(lam)
    ev = _eigvals(op)
    if np.min(np.abs(ev - lam)) <= SINGULAR_TOL * max(1.0, abs(lam)):
        raise SingularityError(f"λ={lam} is an eigenvalue of mode k={op.k}", mode=op.k)
    a = op.reduced_generator
    mat = lam * np.eye(a.shape[0]) - a
    try:
        smin = sla.svdvals(mat)[-1]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed for mode k={op.k}", mode=op.k) from exc
    if smin == 0:
        raise SingularityError(f"λ={lam} is numerically singular for mode k={op.k}", mode=op.k)
    return float(1.0 / smin)


def _smallest_sv_triangular(t, lam, block=6, tol=1e-8, maxit=25):
    """Smallest singular value of ``iλ - T`` for upper-triangular ``T``.

    Block inverse iteration on ``(M^H M)^{-1}``: two triangular solves per sweep.
    A dense SVD is the fallback if the iteration stalls (clustered small
    singular values, as for strongly damped modes).
    """
    n = t.shape[0]
    m = -t.copy()
    m[np.diag_indices(n)] += 1j * lam
    rng = np.random.default_rng(0)
    x, _ = np.linalg.qr(rng.standard_normal((n, min(block, n))) + 0j)
    old = np.inf
    for _ in range(maxit):
        y, info = ztrtrs(m, x, trans=2)
        if info != 0:
            return 0.0
        y, info = ztrtrs(m, y)
        if info != 0:
            return 0.0
        x, _ = np.linalg.qr(y)
        s = np.linalg.svd(m @ x, compute_uv=False)[-1]
        if abs(s - old) <= tol * s:
            return float(s)
        old = s
    return float(sla.svdvals(m)[-1])


@dataclass(frozen=True)
class ResolventScan:
    lambdas: np.ndarray
    norms: np.ndarray
    per_mode: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.lambdas) <= 0):
            raise UsageError("scan frequencies must be strictly increasing")
        if np.any(~np.isfinite(self.norms)) or np.any(self.norms <= 0):
            raise NumericalError("resolvent scan produced non-finite or nonpositive norms")


def log_grid(lam_min, lam_max, points_per_decade=12):
    if not 0 < lam_min < lam_max:
        raise UsageError("need 0 < lam_min < lam_max")
    n = int(np.ceil(points_per_decade * np.log10(lam_max / lam_min))) + 1
    return np.logspace(np.log10(lam_min), np.log10(lam_max), n)


def iter_operators(params, geometry, modes, n_annulus=32, n_disk=32, variant="full"):
    """Lazy :func:`build_operators`: one mode in memory at a time."""
    modes = [int(k) for k in modes]
    kmax = max(abs(k) for k in modes)
    for k in modes:
        yield assemble(params, build_mode_grid(geometry, k, n_annulus, n_disk, k_max=kmax), variant)


def mode_scan(op, lam_min=2.0, lam_max=200.0, points_per_decade=12, include_resonances=True):
    """``(lambdas, norms)`` of ``||(iλ - A_k)^{-1}||`` for one mode.

    The mode is evaluated on the shared log grid plus, with
    ``include_resonances``, at the imaginary parts of its own eigenvalues in
    range, so resonance peaks are hit exactly rather than sampled.
    """
    t = _schur(op)
    lams = log_grid(lam_min, lam_max, points_per_decade)
    if include_resonances:
        ev = np.diag(t).imag
        lams = np.union1d(lams, ev[(ev >= lam_min) & (ev <= lam_max)])
    vals = np.empty(len(lams))
    for i, lam in enumerate(lams):
        smin = _smallest_sv_triangular(t, lam)
        if smin <= 0:
            raise SingularityError(f"iλ={lam}i is numerically an eigenvalue of mode k={op.k}", mode=op.k)
        vals[i] = 1.0 / smin
    return lams, vals


def merge_mode_scans(parts):
    """Combine ``(k, lambdas, norms)`` triples into a :class:`ResolventScan` (max over modes)."""
    best = {}
    for k, lams, vals in parts:
        for lam, val in zip(lams, vals):
            key = float(lam)
            if key not in best or val > best[key][0]:
                best[key] = (float(val), int(k))
    lam_sorted = np.array(sorted(best))
    return ResolventScan(
        lambdas=lam_sorted,
        norms=np.array([best[x][0] for x in lam_sorted]),
        per_mode=np.array([best[x][1] for x in lam_sorted], dtype=int),
    )


def resolvent_scan(ops, lam_min=2.0, lam_max=200.0, points_per_decade=12, include_resonances=True):
    """``max_k ||(iλ - A_k)^{-1}||`` along the imaginary axis (see :func:`mode_scan`).

    ``ops`` may be any iterable, e.g. :func:`iter_operators`.
    """
    return merge_mode_scans(
        (op.k, *mode_scan(op, lam_min, lam_max, points_per_decade, include_resonances)) for op in ops
    )


@dataclass(frozen=True)
class GrowthFit:
    """Log-log fit of the resolvent envelope.

    ``residual`` is ``sqrt(SS_res / SS_tot)`` of the fit in log10 (scale free;
    zero for an exact power law or a constant). ``rms_residual`` is the plain
    RMS misfit in decades. ``band`` is two standard errors of the slope.
    """

    r_est: float
    intercept: float
    residual: float
    rms_residual: float
    band: float
    n_peaks: int
    peak_lambdas: np.ndarray
    peak_norms: np.ndarray
    conclusive: bool


def envelope(scan, lam_min=None, lam_max=None, bins_per_decade=6):
    """Per-bin maxima of the scan on a logarithmic binning of ``[lam_min, lam_max]``."""
    lo = scan.lambdas[0] if lam_min is None else lam_min
    hi = scan.lambdas[-1] if lam_max is None else lam_max
    nb = max(1, int(round(bins_per_decade * np.log10(hi / lo))))
    edges = np.logspace(np.log10(lo), np.log10(hi), nb + 1)
    lam, val = [], []
    for i in range(nb):
        upper = scan.lambdas <= edges[i + 1] if i == nb - 1 else scan.lambdas < edges[i + 1]
        sel = (scan.lambdas >= edges[i]) & upper
        if np.any(sel):
            j = np.flatnonzero(sel)[np.argmax(scan.norms[sel])]
            lam.append(scan.lambdas[j])
            val.append(scan.norms[j])
    return np.array(lam), np.array(val)


def growth_exponent_fit(scan, lam_min=None, lam_max=None, bins_per_decade=6):
    """Least-squares slope of ``log10`` envelope versus ``log10 λ``.

    Fewer than three envelope points gives ``conclusive=False`` with NaN fields.
    """
    lam, val = envelope(scan, lam_min, lam_max, bins_per_decade)
    if len(lam) < 3:
        nan = float("nan")
        return GrowthFit(nan, nan, nan, nan, nan, len(lam), lam, val, False)
    x, y = np.log10(lam), np.log10(val)
    (slope, icpt), ss_res, *_ = np.polyfit(x, y, 1, full=True)
    ss_res = float(ss_res[0]) if len(ss_res) else 0.0
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    resid = np.sqrt(ss_res / ss_tot) if ss_tot > 1e-24 else 0.0
    dof = len(x) - 2
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = np.sqrt(ss_res / dof / sxx) if dof > 0 and sxx > 0 else 0.0
    return GrowthFit(
        r_est=float(slope), intercept=float(icpt), residual=float(resid),
        rms_residual=float(np.sqrt(ss_res / len(x))), band=float(2 * stderr),
        n_peaks=len(lam), peak_lambdas=lam, peak_norms=val, conclusive=True,
    )


def classify(abscissa, fit=None):
    """Deterministic verdict from the abscissa profile (index = k) and the envelope fit.

    * ``exponential``: every abscissa <= -1e-3 and (if a fit is given) slope <= 0.1.
    * ``polynomial-evidence``: the abscissa tail ``k >= 4`` increases strictly,
      stays negative and ends within a tenth of its value at ``k = 4``. If a fit
      is given it must also have slope >= 0.25, residual <= 0.15 and slope <= 192.
    * ``inconclusive`` otherwise, including a fit with too few envelope points.

    Without a fit the verdict rests on the spectrum alone.
    """
    ab = np.asarray(abscissa, dtype=float)
    if fit is not None and not fit.conclusive:
        return "inconclusive"
    if np.all(ab <= EXPONENTIAL_ABSCISSA) and (fit is None or fit.r_est <= EXPONENTIAL_SLOPE):
        return "exponential"
    tail = ab[POLYNOMIAL_TAIL_START:]
    approaches_zero = (
        len(tail) >= 2 and np.all(np.diff(tail) > 0) and tail[-1] < 0 and abs(tail[-1]) < 0.1 * abs(tail[0])
    )
    if approaches_zero and (fit is None or (
        fit.r_est >= POLYNOMIAL_SLOPE and fit.residual <= POLYNOMIAL_RESIDUAL and fit.r_est <= ANALYTIC_RATE_BOUND
    )):
        return "polynomial-evidence"
    return "inconclusive"


@dataclass
class StabilityReport:
    spectral_abscissa_per_mode: np.ndarray
    growth: GrowthFit = None
    decay: "DecayFit" = None
    verdict: str = "inconclusive"
    extras: dict = field(default_factory=dict)


# ----------------------------------------------------------------------------
# time evolution


def _bump(s):
    return 256.0 * s ** 4 * (1.0 - s) ** 4


def preset_state(op, preset):
    """Reduced coordinates of a named initial profile for mode ``op.k``.

    Profiles, with ``s = (r - r_in)/(r_out - r_in)``, ``b(s) = 256 s⁴(1-s)⁴`` and
    regular part ``m(r) = (1 - r²/r_in²)²`` on the disk (profile ``(r/r_in)^|k| m``):

    * ``plate_bump``: ``w1 = b``.
    * ``membrane_bump``: ``w3 = m``.
    * ``thermal_spot``: ``w5 = b``.
    * ``mixed``: ``w1 = b``, ``w2 = b/2``, ``w3 = m``, ``w4 = m/2``, ``w5 = b``.

    All of them satisfy every constraint. Each mode is scaled by ``(1+|k|)^-2``,
    and the state is gram-projected onto the constrained subspace.
    """
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    grid, layout = op.grid, op.layout
    s = (grid.annulus_nodes - grid.r_in) / (grid.r_out - grid.r_in)
    b = _bump(s)
    m = disk_coefficients(grid, lambda r: (1.0 - (r / grid.r_in) ** 2) ** 2)
    x = np.zeros(layout.size)
    if preset in ("plate_bump", "mixed"):
        x[layout.slice("w1")] = b
    if preset in ("membrane_bump", "mixed"):
        x[layout.slice("w3")] = m
    if preset in ("thermal_spot", "mixed"):
        x[layout.slice("w5")] = b
    if preset == "mixed":
        x[layout.slice("w2")] = 0.5 * b
        x[layout.slice("w4")] = 0.5 * m
    return op.project(x) / (1.0 + abs(op.k)) ** 2


@dataclass(frozen=True)
class EnergyTrajectory:
    times: np.ndarray
    energies: np.ndarray
    dissipation_integral: np.ndarray
    max_step_growth: float

    @property
    def balance_defect(self):
        """``|E(0) - E(T) - ∫ D|`` at the final time."""
        return float(abs(self.energies[0] - self.energies[-1] - self.dissipation_integral[-1]))


def evolve_operators(ops, initial, t_final, dt):
    """Implicit midpoint on each reduced generator, energies summed over modes.

    ``initial`` is a list of reduced vectors, one per operator. ``E = ½ Σ ||c||²``
    and the dissipation integral uses the trapezoid rule on ``D(c_n)``.
    """
    if dt <= 0 or t_final <= 0:
        raise UsageError("dt and t_final must be positive")
    nsteps = int(round(t_final / dt))
    if nsteps < 1 or abs(nsteps * dt - t_final) > 1e-9 * t_final:
        raise UsageError("t_final must be a positive integer multiple of dt")
    energies = np.zeros(nsteps + 1)
    diss = np.zeros(nsteps + 1)
    max_growth = 0.0
    for op, c0 in zip(ops, initial):
        a = op.reduced_generator
        eye = np.eye(a.shape[0])
        try:
            lu = sla.lu_factor(eye - 0.5 * dt * a)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"step matrix is singular for mode k={op.k}, dt={dt}", mode=op.k) from exc
        rhs = eye + 0.5 * dt * a
        dmat = op.reduced_dissipation
        c = np.asarray(c0, dtype=float)
        e_prev = 0.5 * c @ c
        d_prev = c @ dmat @ c
        energies[0] += e_prev
        for n in range(1, nsteps + 1):
            c = sla.lu_solve(lu, rhs @ c)
            e = 0.5 * c @ c
            d = c @ dmat @ c
            if not np.isfinite(e):
                raise NumericalError(f"energy diverged for mode k={op.k}", mode=op.k)
            if e_prev > 0:
                max_growth = max(max_growth, e / e_prev - 1.0)
            energies[n] += e
            diss[n] += 0.5 * dt * (d_prev + d)
            e_prev, d_prev = e, d
    times = dt * np.arange(nsteps + 1)
    return EnergyTrajectory(times, energies, np.cumsum(diss), float(max_growth))


def evolve(params, geometry, modes, w0_preset, t_final, dt, n_annulus=32, n_disk=32,
           variant="full", smooth=False):
    """Trajectory of a preset initial state (see :func:`preset_state`).

    ``smooth=True`` replaces the data ``c`` by ``A^{-1} c`` per mode, which puts
    it in the domain of the generator.
    """
    ops = build_operators(params, geometry, modes, n_annulus, n_disk, variant)
    init = [preset_state(op, w0_preset) for op in ops]
    if smooth:
        init = [np.linalg.solve(op.reduced_generator, c) for op, c in zip(ops, init)]
    return evolve_operators(ops, init, t_final, dt)


def balance_order(ops, initial, t_final, dt, levels=3):
    """Observed order of the energy-balance defect under repeated dt halving."""
    defects = []
    for j in range(levels):
        defects.append(evolve_operators(ops, initial, t_final, dt / 2 ** j).balance_defect)
    defects = np.array(defects)
    orders = np.log2(defects[:-1] / defects[1:])
    return defects, orders


@dataclass(frozen=True)
class DecayFit:
    """Fits of ``E(t)`` on a window.

    ``gamma`` comes from ``E ≈ C t^{-γ}``, ``omega`` from ``E ≈ C e^{-ωt}``, and
    ``r_hat = 2/γ``. ``model`` names the fit with the larger R².
    """

    gamma: float
    r_hat: float
    omega: float
    r2_power: float
    r2_exp: float
    model: str
    window: tuple
    conclusive: bool


def _r2(y, fit):
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum((y - fit) ** 2)) / ss_tot if ss_tot > 0 else 1.0


def fit_decay(times, energies, t_start, t_end):
    """Power-law and exponential fits of a trajectory on ``[t_start, t_end]``."""
    times = np.asarray(times, dtype=float)
    energies = np.asarray(energies, dtype=float)
    sel = (times >= t_start) & (times <= t_end) & (energies > 0)
    conclusive = t_start > 0 and t_end / t_start >= 10.0 - 1e-12 and np.count_nonzero(sel) >= 3
    if np.count_nonzero(sel) < 3:
        nan = float("nan")
        return DecayFit(nan, nan, nan, nan, nan, "none", (t_start, t_end), False)
    t, y = times[sel], np.log(energies[sel])
    pp = np.polyfit(np.log(t), y, 1)
    pe = np.polyfit(t, y, 1)
    r2p = _r2(y, np.polyval(pp, np.log(t)))
    r2e = _r2(y, np.polyval(pe, t))
    gamma = float(-pp[0])
    return DecayFit(
        gamma=gamma, r_hat=float(2.0 / gamma) if gamma > 0 else float("inf"), omega=float(-pe[0]),
        r2_power=r2p, r2_exp=r2e, model="algebraic" if r2p >= r2e else "exponential",
        window=(float(t_start), float(t_end)), conclusive=bool(conclusive),
    )


def polynomial_decay_probe(params, geometry, modes, t_final, dt=0.05, preset="membrane_bump",
                           n_annulus=32, n_disk=32, window=None):
    """Energy decay of ``A^{-1}``-smoothed data, fitted on ``[t_final/10, t_final]``.

    Returns ``(DecayFit, EnergyTrajectory)``.
    """
    traj = evolve(params, geometry, modes, preset, t_final, dt, n_annulus, n_disk, smooth=True)
    lo, hi = window if window is not None else (t_final / 10.0, t_final)
    if hi > t_final:
        raise ResolutionError("fit window extends past t_final")
    return fit_decay(traj.times, traj.energies, lo, hi), traj


# ----------------------------------------------------------------------------
# structural checks


def dissipativity_study(params, geometry, modes, samples=200, n=32, seed=0, ensemble=8):
    """Sign of the exact pairing and refinement of the collocation defect.

    For each mode: the largest ``Re<A c, c> / ||c||²`` over ``samples`` random
    reduced vectors at resolution ``n``, and the RMS over ``ensemble`` smooth
    states of ``|Re<gram·generator·w, w> + D(w)| / E(w)`` at ``n`` and ``2n``.

    ``bound_*`` is the RMS of the first-order rounding bound
    ``n·eps·|w|ᵀ|gram||generator||w| / E(w)`` of that defect. The plate terms
    cancel to about 1e-9 of their size, so a defect below its bound is at
    machine precision and cannot shrink further under refinement.
    """
    from .operator import collocation_pairing, dissipation_rate, energy, random_smooth_coefficients, smooth_state

    eps = np.finfo(float).eps
    rows = []
    for k in modes:
        ops = {nn: build_operators(params, geometry, [k], nn, nn)[0] for nn in (n, 2 * n)}
        rng = np.random.default_rng([seed, k])
        a = ops[n].reduced_generator
        c = rng.standard_normal((a.shape[0], samples))
        worst = float(np.max(np.einsum("ij,ij->j", c, a @ c) / np.einsum("ij,ij->j", c, c)))
        defects, bounds = {}, {}
        for nn, op in ops.items():
            vals, bnd = [], []
            abs_g, abs_a = np.abs(op.gram), np.abs(op.generator)
            for s in range(ensemble):
                ann, disk = random_smooth_coefficients(np.random.default_rng([seed, k, s]))
                w = smooth_state(op, ann, disk)
                d = dissipation_rate(params, op.grid, w)
                e = energy(op, w)
                x = np.abs(w.data)
                vals.append(abs(collocation_pairing(op, w) + d) / e)
                bnd.append(nn * eps * float(x @ (abs_g @ (abs_a @ x))) / e)
            defects[nn] = float(np.sqrt(np.mean(np.square(vals))))
            bounds[nn] = float(np.sqrt(np.mean(np.square(bnd))))
        at_floor = defects[2 * n] <= bounds[2 * n]
        rows.append({
            "k": int(k), "max_rel_pairing": worst,
            "defect_n": defects[n], "defect_2n": defects[2 * n],
            "ratio": defects[n] / defects[2 * n] if defects[2 * n] > 0 else float("inf"),
            "bound_n": bounds[n], "bound_2n": bounds[2 * n], "at_rounding_floor": bool(at_floor),
        })
    return rows


def smallest_singular_values(ops):
    """``σ_min`` of each reduced generator (positive means ``0`` is in the resolvent set)."""
    return np.array([sla.svdvals(op.reduced_generator)[-1] for op in ops])


def random_right_half_plane(rng, n_points=50, re_range=(0.1, 10.0), im_range=(-50.0, 50.0)):
    return rng.uniform(*re_range, n_points) + 1j * rng.uniform(*im_range, n_points)


def contraction_excess(op, lams):
    """``||(λ - A)^{-1}|| - 1/Re λ`` at each point (nonpositive for a contraction generator)."""
    return np.array([resolvent_norm(op, lam) - 1.0 / lam.real for lam in lams])
