"""Command-line runner: ``platelab <experiment> --config FILE [--out DIR] [--seed N]``.

Exit status: 0 on success, 2 for an invalid configuration or usage, 3 for a
numerical failure.
"""

import argparse
import json
import logging
import os
import struct
import sys
import time

import numpy as np

from . import stability as st
from .config import EXPERIMENTS, config_diff, format_config, load_config
from .errors import ParameterError, PlateLabError, UsageError
from .params import PhysicalParams
from .polar import geometric_condition_scan, trace_constant_fit
from .symbols import CubicCoeffs, cubic_roots, ellipticity_scan, hurwitz_stable, ls_grid

SCHEMA_VERSION = 1
log = logging.getLogger("platelab")

_MODULE_OF = {
    "spectrum": "stability_lab", "resolvent": "stability_lab", "evolve": "stability_lab",
    "decay-probe": "stability_lab", "symbol-scan": "symbol_lab", "ls-check": "symbol_lab",
    "gc-scan": "polar_disc", "trace-check": "polar_disc", "dissipativity": "operator_core",
}
# fields that may differ between the two sides of a comparison
_COMPARABLE = frozenset(PhysicalParams.__dataclass_fields__) | {"out_dir", "seed"}


class ArtifactWriter:
    """Single writer for every file of a run; CSV floats use ``%.17g``."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.files = []

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def csv(self, name, header, rows):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        self.files.append(name)

    def json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        self.files.append(name)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _modes(cfg):
    return range(cfg.k_max + 1)


def _ops(cfg):
    return st.build_operators(cfg.params(), cfg.geometry(), _modes(cfg), cfg.n_annulus, cfg.n_disk, cfg.variant)


# ----------------------------------------------------------------------------
# experiments: each writes its CSVs and returns a report section


def exp_spectrum(cfg, out):
    ops = _ops(cfg)
    rows, ab, min_abs_re = [], [], []
    for op in ops:
        ev = st.spectrum(op)
        rows.extend((op.k, z.real, z.imag) for z in ev)
        ab.append(float(ev[0].real))
        min_abs_re.append(float(np.min(np.abs(ev.real))))
    out.csv("spectrum.csv", ("k", "re", "im"), rows)
    out.csv("abscissa.csv", ("k", "abscissa", "min_abs_re"), zip(_modes(cfg), ab, min_abs_re))
    return {
        "max_re": max(ab), "abscissa": ab, "min_abs_re": min_abs_re,
        "verdict": st.classify(ab),
    }


def exp_resolvent(cfg, out):
    # modes are streamed: at n=64 and k_max=200 all operators do not fit comfortably in memory
    probes = tuple(map(complex, (0.0, 0.5j, 5j, 50j)))
    rhp = st.random_right_half_plane(np.random.default_rng(cfg.seed))
    ab, parts, smin, prow, excess = [], [], [], [], []
    ops = st.iter_operators(cfg.params(), cfg.geometry(), _modes(cfg), cfg.n_annulus, cfg.n_disk, cfg.variant)
    for op in ops:
        ab.append(st.spectral_abscissa(op))
        parts.append((op.k, *st.mode_scan(op, cfg.lam_min, cfg.lam_max, cfg.points_per_decade)))
        if cfg.resolvent_checks:
            smin.append(st.smallest_singular_values([op])[0])
            prow.extend((op.k, lam.real, lam.imag, st.resolvent_norm(op, lam)) for lam in probes)
            excess.append(st.contraction_excess(op, rhp))
    out.csv("abscissa.csv", ("k", "abscissa"), zip(_modes(cfg), ab))
    scan = st.merge_mode_scans(parts)
    out.csv("resolvent_scan.csv", ("lambda", "norm", "k_argmax"), zip(scan.lambdas, scan.norms, scan.per_mode))
    fit = st.growth_exponent_fit(scan, cfg.lam_min, cfg.lam_max)
    out.csv("envelope.csv", ("lambda", "norm"), zip(fit.peak_lambdas, fit.peak_norms))
    section = {
        "abscissa": ab, "max_abscissa": max(ab), "n_lambdas": len(scan.lambdas),
        "growth_fit": {
            "r_est": fit.r_est, "band": fit.band, "residual": fit.residual,
            "rms_residual_decades": fit.rms_residual, "n_peaks": fit.n_peaks, "conclusive": fit.conclusive,
        },
        "verdict": st.classify(ab, fit),
    }
    if cfg.resolvent_checks:
        excess = np.max(excess, axis=0)
        out.csv("sigma_min.csv", ("k", "sigma_min"), zip(_modes(cfg), smin))
        out.csv("resolvent_points.csv", ("k", "re", "im", "norm"), prow)
        out.csv("contraction.csv", ("re", "im", "max_excess"), zip(rhp.real, rhp.imag, excess))
        section.update(
            min_sigma=float(min(smin)), max_probe_norm=max(r[3] for r in prow),
            contraction_max_excess=float(excess.max()),
        )
    return section


def _trajectory_csv(out, name, traj):
    out.csv(name, ("t", "E", "D_integral"), zip(traj.times, traj.energies, traj.dissipation_integral))


def exp_evolve(cfg, out):
    ops = _ops(cfg)
    init = [st.preset_state(op, cfg.preset) for op in ops]
    if cfg.smooth:
        init = [np.linalg.solve(op.reduced_generator, c) for op, c in zip(ops, init)]
    traj = st.evolve_operators(ops, init, cfg.t_final, cfg.dt)
    _trajectory_csv(out, "trajectory.csv", traj)
    e0 = traj.energies[0]
    section = {
        "E0": e0, "E_final": traj.energies[-1], "max_step_growth": traj.max_step_growth,
        "balance_defect": traj.balance_defect,
        "max_relative_drift": float(np.max(np.abs(traj.energies / e0 - 1.0))) if e0 > 0 else 0.0,
    }
    # order study on A^{-1}-smoothed data over a short horizon
    smooth = [np.linalg.solve(op.reduced_generator, st.preset_state(op, cfg.preset)) for op in ops]
    horizon = min(cfg.t_final, 100 * cfg.dt)
    defects, orders = st.balance_order(ops, smooth, horizon, cfg.dt)
    section["balance_order"] = {"horizon": horizon, "defects": defects, "orders": orders}
    if cfg.fit_end > 0:
        fit = st.fit_decay(traj.times, traj.energies, cfg.fit_start, cfg.fit_end)
        section["decay_fit"] = _decay_dict(fit)
    return section


def _decay_dict(fit):
    return {
        "gamma": fit.gamma, "r_hat": fit.r_hat, "omega": fit.omega, "r2_power": fit.r2_power,
        "r2_exp": fit.r2_exp, "model": fit.model, "window": list(fit.window), "conclusive": fit.conclusive,
    }


def exp_decay_probe(cfg, out):
    window = (cfg.fit_start, cfg.fit_end) if cfg.fit_end > 0 else None
    fit, traj = st.polynomial_decay_probe(
        cfg.params(), cfg.geometry(), _modes(cfg), cfg.t_final, cfg.dt, cfg.preset,
        cfg.n_annulus, cfg.n_disk, window,
    )
    _trajectory_csv(out, "decay_trajectory.csv", traj)
    return _decay_dict(fit)


def routh_oracle(n_samples, rng):
    """Compare :func:`hurwitz_stable` with the sign of the roots of ``numpy.roots``."""
    triples = rng.uniform(0.01, 10.0, size=(n_samples, 3))
    rows, mismatches = [], 0
    for a, b, c in triples:
        flag = hurwitz_stable(CubicCoeffs(a, b, c))
        ours = float(np.max(cubic_roots(CubicCoeffs(a, b, c)).real))
        ref = float(np.max(np.roots([1.0, a, b, c]).real))
        if flag != (ref < 0):
            mismatches += 1
        rows.append((a, b, c, int(flag), ours, ref))
    return rows, mismatches


def exp_symbol_scan(cfg, out):
    rows, mismatches = routh_oracle(cfg.routh_samples, np.random.default_rng(cfg.seed))
    out.csv("routh_oracle.csv", ("a", "b", "c", "routh", "max_re_closed_form", "max_re_numpy"), rows)
    scan = ellipticity_scan(cfg.params(), cfg.grid_density)
    section = {
        "routh_samples": cfg.routh_samples, "routh_mismatches": mismatches,
        "ellipticity_min_abs_det": scan.min_abs_det,
        "ellipticity_argmin": {"lambda": scan.argmin.lam, "xi": list(scan.argmin.xi)},
    }
    section.update(exp_ls_check(cfg, out))
    return section


def exp_ls_check(cfg, out):
    rows, mins = [], {}
    for bc in cfg.bc_list():
        xi, lam, vals = ls_grid(cfg.params(), bc, cfg.ls_n)
        rows.extend((bc, x, z.real, z.imag, v) for x, z, v in zip(xi.ravel(), lam.ravel(), vals.ravel()))
        mins[bc] = float(vals.min())
    out.csv("ls_grid.csv", ("bc_set", "xi1", "lam_re", "lam_im", "min_sv"), rows)
    return {"ls_min_sv": mins}


def exp_gc_scan(cfg, out):
    lo, hi = geometric_condition_scan(cfg.geometry(), (cfg.x0_x, cfg.x0_y))
    out.csv("gc_scan.csv", ("x0_x", "x0_y", "min", "max"), [(cfg.x0_x, cfg.x0_y, lo, hi)])
    return {"min": lo, "max": hi, "condition_holds": hi <= 0}


def exp_dissipativity(cfg, out):
    rows = st.dissipativity_study(cfg.params(), cfg.geometry(), _modes(cfg), cfg.samples, cfg.n_annulus, cfg.seed)
    keys = ("k", "max_rel_pairing", "defect_n", "defect_2n", "ratio", "bound_n", "bound_2n", "at_rounding_floor")
    out.csv("dissipativity.csv", keys, ([r[k] for k in keys] for r in rows))
    return {
        "max_rel_pairing": max(r["max_rel_pairing"] for r in rows),
        "min_refinement_ratio": min(r["ratio"] for r in rows),
        # a mode passes refinement by shrinking 4x or by reaching its rounding bound at 2n
        "refinement_ok": all(r["ratio"] >= 4 or r["at_rounding_floor"] for r in rows),
        "floor_limited_modes": [r["k"] for r in rows if r["ratio"] < 4],
    }


def exp_trace_check(cfg, out):
    geo = cfg.geometry()
    c1, _ = trace_constant_fit(geo, cfg.n_annulus, seed=cfg.seed)
    c2, _ = trace_constant_fit(geo, 2 * cfg.n_annulus, seed=cfg.seed)
    out.csv("trace.csv", ("n", "C"), [(cfg.n_annulus, c1), (2 * cfg.n_annulus, c2)])
    return {"C_n": c1, "C_2n": c2, "relative_change": abs(c2 - c1) / c1}


RUNNERS = {
    "spectrum": exp_spectrum, "resolvent": exp_resolvent, "evolve": exp_evolve,
    "decay-probe": exp_decay_probe, "symbol-scan": exp_symbol_scan, "ls-check": exp_ls_check,
    "gc-scan": exp_gc_scan, "dissipativity": exp_dissipativity, "trace-check": exp_trace_check,
}
assert set(RUNNERS) | {"all"} == set(EXPERIMENTS)


def run(cfg, out_dir=None):
    """Run ``cfg.experiment`` and write its artifacts plus ``report.json``. Returns the report."""
    out = ArtifactWriter(out_dir or cfg.out_dir)
    names = [e for e in EXPERIMENTS if e != "all"] if cfg.experiment == "all" else [cfg.experiment]
    t0 = time.perf_counter()
    results = {}
    for name in names:
        log.info("running %s", name)
        try:
            results[name] = RUNNERS[name](cfg, out)
        except (ParameterError, UsageError):
            raise
        except PlateLabError as exc:
            exc.module = _MODULE_OF[name]
            raise
    verdicts = {n: r["verdict"] for n, r in results.items() if isinstance(r, dict) and "verdict" in r}
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.as_dict(),
        "experiments": results,
        "verdicts": verdicts,
        "tolerances": {
            "singular": st.SINGULAR_TOL, "exponential_abscissa": st.EXPONENTIAL_ABSCISSA,
            "exponential_slope": st.EXPONENTIAL_SLOPE, "polynomial_slope": st.POLYNOMIAL_SLOPE,
            "polynomial_residual": st.POLYNOMIAL_RESIDUAL,
        },
        "files": list(out.files),
        "wall_time_s": time.perf_counter() - t0,
    }
    out.json("report.json", report)
    return report


def compare(cfg_a, cfg_b, out_dir):
    """Run two configurations that differ only in physical constants (or seed/out_dir)."""
    diff = config_diff(cfg_a, cfg_b)
    structural = sorted(set(diff) - _COMPARABLE)
    if structural:
        raise UsageError(f"configs differ in structural fields: {', '.join(structural)}")
    ra = run(cfg_a, os.path.join(out_dir, "a"))
    rb = run(cfg_b, os.path.join(out_dir, "b"))
    joint = {
        "schema_version": SCHEMA_VERSION,
        "diff": {k: list(v) for k, v in diff.items() if k in PhysicalParams.__dataclass_fields__},
        "verdicts": {"a": ra["verdicts"], "b": rb["verdicts"]},
        "a": ra["experiments"], "b": rb["experiments"],
    }
    ArtifactWriter(out_dir).json("compare.json", joint)
    return joint


def dump(cfg, out_dir):
    """Write per-mode grids as CSV and reduced matrices as binary files.

    Binary layout (little endian): magic ``b"PLAB"``, uint32 version (1),
    int32 k, then two matrices (reduced generator, raw gram), each as uint32
    rows, uint32 cols and row-major float64 data.
    """
    out = ArtifactWriter(out_dir)
    for op in _ops(cfg):
        g = op.grid
        rows = [("annulus", r, w) for r, w in zip(g.annulus_nodes, g.quad_annulus)]
        rows += [("disk", r, w) for r, w in zip(g.disk_nodes, g.quad_disk)]
        out.csv(f"grid_k{op.k}.csv", ("domain", "r", "weight"), rows)
        with open(out.path(f"mode_k{op.k}.bin"), "wb") as fh:
            fh.write(b"PLAB" + struct.pack("<Ii", 1, op.k))
            for mat in (op.reduced_generator, op.gram):
                mat = np.ascontiguousarray(mat, dtype="<f8")
                fh.write(struct.pack("<II", *mat.shape))
                fh.write(mat.tobytes())
        out.files.append(f"mode_k{op.k}.bin")
    return out.files


def read_dump(path):
    """Inverse of the binary part of :func:`dump`: ``(k, reduced_generator, gram)``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != b"PLAB":
        raise UsageError(f"{path}: not a platelab dump")
    _, k = struct.unpack_from("<Ii", buf, 4)
    pos, mats = 12, []
    for _ in range(2):
        r, c = struct.unpack_from("<II", buf, pos)
        pos += 8
        mats.append(np.frombuffer(buf, "<f8", r * c, pos).reshape(r, c).copy())
        pos += 8 * r * c
    return k, mats[0], mats[1]


def _parser():
    p = argparse.ArgumentParser(prog="platelab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", required=True)
        s.add_argument("--out")
        s.add_argument("--seed", type=int)
    c = sub.add_parser("compare", help="run two configs and join their reports")
    c.add_argument("config_a")
    c.add_argument("config_b")
    c.add_argument("--out", default="out_compare")
    c.add_argument("--seed", type=int)
    d = sub.add_parser("dump", help="write grids and reduced matrices per mode")
    d.add_argument("--config", required=True)
    d.add_argument("--out", default="out_dump")
    f = sub.add_parser("show-config", help="print the fully expanded configuration")
    f.add_argument("--config", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _override(cfg, args, experiment=None):
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if experiment is not None:
        changes["experiment"] = experiment
    return cfg.with_(**changes) if changes else cfg


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "compare":
            a = _override(load_config(args.config_a), args)
            b = _override(load_config(args.config_b), args)
            joint = compare(a, b, args.out)
            print(json.dumps(_jsonable(joint["verdicts"]), sort_keys=True))
        elif args.command == "dump":
            dump(load_config(args.config), args.out)
        elif args.command == "show-config":
            sys.stdout.write(format_config(load_config(args.config)))
        else:
            cfg = _override(load_config(args.config), args, args.command)
            report = run(cfg, args.out)
            print(json.dumps(_jsonable({"verdicts": report["verdicts"], "files": report["files"]}), sort_keys=True))
    except (ParameterError, UsageError) as exc:
        field = getattr(exc, "field", None)
        print(f"platelab: invalid configuration{f' ({field})' if field else ''}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"platelab: {exc}", file=sys.stderr)
        return 2
    except PlateLabError as exc:
        mod = getattr(exc, "module", "platelab")
        mode = getattr(exc, "mode", None)
        print(f"platelab: numerical failure in {mod}{f' (mode k={mode})' if mode is not None else ''}: {exc}",
              file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
