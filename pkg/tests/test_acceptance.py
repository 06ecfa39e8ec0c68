"""Acceptance suite: one test per criterion, each driven by a shipped config.

Every test prints a single ``PASS``/``FAIL criterion N: ...`` line to the
terminal (even under output capture) and then asserts.
"""

import csv
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import jn_zeros

from platelab import cli
from platelab.config import load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail
    return emit


def run(name, out):
    t0 = time.perf_counter()
    rep = cli.run(load_config(CONFIGS / name), str(out))
    return rep, time.perf_counter() - t0


def test_criterion_1_dissipativity(tmp_path, report):
    worst, ratio, refined, floor_modes, secs = -np.inf, np.inf, True, [], 0.0
    for m in (0, 1):
        rep, dt = run(f"c1_dissipativity_m{m}.cfg", tmp_path / f"m{m}")
        sec = rep["experiments"]["dissipativity"]
        worst = max(worst, sec["max_rel_pairing"])
        ratio = min(ratio, sec["min_refinement_ratio"])
        refined = refined and sec["refinement_ok"]
        floor_modes += [f"m={m} k={k}" for k in sec["floor_limited_modes"]]
        secs += dt
    ok = worst <= 1e-8 and refined and secs <= 60
    report(1, ok, f"max Re<Aw,w>/|w|^2 = {worst:.2e} (<= 1e-8), min defect ratio 32->64 = {ratio:.1f} (>= 4 or "
                  f"at rounding bound; floor-limited: {', '.join(floor_modes) or 'none'}), {secs:.1f} s (<= 60)")


def test_criterion_2_spectrum(tmp_path, report):
    rep, secs = run("c2_spectrum.cfg", tmp_path)
    max_re = rep["experiments"]["spectrum"]["max_re"]
    ok = max_re <= 1e-8 and secs <= 120
    report(2, ok, f"max Re lambda over k <= 24 = {max_re:.3e} (<= 1e-8), {secs:.1f} s (<= 120)")


def test_criterion_3_membrane_oracle(tmp_path, report):
    rep, secs = run("c3_membrane_oracle.cfg", tmp_path)
    with open(tmp_path / "spectrum.csv", newline="") as fh:
        ev = np.array([complex(float(r["re"]), float(r["im"])) for r in csv.DictReader(fh)])
    zeros = jn_zeros(0, 3)
    errs = [max(np.min(np.abs(ev - s * 1j * z)) for s in (1, -1)) for z in zeros]
    ok = errs[0] <= 1e-6 and max(errs) <= 1e-4 and secs <= 5
    report(3, ok, f"|lambda - i j01| = {errs[0]:.1e} (<= 1e-6), first three pairs {max(errs):.1e} (<= 1e-4), "
                  f"{secs:.2f} s (<= 5)")


def test_criterion_4_resolvent_set(tmp_path, report):
    rep, secs = run("c4_resolvent_set.cfg", tmp_path)
    sec = rep["experiments"]["resolvent"]
    ok = sec["min_sigma"] > 0 and np.isfinite(sec["max_probe_norm"]) and secs <= 30
    report(4, ok, f"min sigma_min = {sec['min_sigma']:.3e} (> 0), max probe norm = {sec['max_probe_norm']:.3e} "
                  f"(finite), {secs:.1f} s (<= 30)")


def test_criterion_5_contraction(tmp_path, report):
    rep, secs = run("c5_contraction.cfg", tmp_path)
    excess = rep["experiments"]["resolvent"]["contraction_max_excess"]
    ok = excess <= 1e-8 and secs <= 30
    report(5, ok, f"max ||(l-A)^-1|| - 1/Re l = {excess:.2e} (<= 1e-8) at 50 points, {secs:.1f} s (<= 30)")


def test_criterion_6_contrast(tmp_path, report):
    t0 = time.perf_counter()
    joint = cli.compare(load_config(CONFIGS / "c6_contrast_m1.cfg"), load_config(CONFIGS / "c6_contrast_m0.cfg"),
                        str(tmp_path))
    secs = time.perf_counter() - t0
    damped, free = joint["a"]["resolvent"], joint["b"]["resolvent"]
    fit = free["growth_fit"]
    ok = (
        damped["verdict"] == "exponential" and free["verdict"] == "polynomial-evidence"
        and fit["r_est"] >= 0.25 and fit["residual"] <= 0.15 and fit["r_est"] <= 192 and secs <= 600
    )
    report(6, ok, f"m=1 {damped['verdict']} (max abscissa {damped['max_abscissa']:.3f}, slope "
                  f"{damped['growth_fit']['r_est']:.2f}); m=0 {free['verdict']} (slope {fit['r_est']:.2f} "
                  f"+/- {fit['band']:.2f}, residual {fit['residual']:.3f}); {secs:.0f} s (<= 600)")


def test_criterion_7_energy_law(tmp_path, report):
    growth, orders, secs = 0.0, [], 0.0
    for name in ("c7_evolve_m0.cfg", "c7_evolve_m1.cfg"):
        rep, dt = run(name, tmp_path / name)
        sec = rep["experiments"]["evolve"]
        growth = max(growth, sec["max_step_growth"])
        orders.extend(sec["balance_order"]["orders"])
        secs += dt
        if "decay_fit" in sec:
            decay = sec["decay_fit"]
    rep, dt = run("c7_unitary.cfg", tmp_path / "unitary")
    drift = rep["experiments"]["evolve"]["max_relative_drift"]
    steps = round(rep["config"]["t_final"] / rep["config"]["dt"])
    secs += dt
    ok = growth <= 1e-10 and min(orders) >= 1.9 and drift <= 1e-10 and steps >= 10_000 and secs <= 300
    report(7, ok, f"max step growth {growth:.1e} (<= 1e-10), balance orders >= {min(orders):.3f} (>= 1.9), "
                  f"unitary drift {drift:.1e} over {steps} steps (<= 1e-10); m=1 fit {decay['model']} "
                  f"omega={decay['omega']:.3f}; {secs:.0f} s (<= 300)")


def test_criterion_8_symbols(tmp_path, report):
    rep, secs = run("c8_symbols.cfg", tmp_path)
    sec = rep["experiments"]["symbol-scan"]
    ls = sec["ls_min_sv"]
    ok = (
        sec["routh_samples"] >= 10_000 and sec["routh_mismatches"] == 0 and sec["ellipticity_min_abs_det"] > 1e-6
        and set(ls) == {"B1", "B2"} and min(ls.values()) > 1e-8 and secs <= 60
    )
    report(8, ok, f"Routh mismatches {sec['routh_mismatches']}/{sec['routh_samples']}, min |det| "
                  f"{sec['ellipticity_min_abs_det']:.3e} (> 1e-6), LS min sv B1 {ls.get('B1', 0):.3e} "
                  f"B2 {ls.get('B2', 0):.3e} (> 1e-8), {secs:.1f} s (<= 60)")


def test_criterion_9_trace(tmp_path, report):
    rep, secs = run("c9_trace.cfg", tmp_path)
    sec = rep["experiments"]["trace-check"]
    ok = sec["relative_change"] <= 0.2 and secs <= 30
    report(9, ok, f"C(n) = {sec['C_n']:.4f}, C(2n) = {sec['C_2n']:.4f}, change {sec['relative_change']:.1%} "
                  f"(<= 20%), {secs:.1f} s (<= 30)")
