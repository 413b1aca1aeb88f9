"""Acceptance criteria 1-11, each with its stated tolerance and time budget."""

import hashlib
import math
import time
import warnings

import numpy as np

from hypfree import cli
from hypfree.density import (builtin_family, exponential_like, gaussian_like, pushforward_entropy_residual,
                             shell, uniform_ball)
from hypfree.energy import ball_energy_bound, lemma61_check, prop63_lower_bound_check, total_energy
from hypfree.geometry import Space
from hypfree.hls import estimate_C0, integrated_hls_deficit, log_hls_deficit
from hypfree.phase import PhaseConfig, sweep
from hypfree.potentials import lemma62_constants, linear, logarithmic
from small_configs import SMALL


def _fit(x, y):
    return float(np.polyfit(x, y, 1)[0])


def test_criterion_01_blow_up_divergence(record):
    t0 = time.perf_counter()
    sp, h = Space(2, 1.0), logarithmic(5.0)
    radii = np.geomspace(1e-4, 1e-2, 9)
    E = np.array([total_energy(uniform_ball(sp, float(R), cells=64), h).total for R in radii])
    slope = _fit(np.log(radii), E)
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(np.diff(E) > 0)) and abs(slope - 0.5) <= 0.05 and elapsed < 10
    record(1, ok, f"d E / d log R = {slope:.5f} (target 0.5 +- 10%), {elapsed:.1f}s")
    assert ok


def test_criterion_02_spreading_divergence(record):
    t0 = time.perf_counter()
    sp, h = Space(2, 1.0), linear(0.5)
    radii = np.linspace(10.0, 50.0, 9)
    E = np.array([total_energy(uniform_ball(sp, float(R), cells=64), h).total for R in radii])
    slope = _fit(radii, E)
    elapsed = time.perf_counter() - t0
    ok = slope < 0 and bool(np.all(np.diff(E) < 0)) and elapsed < 10
    record(2, ok, f"d E / d R = {slope:.5f} over [10, 50] (negative required), {elapsed:.1f}s")
    assert ok


def test_criterion_03_ball_bound_dominance(record):
    t0 = time.perf_counter()
    sp, h = Space(2, 1.0), linear(3.0)
    worst = -math.inf
    for R in np.geomspace(0.1, 10.0, 30):
        computed = total_energy(uniform_ball(sp, float(R), cells=96), h).total
        for eps in (0.1, 0.5, 0.9):
            worst = max(worst, computed - ball_energy_bound(sp, h, float(R), eps)[0])
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 30
    record(3, ok, f"max(E - bound) = {worst:.4g} over 30 radii x 3 eps (<= 1e-4), {elapsed:.1f}s")
    assert ok


def test_criterion_04_rauch(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = math.inf
    for n in (2, 3, 4):
        for c in (0.25, 1.0, 4.0):
            sp = Space(n, c)
            x, y = sp.random_points(rng, 10_000, 6.0), sp.random_points(rng, 10_000, 6.0)
            worst = min(worst, float(np.min(sp.rauch_gap(x, y))))
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-9 and elapsed < 5
    record(4, ok, f"min rauch gap = {worst:.3g} over 9 x 10^4 pairs (>= -1e-9), {elapsed:.2f}s")
    assert ok


def test_criterion_05_comparison_bands(record):
    t0 = time.perf_counter()
    worst = -math.inf
    for n in (2, 3, 4):
        for c in np.geomspace(0.25, 4.0, 10):
            sp = Space(n, float(c), band=(c / 2, 2 * c))
            for r in np.linspace(0.0, 10.0, 10):
                jl, jh, vl, vh = sp.comparison_bands(r)
                j, v = float(sp.jacobian_exp(r)), sp.ball_volume(r)
                for lo, val, hi in ((jl, j, jh), (vl, v, vh)):
                    scale = max(1.0, abs(val))
                    worst = max(worst, (lo - val) / scale, (val - hi) / scale)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5
    record(5, ok, f"max relative band violation = {worst:.3g} on 3 x 100 (r, c) points (<= 1e-10), {elapsed:.2f}s")
    assert ok


def test_criterion_06_lemma61_sandwich(record):
    t0 = time.perf_counter()
    family = builtin_family(Space(2, 1.0))
    worst = -math.inf
    for rho in family:
        lo, mid, hi = lemma61_check(rho)
        worst = max(worst, lo - mid, mid - hi)
    elapsed = time.perf_counter() - t0
    ok = len(family) == 20 and worst <= 1e-6 and elapsed < 60
    record(6, ok, f"max sandwich violation = {worst:.4g} over {len(family)} densities (<= 1e-6), {elapsed:.1f}s")
    assert ok


def test_criterion_07_manifold_log_hls(record):
    t0 = time.perf_counter()
    worst = math.inf
    count = 0
    for n in (2, 3):
        cfg = estimate_C0(n)
        for c in (0.25, 1.0, 4.0):
            for rho in builtin_family(Space(n, c), cells=128):
                worst = min(worst, log_hls_deficit(rho, cfg), integrated_hls_deficit(rho, cfg))
                count += 1
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-6 and elapsed < 120
    record(7, ok, f"min HLS deficit = {worst:.4g} over {count} densities x 2 forms (>= -1e-6), {elapsed:.1f}s")
    assert ok


def test_criterion_08_pushforward_identity(record):
    t0 = time.perf_counter()
    sp = Space(3, 1.0)
    densities = [uniform_ball(sp, 1.0), gaussian_like(sp, 1.0), exponential_like(sp, 4.0),
                 shell(sp, 0.5, 2.0), builtin_family(sp)[-2]]
    worst, worst_ratio = 0.0, 0.0
    for rho in densities:
        r1 = abs(pushforward_entropy_residual(rho, panels=1))
        r2 = abs(pushforward_entropy_residual(rho, panels=2))
        worst = max(worst, r1)
        worst_ratio = max(worst_ratio, r2 / r1 if r1 > 0 else 0.0)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and worst_ratio <= 0.5 and elapsed < 30
    record(8, ok, f"max |residual| = {worst:.3g} (< 1e-6), worst refinement ratio = {worst_ratio:.3f} "
                  f"(<= 0.5), {elapsed:.1f}s")
    assert ok


def test_criterion_09_prop63_lower_bound(record):
    t0 = time.perf_counter()
    sp, h = Space(2, 1.0), linear(3.0)
    consts = lemma62_constants(h, 2, 1.0)
    C0 = estimate_C0(2).C0
    family = [uniform_ball(sp, float(R)) for R in np.geomspace(0.05, 8.0, 12)]
    family += [gaussian_like(sp, float(s), cells=256) for s in np.geomspace(0.05, 3.0, 10)]
    gaps = [prop63_lower_bound_check(rho, h, C0, consts) for rho in family]
    elapsed = time.perf_counter() - t0
    ok = consts.eps == 1.0 and min(gaps) >= -1e-4 and elapsed < 60
    record(9, ok, f"min gap = {min(gaps):.4g} over {len(family)} densities with eps = {consts.eps:g}, "
                  f"C = {consts.C:.4f} (>= -1e-4), {elapsed:.1f}s")
    assert ok


def test_criterion_10_phase_thresholds(record):
    t0 = time.perf_counter()
    # particle budget: 2000 steps per row; the library default of 2 x 10^4 is too slow for one core
    cfg = PhaseConfig(methods=("fixed_point", "particles"), N=400, steps=2000, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        table = sweep(cfg)
    elapsed = time.perf_counter() - t0
    bad = []
    for r in table.rows:
        v = r.verdicts
        if r.coef < 1 and not (v["particles"] == "Spreading" and v["fixed_point"] == "MassEscape"):
            bad.append((r.coef, v))
        if r.coef > 2 and not (v["particles"] == "Equilibrated" and v["fixed_point"] == "Converged"):
            bad.append((r.coef, v))
    ok = not bad and elapsed < 900
    summary = " ".join(f"{r.coef:g}:{r.verdicts['particles'][:5]}/{r.verdicts['fixed_point'][:5]}" for r in table.rows)
    record(10, ok, f"{len(table.rows)} rows, {len(bad)} inconsistent, {elapsed:.0f}s [{summary}]")
    assert ok, bad


def _digest(out):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(out.iterdir())}


def test_criterion_11_determinism(record, tmp_path):
    t0 = time.perf_counter()
    differing = []
    for command, text in SMALL.items():
        cfg = tmp_path / f"{command}.ini"
        cfg.write_text(text)
        digests = []
        for rep in ("a", "b"):
            out = tmp_path / f"{command}-{rep}"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                code = cli.main(["--config", str(cfg), "--out", str(out), command])
            assert code in (0, 1), command
            digests.append(_digest(out))
        if digests[0] != digests[1] or not any(k.endswith(".csv") for k in digests[0]):
            differing.append(command)
    elapsed = time.perf_counter() - t0
    ok = not differing
    record(11, ok, f"{len(SMALL)} subcommands re-run, byte-identical outputs; differing: {differing or 'none'}, "
                   f"{elapsed:.1f}s")
    assert ok
