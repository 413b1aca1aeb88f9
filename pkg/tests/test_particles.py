import math
import warnings

import numpy as np
import pytest

from hypfree.density import sample, uniform_ball
from hypfree.energy import interaction_energy
from hypfree.errors import ConfigurationError, NumericalDegeneracyError
from hypfree.geometry import Space
from hypfree.particles import (COLLAPSE, EQUILIBRATED, SPREADING, ParticleState, SimConfig, drift,
                               empirical_radial_profile, initial_state, observables, pair_geometry,
                               read_points, recenter, run, step, write_observables, write_points)
from hypfree.potentials import constant, linear, log_linear, quadratic

SP = Space(2, 1.0)


def test_config_validation():
    for bad in (dict(N=1), dict(dt=0.0), dict(steps=0), dict(adaptive="maybe"), dict(window=0.0)):
        with pytest.raises(ConfigurationError):
            SimConfig(**bad)


def test_two_body_drift_speed_half():
    X = np.stack([SP.point_at(0.5, [1, 0]), SP.point_at(0.5, [-1, 0])])
    v = drift(SP, X, linear(1.0))
    assert np.allclose(SP.norm(v), 0.5, atol=1e-12)
    # each velocity points at the other particle
    assert np.allclose(v[0] / 0.5, SP.log(X[0], X[1]) / 1.0, atol=1e-12)
    assert np.allclose(v[0][1:], -v[1][1:], atol=1e-12)


def test_equilateral_drift_magnitudes_equal():
    X = SP.point_at(0.8, [[math.cos(a), math.sin(a)] for a in (0, 2 * math.pi / 3, 4 * math.pi / 3)])
    speeds = SP.norm(drift(SP, X, quadratic()))
    assert np.ptp(speeds) < 1e-12 and speeds[0] > 0


def test_coincident_pairs_contribute_zero():
    X = np.stack([SP.pole, SP.pole, SP.point_at(1.0, [1, 0])])
    v, flags = drift(SP, X, log_linear(1.0, 1.0), return_flags=True)
    assert np.all(np.isfinite(v)) and flags == 0
    assert np.allclose(v[0], v[1])


def test_step_without_forces_or_noise_is_identity():
    X = sample(uniform_ball(SP, 1.0), 20, np.random.default_rng(0))
    out = step(SP, ParticleState(X), constant(1.0), 0.01, False, None)
    assert np.allclose(out.points, X, atol=1e-14) and out.time == 0.01


def test_two_body_distance_closes_by_dt():
    X = np.stack([SP.point_at(1.0, [1, 0]), SP.point_at(1.0, [-1, 0])])
    st = ParticleState(X)
    for _ in range(10):
        d0 = float(SP.distance(st.points[0], st.points[1]))
        st = step(SP, st, linear(1.0), 0.01, False, None)
        assert d0 - float(SP.distance(st.points[0], st.points[1])) == pytest.approx(0.01, abs=1e-10)


def test_two_body_matches_radial_ode():
    # r' = -h'(r) = -2 r for h = theta^2, integrated by explicit Euler
    X = np.stack([SP.point_at(0.6, [0, 1]), SP.point_at(0.6, [0, -1])])
    st, r = ParticleState(X), 1.2
    for _ in range(50):
        st = step(SP, st, quadratic(), 0.01, False, None)
        r -= 0.01 * 2 * r
    assert float(SP.distance(st.points[0], st.points[1])) == pytest.approx(r, rel=1e-10)


def test_brownian_scaling():
    n, dt, N = 2, 0.01, 3000
    X = np.broadcast_to(SP.pole, (N, 3)).copy()
    out = step(SP, ParticleState(X), constant(0.0), dt, True, np.random.default_rng(4))
    d2 = SP.distance(out.points, X) ** 2
    assert abs(d2.mean() - 2 * n * dt) < 3 * d2.std() / math.sqrt(N)


def test_isometry_equivariance_without_noise(rng):
    X = sample(uniform_ball(SP, 1.0), 40, rng)
    L = SP.random_isometry(rng, 1.0)
    a, b = ParticleState(X), ParticleState(X @ L.T)
    for _ in range(20):
        a = step(SP, a, linear(3.0), 0.01, False, None)
        b = step(SP, b, linear(3.0), 0.01, False, None)
        assert np.max(np.abs(pair_geometry(SP, a.points)[0] - pair_geometry(SP, b.points)[0])) < 1e-8


def test_mean_distance_nonincreasing_for_convex_h(rng):
    st = ParticleState(sample(uniform_ball(SP, 2.0), 60, rng))
    prev = observables(SP, st.points)[0]
    for _ in range(30):
        st = step(SP, st, quadratic(), 0.01, False, None)
        cur = observables(SP, st.points)[0]
        assert cur <= prev + 1e-12
        prev = cur


def test_empirical_interaction_matches_quadrature():
    rho = uniform_ball(SP, 1.0)
    X = sample(rho, 3000, np.random.default_rng(9))
    d = pair_geometry(SP, X)[0]
    h = linear(3.0)
    vals = h(d[np.triu_indices(3000, 1)])
    est = 0.5 * vals.mean()
    se = 0.5 * vals.std() / math.sqrt(3000)  # conservative: pairs share particles
    assert abs(est - interaction_energy(rho, h)) < 3 * se


def test_recenter_properties(rng):
    X = sample(uniform_ball(SP, 1.5), 50, rng) @ SP.random_isometry(rng, 2.0).T
    st = recenter(SP, ParticleState(X))
    assert np.max(np.abs(pair_geometry(SP, st.points)[0] - pair_geometry(SP, X)[0])) < 1e-9
    assert float(SP.distance(SP.karcher_mean(st.points), SP.pole)) < 1e-7
    again = recenter(SP, st)
    assert np.max(np.abs(again.points - st.points)) < 1e-9


def test_empirical_profile_matches_ball():
    N = 40_000
    rho = uniform_ball(SP, 1.0)
    st = ParticleState(sample(rho, N, np.random.default_rng(2)))
    edges = np.linspace(0, 1.0, 11)
    prof = empirical_radial_profile(SP, st, edges)
    assert prof.mass == pytest.approx(1.0, abs=1e-12)
    vol = SP.cell_volumes(edges)
    p = vol / SP.ball_volume(1.0)
    se = np.sqrt(p * (1 - p) / N) / vol
    assert np.all(np.abs(prof.values - rho.values[0]) < 3 * se + 1e-12)


def test_empirical_profile_tight_cluster():
    X = SP.point_at(1e-3 * np.random.default_rng(0).random(100), np.ones((100, 2)))
    prof = empirical_radial_profile(SP, ParticleState(X), np.linspace(0, 1, 11))
    assert prof.masses[0] == pytest.approx(1.0)


def test_initial_state_from_points():
    X = sample(uniform_ball(SP, 1.0), 10, np.random.default_rng(0))
    st = initial_state(SP, SimConfig(N=10), X)
    assert np.allclose(st.points, X)
    with pytest.raises(Exception):
        initial_state(SP, SimConfig(N=2), np.array([[0.5, 0.0, 0.0], [1.0, 0.0, 0.0]]))


def test_run_is_deterministic():
    cfg = SimConfig(N=30, steps=60, seed=11)
    a, b = run(cfg, linear(3.0), SP), run(cfg, linear(3.0), SP)
    assert np.array_equal(a.mean_distance, b.mean_distance)
    assert np.array_equal(a.final.points, b.final.points)
    c = run(SimConfig(N=30, steps=60, seed=12), linear(3.0), SP)
    assert not np.array_equal(a.final.points, c.final.points)


def test_run_rejects_nonfinite_state(monkeypatch):
    import hypfree.particles as particles

    def broken(space, X, h, return_flags=False):
        v = np.full_like(X, np.nan)
        return (v, 0) if return_flags else v

    monkeypatch.setattr(particles, "drift", broken)
    with pytest.raises(NumericalDegeneracyError) as info:
        run(SimConfig(N=5, steps=1, record_every=1, diffusion=False), linear(1.0), SP)
    assert info.value.state.points.shape == (5, 3)


def test_stability_guard_warns():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = run(SimConfig(N=10, steps=3, dt=1.0, record_every=1), linear(3.0), SP)
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)
    assert rep.notes


def test_verdict_spreading():
    rep = run(SimConfig(N=200, steps=3000, seed=1), linear(0.5), SP)
    assert rep.verdict == SPREADING


def test_verdict_equilibrated():
    rep = run(SimConfig(N=200, steps=3000, seed=1), linear(3.0), SP)
    assert rep.verdict == EQUILIBRATED


def test_verdict_collapse():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = run(SimConfig(N=100, steps=3000, seed=1), log_linear(5.0, 3.0), SP)
    assert rep.verdict == COLLAPSE


def test_csv_round_trips(tmp_path):
    rep = run(SimConfig(N=10, steps=20, seed=3), linear(3.0), SP)
    write_observables(rep, tmp_path / "obs.csv")
    lines = (tmp_path / "obs.csv").read_text().splitlines()
    assert lines[0] == "t,mean_dist,dispersion,min_dist" and len(lines) == rep.times.size + 1
    write_points(rep.final.points, tmp_path / "pts.csv")
    assert np.array_equal(read_points(tmp_path / "pts.csv"), rep.final.points)
