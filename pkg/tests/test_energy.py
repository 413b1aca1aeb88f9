import math

import numpy as np
import pytest

from hypfree.density import RadialDensity, builtin_family, entropy, first_moment, gaussian_like, sample, uniform_ball
from hypfree.energy import (BLOW_UP_DIVERGES, BOUNDED_BELOW, SPREAD_DIVERGES, angular_rule,
                            ball_energy_bound, ball_energy_upper_bound, convolve_potential,
                            divergence_scan, entropy_lower_bound_check, interaction_energy,
                            lemma61_check, mean_pairwise_distance, p_a, prop63_lower_bound_check,
                            total_energy)
from hypfree.errors import ConfigurationError
from hypfree.geometry import Space, unit_ball_volume
from hypfree.hls import estimate_C0
from hypfree.potentials import (constant, lemma62_constants, linear, log_linear, logarithmic,
                                power_law, quadratic)

# E[ball(1)] for h = 1/2 theta in n = 2, c = 1 at the default grid
BALL_ENTROPY = -1.2273795950752364


@pytest.mark.parametrize("n", [2, 3, 5])
def test_angular_rule_normalized(n):
    s, w = angular_rule(n)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    # mean of cos^2 gamma under the sin^(n-2) weight is 1/n; nodes are s = sin^2(gamma/2)
    assert np.dot(w, (1 - 2 * s) ** 2) == pytest.approx(1.0 / n, abs=1e-6)


def test_constant_potential():
    sp = Space(2, 1.0)
    rho = uniform_ball(sp, 1.0)
    assert interaction_energy(rho, constant(3.0)) == pytest.approx(1.5, abs=1e-12)
    rep = total_energy(rho, constant(3.0))
    assert rep.total == pytest.approx(BALL_ENTROPY + 1.5, abs=1e-12)
    assert total_energy(rho, constant(0.0)).total == pytest.approx(BALL_ENTROPY, abs=1e-12)


def test_constant_shift_covariance():
    sp = Space(3, 1.0)
    rho = gaussian_like(sp, 0.8, cells=128)
    h = linear(2.0)
    e0 = total_energy(rho, h).total
    assert total_energy(rho, h.shifted(4.0)).total == pytest.approx(e0 + 2.0, abs=1e-10)


@pytest.mark.parametrize("n, R", [(2, 1.0), (3, 0.7), (2, 3.0)])
def test_mean_pairwise_distance_monte_carlo(n, R):
    sp = Space(n, 1.0)
    rho = uniform_ball(sp, R)
    rng = np.random.default_rng(100 + n)
    X, Y = sample(rho, 1_000_000, rng), sample(rho, 1_000_000, rng)
    d = sp.distance(X, Y)
    se = d.std() / math.sqrt(d.size)
    assert abs(d.mean() - mean_pairwise_distance(rho)) < 3 * se


def test_log_interaction_converges():
    sp = Space(2, 1.0)
    h = logarithmic(1.0)
    e1 = interaction_energy(uniform_ball(sp, 1.0, cells=64), h)
    e2 = interaction_energy(uniform_ball(sp, 1.0, cells=128), h)
    assert math.isfinite(e1) and abs(e1 - e2) < 1e-4


def _split_cells(rho):
    """The same density on a grid with every cell cut in half."""
    mid = 0.5 * (rho.edges[:-1] + rho.edges[1:])
    edges = np.sort(np.concatenate([rho.edges, mid]))
    return RadialDensity(rho.space, edges, np.repeat(rho.values, 2))


@pytest.mark.parametrize("n", [2, 3, 5])
@pytest.mark.parametrize("h", [quadratic(), linear(3.0), logarithmic(1.0)], ids=lambda h: h.label)
def test_interaction_grid_and_angle_refinement(n, h):
    rho = gaussian_like(Space(n, 1.0), 1.0, cells=96)
    e1 = interaction_energy(rho, h)
    e2 = interaction_energy(_split_cells(rho), h, panels=16)
    assert abs(e1 - e2) < 1e-4


def test_nonintegrable_potential_flags_divergence():
    rep = total_energy(uniform_ball(Space(2), 1.0), power_law(-1.0, -3.0))
    assert rep.diverged and rep.total == -math.inf


def test_isometry_invariance_of_sampled_interaction():
    sp = Space(2, 1.0)
    rng = np.random.default_rng(3)
    X = sample(gaussian_like(sp, 1.0), 300, rng)
    L = sp.random_isometry(rng, 1.0)
    Y = X @ L.T
    h = log_linear(1.0, 3.0)
    iu = np.triu_indices(300, 1)
    e0 = float(np.sum(h(sp.distance(X[:, None], X[None])[iu])))
    e1 = float(np.sum(h(sp.distance(Y[:, None], Y[None])[iu])))
    assert abs(e0 - e1) < 1e-9 * max(1.0, abs(e0)) * 300


def test_convolution_consistent_with_interaction():
    sp = Space(2, 1.0)
    rho = gaussian_like(sp, 1.0, cells=128)
    h = linear(3.0)
    W = convolve_potential(rho, h)
    assert 0.5 * float(np.sum(W * rho.masses)) == pytest.approx(interaction_energy(rho, h), rel=1e-12)


def test_p_a_limits():
    a = 1.5
    assert p_a(a, 50.0, 2) / 50.0 == pytest.approx(1.0 / a, rel=0.02)
    assert p_a(1.0, 0.0, 2) == 0.0
    # n = 2 closed form: (R - 1/a) / a + exp(-a R) / a^2
    R, a = 2.0, 0.7
    assert p_a(a, R, 2) == pytest.approx((R - 1 / a) / a + math.exp(-a * R) / a ** 2, rel=1e-12)


def test_euclidean_bound_is_exact_ball_entropy():
    sp = Space(2, 1.0, band=(0.0, 1.0))
    for R in (0.5, 2.0):
        bound = ball_energy_bound(sp, constant(0.0), R, 0.5)[0]
        assert bound == pytest.approx(-math.log(unit_ball_volume(2) * R ** 2), abs=1e-14)


@pytest.mark.parametrize("eps", [0.1, 0.5, 0.9])
def test_ball_bound_dominates(eps):
    sp = Space(2, 1.0)
    for R in (0.1, 0.5, 1.0, 3.0, 10.0):
        rep = ball_energy_upper_bound(sp, linear(3.0), R, eps)
        assert rep.computed <= rep.bound + 1e-4
        assert rep.slack == pytest.approx(rep.bound - rep.computed)


def test_divergence_scan_verdicts():
    sp = Space(2, 1.0)
    radii = np.geomspace(1e-3, 30, 13)
    assert divergence_scan(sp, logarithmic(5.0), radii).verdict == BLOW_UP_DIVERGES
    assert divergence_scan(sp, linear(0.5), radii).verdict == SPREAD_DIVERGES
    res = divergence_scan(sp, linear(3.0), radii)
    assert res.verdict == BOUNDED_BELOW
    i = int(np.argmin(res.total))
    assert 0 < i < radii.size - 1
    with pytest.raises(ConfigurationError):
        divergence_scan(sp, linear(3.0), [0.1, 1.0, 10.0])


@pytest.mark.parametrize("n, c", [(2, 1.0), (3, 0.25)])
def test_lemma61_sandwich(n, c):
    for rho in builtin_family(Space(n, c), cells=96)[::3]:
        lo, mid, hi = lemma61_check(rho)
        assert lo <= mid + 1e-6 and mid <= hi + 1e-6


def test_lemma61_point_mass_limit():
    lo, mid, hi = lemma61_check(uniform_ball(Space(2), 1e-5))
    assert max(lo, mid, hi) < 1e-4


def test_prop63_gaps():
    sp = Space(2, 1.0)
    h = linear(3.0)
    C0 = estimate_C0(2).C0
    consts = lemma62_constants(h, 2, 1.0)
    gaps = [prop63_lower_bound_check(uniform_ball(sp, R), h, C0, consts) for R in (0.2, 1.0, 3.0, 6.0)]
    assert min(gaps) >= -1e-4
    # the W1 term grows slower than E, so the gap widens as the ball spreads
    assert np.all(np.diff(gaps[1:]) > 0)


@pytest.mark.parametrize("h", [linear(3.0), log_linear(2.0, 3.0)])
def test_entropy_lower_bound(h):
    sp = Space(2, 1.0)
    C0 = estimate_C0(2).C0
    for R in (0.05, 0.5, 2.0):
        assert entropy_lower_bound_check(uniform_ball(sp, R), h, C0) >= -1e-4


def test_entropy_lower_bound_rejects_large_a1():
    with pytest.raises(ConfigurationError):
        entropy_lower_bound_check(uniform_ball(Space(2), 1.0), logarithmic(5.0), 1.0)


def test_delta_round_trip():
    n, a1 = 2, 2.0
    delta = 1.0 - a1 / (2.0 * n)
    assert 2 * n * (1 - delta) == a1


def test_first_moment_and_entropy_share_grid():
    rho = uniform_ball(Space(2), 1.0)
    assert entropy(rho) == pytest.approx(BALL_ENTROPY, abs=1e-12)
    assert first_moment(rho) > 0
