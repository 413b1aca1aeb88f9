"""Interacting particles on H^n: geodesic Euler-Maruyama for the aggregation-diffusion flow.

Each particle moves by ``X <- exp_X(dt * v + sqrt(2 dt) * xi)`` where ``v`` is
the mean attraction ``(1/N) sum_j h'(d_ij) log_X(X_j) / d_ij`` and ``xi`` an
isotropic standard Gaussian in the tangent space.

Randomness comes from counter-based Philox streams: the noise of step ``k``
is drawn from a generator keyed by ``(seed, k)`` in fixed particle order, so
a run is reproducible bit for bit however the work is scheduled.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .density import RadialDensity, sample, tabulated, uniform_ball
from .errors import ConfigurationError, NumericalDegeneracyError
from .geometry import Space, minkowski
from .potentials import Potential

RECENTER_AT = 1e4

SPREADING, COLLAPSE, EQUILIBRATED, UNDETERMINED = "Spreading", "Collapse", "Equilibrated", "Undetermined"


@dataclass(frozen=True)
class SimConfig:
    N: int = 200
    dt: float = 0.01
    steps: int = 2000
    diffusion: bool = True
    seed: int = 0
    init_radius: float = 1.0
    record_every: int = 10
    adaptive: str = "auto"  # "on", "off", or "auto" (on for singular potentials)
    kappa: float = 0.01  # adaptive step: dt <= kappa * dispersion^2 / rate
    # verdict thresholds
    window: float = 0.5
    spread_slope: float = 0.02  # per unit time, multiplied by sqrt(c)
    collapse_min_dist: float = 1e-3
    collapse_log_rate: float = 0.05
    collapse_ratio: float = 0.05
    equilibrium_log_rate: float = 0.02
    spread_cap: float = 12.0  # stop once sqrt(c) * mean distance exceeds this
    escape_radius: float = 16.0  # stop once sqrt(c) * (distance of a particle from the centre) exceeds this

    def __post_init__(self):
        if self.N < 2:
            raise ConfigurationError("need at least two particles")
        if not self.dt > 0 or self.steps < 1 or self.record_every < 1:
            raise ConfigurationError("dt, steps and record_every must be positive")
        if self.adaptive not in ("on", "off", "auto"):
            raise ConfigurationError("adaptive must be 'on', 'off' or 'auto'")
        if not 0 < self.window <= 1:
            raise ConfigurationError("window must lie in (0, 1]")


@dataclass
class ParticleState:
    points: np.ndarray
    time: float = 0.0


@dataclass
class TrajectoryReport:
    times: np.ndarray
    mean_distance: np.ndarray
    dispersion: np.ndarray
    min_distance: np.ndarray
    verdict: str
    final: ParticleState
    spread_slope: float
    dispersion_log_rate: float
    zeroed_pairs: int = 0
    notes: list = field(default_factory=list)


def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & (2 ** 64 - 1), counter=[0, step, 0, 0]))


def pair_geometry(space: Space, X: np.ndarray):
    """Pairwise distances and the chord form <X_j - X_i, X_j - X_i>_L."""
    diff = X[None, :, :] - X[:, None, :]
    chord2 = np.maximum(minkowski(diff, diff), 0.0)
    d = 2.0 / space.sqrt_c * np.arcsinh(0.5 * space.sqrt_c * np.sqrt(chord2))
    return d, chord2


def drift(space: Space, X: np.ndarray, h: Potential, return_flags: bool = False):
    """Tangent drift v_i = (1/N) sum_j h'(d_ij) log_{X_i}(X_j) / d_ij.

    Pairs closer than 1e-12 and pairs where h' is not finite contribute zero.
    """
    N = X.shape[0]
    d, chord2 = pair_geometry(space, X)
    k = space.sqrt_c
    close = d < 1e-12
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        hp = np.asarray(h.deriv(np.where(close, 1.0, d)), dtype=float)
        bad = ~np.isfinite(hp) & ~close
        # log_X(Y) / d = u * sqrt(c) / sinh(sqrt(c) d), u = (Y - X) - (c chord^2 / 2) X
        coef = np.where(close | bad, 0.0, hp * k / np.sinh(k * np.where(close, 1.0, d)))
    np.fill_diagonal(coef, 0.0)
    v = coef @ X - (np.sum(coef, axis=1) + 0.5 * space.c * np.sum(coef * chord2, axis=1))[:, None] * X
    v /= N
    v = space.to_tangent(X, v)
    if return_flags:
        return v, int(np.count_nonzero(bad) // 2)
    return v


def step(space: Space, state: ParticleState, h: Potential, dt: float, diffusion: bool,
         rng: np.random.Generator | None) -> ParticleState:
    """One geodesic Euler-Maruyama step."""
    X = state.points
    v = drift(space, X, h)
    move = dt * v
    if diffusion:
        move = move + math.sqrt(2.0 * dt) * space.gaussian_tangent(X, rng)
    return ParticleState(space.project(space.exp(X, move)), state.time + dt)


def initial_state(space: Space, config: SimConfig, points=None) -> ParticleState:
    if points is not None:
        X = space.check_point(np.asarray(points, dtype=float), tol=1e-8)
        return ParticleState(space.project(X), 0.0)
    rng = np.random.Generator(np.random.Philox(key=int(config.seed) & (2 ** 64 - 1), counter=[0, 0, 1, 0]))
    return ParticleState(sample(uniform_ball(space, config.init_radius, cells=16), config.N, rng), 0.0)


def observables(space: Space, X: np.ndarray) -> tuple[float, float, float]:
    """(mean pairwise distance, RMS distance to the Karcher mean, min pairwise distance)."""
    d, _ = pair_geometry(space, X)
    iu = np.triu_indices(X.shape[0], 1)
    dd = d[iu]
    # rounding in log grows like x0^2, so the tolerance follows it
    scale = space.sqrt_c * float(np.max(X[:, 0]))
    m = space.karcher_mean(X, tol=1e-8 + 1e-13 * scale ** 2)
    disp = float(np.sqrt(np.mean(space.distance(m, X) ** 2)))
    return float(dd.mean()), disp, float(dd.min())


def _slope(t, y) -> float:
    if t.size < 2 or np.ptp(t) == 0:
        return 0.0
    return float(np.polyfit(t, y, 1)[0])


def classify(space: Space, times, mean_d, disp, min_d, config: SimConfig):
    """Windowed trend test on the final fraction of the record; returns (verdict, slope, log-rate)."""
    n_rec = times.size
    start = min(n_rec - 2, int(math.floor((1.0 - config.window) * n_rec))) if n_rec > 2 else 0
    t, md, sd, mn = times[start:], mean_d[start:], disp[start:], min_d[start:]
    slope = _slope(t, md)
    log_rate = _slope(t, np.log(np.maximum(sd, 1e-300)))
    shrunk = sd[-1] < config.collapse_ratio * disp[0]
    if slope > config.spread_slope * space.sqrt_c:
        return SPREADING, slope, log_rate
    if shrunk or (np.percentile(mn, 10) < config.collapse_min_dist and log_rate < -config.collapse_log_rate):
        return COLLAPSE, slope, log_rate
    if abs(slope) <= config.spread_slope * space.sqrt_c and abs(log_rate) <= config.equilibrium_log_rate \
            and np.all(np.isfinite(sd)):
        return EQUILIBRATED, slope, log_rate
    return UNDETERMINED, slope, log_rate


def run(config: SimConfig, h: Potential, space: Space, points=None) -> TrajectoryReport:
    """Simulate, record observables every ``record_every`` steps and classify the trajectory."""
    state = initial_state(space, config, points)
    adaptive = config.adaptive == "on" or (config.adaptive == "auto" and h.singular)
    rate = max(1.0, float(h.a1) if h.a1 and math.isfinite(h.a1) else 1.0)
    times, md, sd, mn = [], [], [], []
    zeroed = 0
    notes = []
    warned = False

    def record(st):
        if not np.all(np.isfinite(st.points)):
            bad = np.nonzero(~np.all(np.isfinite(st.points), axis=1))[0]
            err = NumericalDegeneracyError(
                f"non-finite coordinates at t={st.time:.6g} for particles {bad[:10].tolist()}")
            err.state = st  # the offending state, for post-mortem dumps
            raise err
        a, b, c_ = observables(space, st.points)
        times.append(st.time); md.append(a); sd.append(b); mn.append(c_)

    record(state)
    for k in range(1, config.steps + 1):
        X = state.points
        v, flags = drift(space, X, h, return_flags=True)
        zeroed += flags
        dt = config.dt
        if adaptive:
            dt = min(dt, config.kappa * sd[-1] ** 2 / rate)
        vmax = float(np.max(space.norm(v)))
        if not warned and dt * vmax > 0.1:
            warnings.warn("step size large against the drift; consider a smaller dt", RuntimeWarning)
            notes.append(f"stability guard exceeded at step {k}")
            warned = True
        move = dt * v
        if config.diffusion:
            move = move + math.sqrt(2.0 * dt) * space.gaussian_tangent(X, _step_rng(config.seed, k))
        state = ParticleState(space.project(space.exp(X, move)), state.time + dt)
        if k % config.record_every == 0:
            record(state)
            if md[-1] * space.sqrt_c > config.spread_cap:
                # coordinates grow like exp(sqrt(c) r); past this point the chord form loses its digits
                notes.append(f"stopped at t={state.time:.6g}: mean distance passed the spread cap")
                break
            # the flow is isometry invariant; keep coordinates small for floating point
            if float(np.max(state.points[:, 0])) > RECENTER_AT / space.sqrt_c:
                state = recenter(space, state)
                if space.sqrt_c * float(np.max(state.points[:, 0])) > math.cosh(config.escape_radius):
                    notes.append(f"stopped at t={state.time:.6g}: a particle passed the escape radius")
                    break
    T, MD, SD, MN = (np.array(a) for a in (times, md, sd, mn))
    verdict, slope, log_rate = classify(space, T, MD, SD, MN, config)
    return TrajectoryReport(T, MD, SD, MN, verdict, state, slope, log_rate, zeroed, notes)


def recenter(space: Space, state: ParticleState) -> ParticleState:
    """Apply the isometry taking the Karcher mean of the cloud to the pole."""
    m = space.karcher_mean(state.points)
    L = space.boost_to_pole(m)
    return ParticleState(space.project(state.points @ L.T), state.time)


def empirical_radial_profile(space: Space, state: ParticleState, bins=32) -> RadialDensity:
    """Histogram of distances to the pole divided by shell volumes."""
    theta = space.distance(space.pole, state.points)
    if np.isscalar(bins):
        top = float(theta.max()) * (1.0 + 1e-9) + 1e-12
        edges = np.linspace(0.0, top, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    counts, _ = np.histogram(theta, bins=edges)
    return tabulated(space, edges, counts / space.cell_volumes(edges))


def write_observables(report: TrajectoryReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mean_dist", "dispersion", "min_dist"])
        for row in zip(report.times, report.mean_distance, report.dispersion, report.min_distance):
            w.writerow([repr(float(x)) for x in row])


def write_points(points: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(points.shape[1])])
        for p in points:
            w.writerow([repr(float(x)) for x in p])


def read_points(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    try:
        return np.array([[float(x) for x in r] for r in rows[1:]])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: malformed point row ({exc})") from None
