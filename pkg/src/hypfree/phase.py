"""Empirical phase tables: ball scans, steady states and particles against the analytic regimes."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import BLOW_UP_DIVERGES, BOUNDED_BELOW, SPREAD_DIVERGES, divergence_scan
from .errors import BracketError, ConfigurationError, HypfreeError
from .geometry import Space
from .particles import COLLAPSE as P_COLLAPSE
from .particles import EQUILIBRATED, SPREADING, SimConfig, run
from .potentials import LINEAR, SUBLINEAR, Potential, Regime, classify_regime, linear, log_linear, logarithmic
from .steady import COLLAPSE, CONVERGED, MASS_ESCAPE, fixed_point, initial_guess

METHODS = ("ball_scan", "fixed_point", "particles")
FAMILIES = ("linear", "log", "log_linear")
HEADER = ["n", "c", "family", "coef", "analytic", "ball_scan", "fixed_point", "particles", "agree"]

# verdicts that count as evidence for each mechanism, per method
_SPREAD = {"ball_scan": {SPREAD_DIVERGES}, "fixed_point": {MASS_ESCAPE}, "particles": {SPREADING}}
_BLOW_UP = {"ball_scan": {BLOW_UP_DIVERGES}, "fixed_point": {COLLAPSE}, "particles": {P_COLLAPSE}}
_EXISTS = {"ball_scan": {BOUNDED_BELOW}, "fixed_point": {CONVERGED}, "particles": {EQUILIBRATED}}


def family_potential(family: str, coef: float, c: float, confinement: float = 3.0) -> Potential:
    """``linear``: coef * sqrt(c) theta; ``log``: coef * log theta;
    ``log_linear``: coef * log theta + confinement * sqrt(c) theta."""
    if family == "linear":
        return linear(coef, c)
    if family == "log":
        return logarithmic(coef)
    if family == "log_linear":
        return log_linear(coef, confinement, c)
    raise ConfigurationError(f"unknown potential family {family!r}; expected one of {FAMILIES}")


def consistent_verdicts(h: Potential, space: Space, method: str) -> set | None:
    """Empirical verdicts compatible with the analytic regime; None means unconstrained."""
    tag = classify_regime(h, space.n, space.c_lower, space.c_upper).tag
    n = space.n
    spreads = h.growth == SUBLINEAR or (h.growth == LINEAR and h.slope / space.sqrt_c < n - 1)
    if tag == Regime.BLOW_UP:
        # a potential that is also too weak at infinity may lose its mass either way
        return _BLOW_UP[method] | (_SPREAD[method] if spreads else set())
    if tag == Regime.SPREADING:
        return _SPREAD[method]
    if tag in (Regime.EXISTENCE_GENERAL, Regime.EXISTENCE_HOMOGENEOUS):
        return _EXISTS[method]
    return None


@dataclass(frozen=True)
class PhaseConfig:
    ns: tuple = (2,)
    cs: tuple = (1.0,)
    family: str = "linear"
    coefs: tuple = tuple(np.round(np.arange(0.25, 3.0 + 1e-9, 0.25), 10))
    methods: tuple = METHODS
    seed: int = 0
    threads: int = 1
    # ball scan
    scan_radii: tuple = tuple(np.geomspace(1e-3, 30.0, 19))
    scan_cells: int = 64
    # fixed point
    fp_cells: int = 128
    fp_max_iter: int = 5000
    fp_tol: float = 1e-8
    # particles
    N: int = 400
    dt: float = 0.01
    steps: int = 20_000
    record_every: int = 10

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown potential family {self.family!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigurationError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")


@dataclass
class PhaseRow:
    n: int
    c: float
    family: str
    coef: float
    analytic: str
    verdicts: dict = field(default_factory=dict)
    agree: bool = True
    errors: dict = field(default_factory=dict)

    def as_csv(self) -> list:
        return [str(self.n), repr(float(self.c)), self.family, repr(float(self.coef)), self.analytic,
                *(self.verdicts.get(m, "") for m in METHODS), str(self.agree).lower()]


@dataclass
class PhaseTable:
    rows: list

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADER)
            for r in self.rows:
                w.writerow(r.as_csv())


def row_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def run_method(method: str, space: Space, h: Potential, config: PhaseConfig, seed: int) -> str:
    if method == "ball_scan":
        radii = np.asarray(config.scan_radii) / space.sqrt_c
        return divergence_scan(space, h, radii, cells=config.scan_cells).verdict
    if method == "fixed_point":
        res = fixed_point(initial_guess(space, config.fp_cells), h, tol=config.fp_tol,
                          max_iter=config.fp_max_iter)
        return res.outcome
    if method == "particles":
        sim = SimConfig(N=config.N, dt=config.dt, steps=config.steps, seed=seed,
                        record_every=config.record_every)
        return run(sim, h, space).verdict
    raise ConfigurationError(f"unknown method {method!r}")


def _evaluate(job) -> PhaseRow:
    index, n, c, coef, config = job
    space = Space(n, c)
    h = family_potential(config.family, coef, c)
    tag = classify_regime(h, n, space.c_lower, space.c_upper).tag
    row = PhaseRow(n, c, config.family, coef, tag.value)
    for method in config.methods:
        try:
            verdict = run_method(method, space, h, config, row_seed(config.seed, index))
        except HypfreeError as exc:
            # a failed method is recorded and the sweep goes on
            row.errors[method] = f"{type(exc).__name__}: {exc}"
            verdict = "Error"
        row.verdicts[method] = verdict
        allowed = consistent_verdicts(h, space, method)
        if allowed is not None and verdict not in allowed:
            row.agree = False
    return row


def sweep(config: PhaseConfig) -> PhaseTable:
    """One row per (n, c, coef), methods run independently, merged in row order."""
    jobs = [(i, int(n), float(c), float(a), config)
            for i, (n, c, a) in enumerate((n, c, a) for n in config.ns for c in config.cs for a in config.coefs)]
    if config.threads == 1 or len(jobs) == 1:
        rows = [_evaluate(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(_evaluate, jobs))
    return PhaseTable(rows)


@dataclass(frozen=True)
class ThresholdEstimate:
    estimate: float
    lo: float
    hi: float
    lo_verdict: str
    hi_verdict: str


def threshold_estimate(family: str, method: str, bracket, n: int = 2, c: float = 1.0,
                       config: PhaseConfig | None = None, halvings: int = 8) -> ThresholdEstimate:
    """Bisect the coefficient until the bracket is 2^-halvings of its initial width."""
    lo, hi = (float(x) for x in bracket)
    if not lo < hi:
        raise BracketError("bracket must satisfy lo < hi")
    config = replace(config or PhaseConfig(), family=family)
    space = Space(n, c)

    def verdict(a):
        return run_method(method, space, family_potential(family, a, c), config, row_seed(config.seed, 0))

    v_lo, v_hi = verdict(lo), verdict(hi)
    if v_lo == v_hi:
        raise BracketError(f"both ends give {v_lo}; the bracket does not straddle a transition")
    for _ in range(halvings):
        mid = 0.5 * (lo + hi)
        v = verdict(mid)
        if v == v_lo:
            lo = mid
        else:
            hi, v_hi = mid, v
    return ThresholdEstimate(0.5 * (lo + hi), lo, hi, v_lo, v_hi)


def threshold_window(n: int) -> tuple[float, float]:
    """Analytic window (n - 1, 2(n - 1)) for the linear spreading transition."""
    return float(n - 1), float(2 * (n - 1))


def blow_up_threshold(n: int) -> float:
    return float(2 * n)

