"""Attractive interaction profiles h(theta) and the regime classifier.

A :class:`Potential` is a finite linear combination of basis profiles
(constant, log, power, exponential, log-sinhc, tabulated).  Keeping the
combination explicit lets the quadrature engine in :mod:`hypfree.energy`
cache one kernel matrix per basis and reuse it across a whole coefficient
sweep.

Asymptotic descriptors (the log coefficient A1 at zero, the growth class at
infinity and the superlinear envelope) are fixed by construction for the
built-in families and must be declared for tabulated profiles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import interpolate, optimize

from .errors import ClassificationInputError, ConfigurationError, DomainError, InfeasibleError
from .geometry import langevin, log_sinhc

NEG_INF = -math.inf  # value of h at a singular origin; absorbing under addition

SUBLINEAR, LINEAR, SUPERLINEAR = "sublinear", "linear", "superlinear"
_GROWTH_RANK = {SUBLINEAR: 0, LINEAR: 1, SUPERLINEAR: 2}


# --- basis profiles ------------------------------------------------------

@dataclass(frozen=True)
class Basis:
    """A single profile b(theta).  Subclasses are hashable cache keys."""

    def value(self, t):
        raise NotImplementedError

    def deriv(self, t):
        raise NotImplementedError

    # kind of singularity at 0: None, "log" or ("power", alpha)
    singularity = None


@dataclass(frozen=True)
class ConstBasis(Basis):
    def value(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def deriv(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class LogBasis(Basis):
    singularity = "log"

    def value(self, t):
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(t, dtype=float))

    def deriv(self, t):
        with np.errstate(divide="ignore"):
            return 1.0 / np.asarray(t, dtype=float)


@dataclass(frozen=True)
class PowerBasis(Basis):
    alpha: float = 1.0

    @property
    def singularity(self):
        return ("power", self.alpha) if self.alpha < 0 else None

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.alpha == 1.0:
            return t.copy()
        if self.alpha == 2.0:
            return t * t
        with np.errstate(divide="ignore"):
            return t ** self.alpha

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.alpha == 1.0:
            return np.ones_like(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.alpha * t ** (self.alpha - 1.0)


@dataclass(frozen=True)
class ExpBasis(Basis):
    rate: float = 1.0

    def value(self, t):
        return np.exp(self.rate * np.asarray(t, dtype=float))

    def deriv(self, t):
        return self.rate * np.exp(self.rate * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class LogSinhcBasis(Basis):
    """log(sinh(sqrt(c) t) / (sqrt(c) t)); the curvature correction of the log-HLS bound."""

    c: float = 1.0

    def value(self, t):
        return log_sinhc(math.sqrt(self.c) * np.asarray(t, dtype=float))

    def deriv(self, t):
        k = math.sqrt(self.c)
        return k * langevin(k * np.asarray(t, dtype=float))


@dataclass(frozen=True, eq=False)
class TabulatedBasis(Basis):
    """Monotone cubic (PCHIP) interpolant through (theta_i, h_i).

    Below the first node the profile continues as ``h_0 + a1 * log(t / t_0)``;
    above the last node it continues linearly with the end slope.
    """

    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    a1: float = 0.0

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        hv = np.asarray(self.values, dtype=float)
        if th.ndim != 1 or th.size < 2 or th.shape != hv.shape:
            raise ConfigurationError("tabulated potential needs matching 1-D arrays of length >= 2")
        if th[0] <= 0 or np.any(np.diff(th) <= 0):
            raise ConfigurationError("tabulated abscissae must be positive and strictly increasing")
        if np.any(np.diff(hv) < 0):
            raise ConfigurationError("tabulated potential must be nondecreasing")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "values", hv)
        object.__setattr__(self, "_spline", interpolate.PchipInterpolator(th, hv, extrapolate=False))

    @property
    def singularity(self):
        return "log" if self.a1 > 0 else None

    def value(self, t):
        t = np.asarray(t, dtype=float)
        th, hv = self.theta, self.values
        out = np.asarray(self._spline(np.clip(t, th[0], th[-1])), dtype=float)
        lo = t < th[0]
        if np.any(lo):
            with np.errstate(divide="ignore"):
                out = np.where(lo, hv[0] + self.a1 * np.log(t / th[0]), out)
        hi = t > th[-1]
        if np.any(hi):
            slope = float(self._spline(th[-1], 1))
            out = np.where(hi, hv[-1] + slope * (t - th[-1]), out)
        return out

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        th = self.theta
        out = np.asarray(self._spline(np.clip(t, th[0], th[-1]), 1), dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(t < th[0], self.a1 / t, out)
        return out


# --- potentials ------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """h(theta) = sum of coef * basis(theta), with asymptotic descriptors.

    ``a1``: coefficient of log(theta) at the origin (0 when h(0+) is finite,
    ``inf`` for a power singularity).  ``growth``: growth class at infinity.
    ``slope``: lim h(theta)/theta for linear growth.  ``envelope``: convex
    nondecreasing superlinear minorant that makes the energy bounded below.
    """

    terms: tuple[tuple[float, Basis], ...]
    a1: float | None = 0.0
    growth: str | None = SUBLINEAR
    slope: float = 0.0
    envelope: Callable | None = None
    label: str = "h"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for coef, b in self.terms:
            if coef != 0.0:
                out = out + coef * b.value(t)
        return out

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for coef, b in self.terms:
            if coef != 0.0:
                out = out + coef * b.deriv(t)
        return out

    @property
    def singular(self) -> bool:
        return any(b.singularity is not None and coef != 0 for coef, b in self.terms)

    def power_singularity(self) -> float | None:
        """Most negative power exponent among the terms, if any."""
        alphas = [b.singularity[1] for coef, b in self.terms
                  if coef != 0 and isinstance(b.singularity, tuple)]
        return min(alphas) if alphas else None

    def integrable(self, n: int) -> bool:
        """Whether h(d) is locally integrable against Lebesgue measure in dimension n."""
        alpha = self.power_singularity()
        return alpha is None or alpha > -n

    def a2(self, c: float) -> float:
        """Linear growth rate relative to the curvature scale: slope / sqrt(c)."""
        return self.slope / math.sqrt(c)

    def shifted(self, kappa: float) -> "Potential":
        return Potential(self.terms + ((float(kappa), ConstBasis()),), self.a1, self.growth,
                         self.slope, self.envelope, f"{self.label}+{kappa:g}")

    def __add__(self, other: "Potential") -> "Potential":
        if not isinstance(other, Potential):
            return NotImplemented
        growth = max(self.growth, other.growth, key=_GROWTH_RANK.__getitem__)
        slope = self.slope + other.slope if growth == LINEAR else 0.0
        envs = [p.envelope for p in (self, other) if p.envelope is not None]
        env = None
        if envs:
            env = (lambda t, fs=tuple(envs): sum(f(t) for f in fs))
        return Potential(self.terms + other.terms, max(self.a1, other.a1), growth, slope, env,
                         f"{self.label}+{other.label}")

    def check_monotone(self, grid=None, tol: float = 1e-12) -> bool:
        """Nondecreasing on a log-spaced grid (value and derivative)."""
        t = np.geomspace(1e-6, 1e3, 2000) if grid is None else np.asarray(grid, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            v = self(t)
            d = self.deriv(t)
        finite = np.isfinite(v)
        dv = np.diff(v[finite])
        return bool(np.all(dv >= -tol * np.maximum(1.0, np.abs(v[finite][1:])))
                    and np.all(d[np.isfinite(d)] >= -tol))

    def check_envelope(self, grid=None) -> bool:
        """Envelope is nondecreasing, convex, superlinear and h - envelope stays bounded below."""
        if self.envelope is None:
            return False
        t = np.linspace(1.0, 200.0, 400) if grid is None else np.asarray(grid, dtype=float)
        with np.errstate(over="ignore"):
            ell = np.asarray(self.envelope(t), dtype=float)
            h = self(t)
        ok = np.isfinite(ell)
        t, ell, h = t[ok], ell[ok], h[ok]
        if t.size < 10:
            return False
        inc = np.all(np.diff(ell) >= -1e-12 * np.abs(ell[1:]))
        second = ell[2:] - 2 * ell[1:-1] + ell[:-2]
        convex = np.all(second >= -1e-9 * np.maximum(1.0, np.abs(ell[1:-1])))
        ratio = ell / t
        superlinear = ratio[-1] > 10.0 * max(ratio[0], 1e-12) or ratio[-1] > ratio[t.size // 2] * 1.5
        gap = h - ell
        bounded = np.all(np.diff(gap[t.size // 2:]) >= -1e-9 * np.maximum(1.0, np.abs(gap[t.size // 2 + 1:])))
        return bool(inc and convex and superlinear and bounded)


def constant(value: float) -> Potential:
    return Potential(((float(value), ConstBasis()),), 0.0, SUBLINEAR, 0.0, None, f"const({value:g})")


def power_law(coef: float, alpha: float) -> Potential:
    """coef * theta**alpha.  Nondecreasing requires coef * alpha >= 0."""
    if alpha == 0:
        return constant(coef)
    if coef * alpha < 0:
        raise ConfigurationError("power law must be nondecreasing: coef and alpha need equal signs")
    growth = SUBLINEAR if alpha < 1 else (LINEAR if alpha == 1 else SUPERLINEAR)
    a1 = math.inf if alpha < 0 else 0.0
    env = (lambda t, k=coef, a=alpha: k * np.asarray(t, dtype=float) ** a) if alpha > 1 else None
    return Potential(((float(coef), PowerBasis(float(alpha))),), a1, growth,
                     float(coef) if alpha == 1 else 0.0, env, f"{coef:g}*theta^{alpha:g}")


def logarithmic(a1: float) -> Potential:
    """a1 * log(theta): log singularity at 0, sublinear at infinity."""
    if a1 < 0:
        raise ConfigurationError("log coefficient must be nonnegative for an attractive potential")
    return Potential(((float(a1), LogBasis()),), float(a1), SUBLINEAR, 0.0, None, f"{a1:g}*log")


def linear(a2: float, c: float = 1.0) -> Potential:
    """a2 * sqrt(c) * theta; a2 is measured against the curvature scale sqrt(c)."""
    if a2 < 0 or c <= 0:
        raise ConfigurationError("linear potential needs a2 >= 0 and c > 0")
    slope = a2 * math.sqrt(c)
    return Potential(((slope, PowerBasis(1.0)),), 0.0, LINEAR, slope, None, f"{a2:g}*lin")


def log_linear(a1: float, a2: float, c: float = 1.0) -> Potential:
    """a1 * log(theta) + a2 * sqrt(c) * theta."""
    p = logarithmic(a1) + linear(a2, c)
    return Potential(p.terms, p.a1, p.growth, p.slope, None, f"{a1:g}*log+{a2:g}*lin")


def quadratic(coef: float = 1.0) -> Potential:
    return power_law(coef, 2.0)


def exponential(rate: float = 1.0, coef: float = 1.0) -> Potential:
    if rate <= 0 or coef <= 0:
        raise ConfigurationError("exponential potential needs positive rate and coefficient")
    env = lambda t, k=coef, r=rate: k * np.exp(r * np.asarray(t, dtype=float))  # noqa: E731
    return Potential(((float(coef), ExpBasis(float(rate))),), 0.0, SUPERLINEAR, 0.0, env,
                     f"{coef:g}*exp({rate:g}theta)")


def log_sinhc_profile(c: float, coef: float = 1.0) -> Potential:
    return Potential(((float(coef), LogSinhcBasis(float(c))),), 0.0, LINEAR,
                     coef * math.sqrt(c), None, f"{coef:g}*logsinhc")


def tabulated(theta, values, a1: float = 0.0, growth: str | None = None,
              slope: float = 0.0, envelope=None) -> Potential:
    """Tabulated profile with user-declared descriptors (growth is required)."""
    if growth not in (SUBLINEAR, LINEAR, SUPERLINEAR):
        raise ClassificationInputError("tabulated potentials must declare a growth class")
    b = TabulatedBasis(np.asarray(theta, dtype=float), np.asarray(values, dtype=float), float(a1))
    return Potential(((1.0, b),), float(a1), growth, float(slope), envelope, "tabulated")


# --- regime classification ---------------------------------------------------

class Regime(str, enum.Enum):
    BLOW_UP = "NonexistenceBlowUp"
    SPREADING = "NonexistenceSpreading"
    EXISTENCE_GENERAL = "ExistenceGeneral"
    EXISTENCE_HOMOGENEOUS = "ExistenceHomogeneous"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class RegimeVerdict:
    tag: Regime
    witness: str


def classify_regime(h: Potential, n: int, c_m: float, c_M: float) -> RegimeVerdict:
    """Apply the nonexistence and existence criteria to the declared descriptors of h."""
    if h.a1 is None or h.growth is None:
        raise ClassificationInputError("potential lacks asymptotic descriptors")
    if h.growth not in _GROWTH_RANK:
        raise ClassificationInputError(f"unknown growth class {h.growth!r}")
    a1 = h.a1
    if a1 > 2 * n:
        return RegimeVerdict(Regime.BLOW_UP, f"A1={a1:g} > 2n={2 * n}")
    if h.growth == SUBLINEAR:
        return RegimeVerdict(Regime.SPREADING, "sublinear growth at infinity")
    if h.growth == LINEAR and c_M > 0 and h.slope / math.sqrt(c_M) < n - 1:
        return RegimeVerdict(Regime.SPREADING,
                             f"A2={h.slope / math.sqrt(c_M):g} < n-1={n - 1} (relative to sqrt(c_M))")
    if a1 < 2 * n:
        if h.growth == SUPERLINEAR:
            if h.envelope is None or not h.check_envelope():
                raise ClassificationInputError("superlinear potential without a valid envelope")
            return RegimeVerdict(Regime.EXISTENCE_GENERAL, f"A1={a1:g} < 2n and superlinear envelope")
        if h.growth == LINEAR and c_m > 0 and h.slope / math.sqrt(c_m) > 2 * (n - 1):
            return RegimeVerdict(Regime.EXISTENCE_HOMOGENEOUS,
                                 f"A1={a1:g} < 2n and A2={h.slope / math.sqrt(c_m):g} > 2(n-1)={2 * (n - 1)}")
    return RegimeVerdict(Regime.UNDETERMINED, "descriptors fall between the nonexistence and existence criteria")


# --- constants ---------------------------------------------------------------

def beta_eps(eps: float, grid_size: int = 10_000) -> float:
    """Largest beta with sinh(x)/x >= beta * exp((1-eps) x) for all x > 0.

    f(x) = log(sinh(x)/x) - (1-eps) x is convex with f(0) = 0, so beta is
    exp(min f).  The minimum is found by golden-section search in log x and
    then re-checked on a dense grid; the smaller value is returned.
    """
    if not (0.0 < eps < 1.0):
        raise DomainError(f"eps must lie in (0, 1), got {eps!r}")
    k = 1.0 - eps

    def f_log(u):
        x = math.exp(u)
        return float(log_sinhc(x)) - k * x

    # minimiser solves coth x - 1/x = 1 - eps; it lies between 1/eps - 2 and 1/eps + 1
    hi = math.log(1.0 / eps + 2.0)
    lo = math.log(max(1e-6, 3.0 * k) * 0.5)
    res = optimize.minimize_scalar(f_log, bracket=(lo - 1.0, hi + 1.0),
                                   method="golden", tol=1e-12)
    fmin = min(float(res.fun), 0.0)
    x_star = math.exp(res.x)
    grid = np.geomspace(1e-8, max(10.0 * x_star, 50.0), grid_size)
    fmin = min(fmin, float(np.min(log_sinhc(grid) - k * grid)))
    return math.exp(fmin)


@dataclass(frozen=True)
class Lemma62Constants:
    eps: float
    C: float
    theta_min: float
    theta_max: float
    grid_size: int
    argmin: float  # grid point attaining the infimum

    @property
    def interior_minimum(self) -> bool:
        """False when the infimum sits at the right end of the scan (the scan truncated a decreasing tail)."""
        return self.argmin < self.theta_max


def lemma62_integrand(h: Potential, n: int, c: float, eps: float, t):
    t = np.asarray(t, dtype=float)
    return (h(t) - 2 * n * np.log(t) - 2 * (n - 1) * log_sinhc(math.sqrt(c) * t) - eps * t)


def lemma62_constants(h: Potential, n: int, c: float, eps_hint: float = 1.0,
                      theta_range: tuple[float, float] = (1e-8, 1e3),
                      grid_size: int = 10_000, margin: float = 1e-6) -> Lemma62Constants:
    """(eps, C) with h - 2n log t - 2(n-1) log sinhc(sqrt(c) t) - eps t >= C on the scan grid."""
    if h.growth == LINEAR:
        eps = h.slope - 2 * (n - 1) * math.sqrt(c)
        if eps <= 0:
            raise InfeasibleError(f"linear rate A2={h.slope / math.sqrt(c):g} does not exceed 2(n-1)")
    elif h.growth == SUPERLINEAR:
        eps = float(eps_hint)
        if eps <= 0:
            raise InfeasibleError("eps must be positive")
    else:
        raise InfeasibleError("sublinear potentials admit no positive eps")
    if h.a1 is not None and h.a1 > 2 * n:
        # h - 2n log t tends to -inf at the origin, whatever the grid shows
        raise InfeasibleError(f"A1={h.a1:g} exceeds 2n={2 * n}: no finite C")
    grid = np.geomspace(theta_range[0], theta_range[1], grid_size)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = lemma62_integrand(h, n, c, eps, grid)
    if np.any(np.isnan(vals)) or np.min(vals) == -math.inf:
        raise InfeasibleError("scan reached -inf: h is too singular at the origin")
    i = int(np.argmin(vals))
    return Lemma62Constants(eps, float(vals[i]) - margin, theta_range[0], theta_range[1],
                            grid_size, float(grid[i]))


def entropy_bound_constant(h: Potential, n: int, c: float,
                           theta_range: tuple[float, float] = (1e-8, 1e3),
                           grid_size: int = 10_000, margin: float = 1e-6) -> float:
    """Grid infimum of h - A1 log t - 2(n-1) log sinhc(sqrt(c) t) for the entropy lower bound."""
    grid = np.geomspace(theta_range[0], theta_range[1], grid_size)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = h(grid) - h.a1 * np.log(grid) - 2 * (n - 1) * log_sinhc(math.sqrt(c) * grid)
    if np.any(np.isnan(vals)) or np.min(vals) == -math.inf:
        raise InfeasibleError("entropy bound scan reached -inf")
    return float(np.min(vals)) - margin
