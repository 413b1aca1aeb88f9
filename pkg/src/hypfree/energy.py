"""Free energy E[rho] = int rho log rho + 1/2 iint h(d(x, y)) rho(x) rho(y) of radial densities.

Interaction quadrature
----------------------
For a density that is constant on radial cells the interaction is
``1/2 rho^T M rho`` with

    M_ij = int_{cell i} int_{cell j} <h(d(t1, t2, gamma))>_gamma dV(t1) dV(t2),

where ``<.>_gamma`` averages over the angle between the two points with
weight sin(gamma)^(n-2).  The radial integrals use Gauss-Legendre nodes in
each cell with the sphere area folded into the weights (rescaled so every
cell integrates to its exact volume).  The angular rule is composite
Gauss-Legendre on panels graded geometrically towards gamma = 0, which keeps
the log singularity of h(d) at coincident radii under control.  Diagonal
cells are refined dyadically; the difference between the last two levels is
reported as the quadrature error estimate.

Kernel matrices depend only on (n, c, grid, basis profile), so they are
cached and shared by every density and potential coefficient on that grid.
"""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .density import RadialDensity, entropy, first_moment, uniform_ball
from .errors import ConfigurationError
from .geometry import Space, area_profile, shell_volumes, unit_ball_volume
from .potentials import (ConstBasis, LogSinhcBasis, Potential, PowerBasis, beta_eps,
                         entropy_bound_constant, Lemma62Constants)

RADIAL_ORDER = 3
DIAGONAL_LEVELS = 6
ANGULAR_PANELS = 8
ANGULAR_ORDER = 8
_CHUNK = 1 << 21  # elements per vectorised slab
_CACHE_SIZE = 48
_cache: OrderedDict = OrderedDict()


def angular_rule(n: int, panels: int = ANGULAR_PANELS, order: int = ANGULAR_ORDER):
    """Nodes (as sin^2(gamma/2)) and weights of the normalized angular average on [0, pi].

    Panels are [0, pi 2^-panels], ..., [pi/4, pi/2], [pi/2, pi] with ``order``
    Gauss-Legendre points each.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    br = np.concatenate([[0.0], math.pi * 2.0 ** -np.arange(panels - 1, 0, -1.0), [math.pi]])
    a, b = br[:-1, None], br[1:, None]
    g = (0.5 * (a + b) + 0.5 * (b - a) * x).ravel()
    u = (0.5 * (b - a) * w).ravel() * np.sin(g) ** (n - 2)
    return np.sin(0.5 * g) ** 2, u / u.sum()


def _edges_key(edges: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(edges, dtype=float).tobytes()).hexdigest()


class PolarQuadrature:
    """Cell-pair quadrature for radial densities in the space of curvature -c (c >= 0)."""

    def __init__(self, n: int, c: float, edges, radial_order: int = RADIAL_ORDER,
                 levels: int = DIAGONAL_LEVELS, panels: int = ANGULAR_PANELS,
                 angular_order: int = ANGULAR_ORDER):
        self.n, self.c = int(n), float(c)
        self.edges = np.asarray(edges, dtype=float)
        self.k = math.sqrt(self.c)
        if self.k * self.edges[-1] > 340.0:
            raise ConfigurationError("grid too wide for double precision: need sqrt(c) * theta_max <= 340")
        self.q = radial_order
        self.levels = levels
        self.s2, self.u = angular_rule(self.n, panels, angular_order)
        self._glx, self._glw = np.polynomial.legendre.leggauss(self.q)
        self.key = (self.n, self.c, _edges_key(self.edges), self.q, levels, panels, angular_order)

    # -- building blocks --

    def _nodes(self, lo, hi):
        half = 0.5 * (hi - lo)
        t = (0.5 * (lo + hi))[:, None] + half[:, None] * self._glx
        w = half[:, None] * self._glw * area_profile(self.n, self.c, t)
        vol = shell_volumes(self.n, self.c, lo, hi)
        tot = w.sum(axis=1)
        scale = np.divide(vol, tot, out=np.ones_like(vol), where=tot > 0)
        return t, w * scale[:, None]

    def distance(self, t1, t2, s2):
        if self.c == 0.0:
            return np.sqrt((t1 - t2) ** 2 + 4.0 * t1 * t2 * s2)
        k = self.k
        a = np.sinh(0.5 * k * (t1 - t2))
        arg = a * a + np.sinh(k * t1) * np.sinh(k * t2) * s2
        return (2.0 / k) * np.arcsinh(np.sqrt(arg))

    def block_sums(self, lo1, hi1, lo2, hi2, bases) -> np.ndarray:
        """Integrals of <b(d)>_gamma over the blocks [lo1,hi1] x [lo2,hi2] for each basis b."""
        lo1, hi1, lo2, hi2 = (np.asarray(v, dtype=float) for v in (lo1, hi1, lo2, hi2))
        t1, w1 = self._nodes(lo1, hi1)
        t2, w2 = self._nodes(lo2, hi2)
        nb = lo1.size
        out = np.zeros((len(bases), nb))
        q, G = self.q, self.s2.size
        step = max(1, _CHUNK // (q * q * G))
        s2 = self.s2[None, None, None, :]
        for s in range(0, nb, step):
            sl = slice(s, s + step)
            d = self.distance(t1[sl, :, None, None], t2[sl, None, :, None], s2)
            ww = w1[sl, :, None] * w2[sl, None, :]
            for ib, b in enumerate(bases):
                with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                    kb = b.value(d) @ self.u
                out[ib, sl] = np.einsum("bij,bij->b", ww, kb)
        return out

    def _diagonal_pattern(self):
        """Relative sub-blocks of a diagonal cell and their weights in the fine and coarse sums."""
        L = self.levels
        f1lo, f1hi, f2lo, f2hi, fine, coarse = [], [], [], [], [], []
        for lev in range(1, L + 1):
            m = 2 ** lev
            for p in range(m // 2):
                f1lo.append(2 * p / m); f1hi.append((2 * p + 1) / m)
                f2lo.append((2 * p + 1) / m); f2hi.append((2 * p + 2) / m)
                fine.append(2.0); coarse.append(2.0 if lev < L else 0.0)
        for lev, wf, wc in ((L, 1.0, 0.0), (L - 1, 0.0, 1.0)):
            if lev < 0:
                continue
            m = 2 ** lev
            for p in range(m):
                f1lo.append(p / m); f1hi.append((p + 1) / m)
                f2lo.append(p / m); f2hi.append((p + 1) / m)
                fine.append(wf); coarse.append(wc)
        return tuple(np.array(v) for v in (f1lo, f1hi, f2lo, f2hi, fine, coarse))

    def compute(self, bases, upto: int):
        """Kernel matrices (upto x upto) and diagonal error estimates for the given bases."""
        e = self.edges
        lo, hi = e[:upto], e[1:upto + 1]
        iu, ju = np.triu_indices(upto, 1)
        mats = [np.zeros((upto, upto)) for _ in bases]
        if iu.size:
            off = self.block_sums(lo[iu], hi[iu], lo[ju], hi[ju], bases)
            for M, vals in zip(mats, off):
                M[iu, ju] = vals
                M[ju, iu] = vals
        f1lo, f1hi, f2lo, f2hi, wf, wc = self._diagonal_pattern()
        width = (hi - lo)[:, None]
        blocks = self.block_sums((lo[:, None] + width * f1lo).ravel(), (lo[:, None] + width * f1hi).ravel(),
                                 (lo[:, None] + width * f2lo).ravel(), (lo[:, None] + width * f2hi).ravel(),
                                 bases)
        errs = []
        for M, vals in zip(mats, blocks):
            vals = vals.reshape(upto, -1)
            fine = vals @ wf
            M[np.arange(upto), np.arange(upto)] = fine
            errs.append(fine - vals @ wc)
        return mats, errs


def kernel_matrices(n: int, c: float, edges, bases, upto: int | None = None, **quad):
    """Cached kernel matrices for ``bases`` on the first ``upto`` cells of ``edges``."""
    pq = PolarQuadrature(n, c, edges, **quad)
    K = pq.edges.size - 1
    upto = K if upto is None else int(upto)
    out, errs, missing = {}, {}, []
    for b in bases:
        if isinstance(b, ConstBasis):
            v = shell_volumes(pq.n, pq.c, pq.edges[:upto], pq.edges[1:upto + 1])
            out[b], errs[b] = np.outer(v, v), np.zeros(upto)
            continue
        # exact-size hits only: slicing a larger matrix can differ in the last bit,
        # which would make outputs depend on what ran earlier in the process
        hit = (pq.key, b, upto)
        if hit in _cache:
            _cache.move_to_end(hit)
            out[b], errs[b] = _cache[hit]
        else:
            missing.append(b)
    if missing:
        mats, es = pq.compute(missing, upto)
        for b, M, err in zip(missing, mats, es):
            _cache[(pq.key, b, upto)] = (M, err)
            out[b], errs[b] = M, err
        while len(_cache) > _CACHE_SIZE:
            _cache.popitem(last=False)
    return out, errs


def clear_cache() -> None:
    _cache.clear()


# --- energies ------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    entropy: float
    interaction: float
    total: float
    error_estimate: float
    diverged: bool = False


def _support_upto(rho: RadialDensity) -> int:
    nz = np.nonzero(rho.values > 0)[0]
    return int(nz[-1]) + 1 if nz.size else 1


def pair_form(n: int, c: float, edges, values, h: Potential, **quad) -> tuple[float, float, bool]:
    """(1/2 iint h(d) rho rho, error estimate, diverged) for cell values on a grid (c >= 0 allowed)."""
    values = np.asarray(values, dtype=float)
    if not h.integrable(n):
        return -math.inf, math.inf, True
    nz = np.nonzero(values > 0)[0]
    upto = int(nz[-1]) + 1 if nz.size else 1
    v = values[:upto]
    bases = [b for coef, b in h.terms if coef != 0.0]
    mats, errs = kernel_matrices(n, c, edges, bases, upto, **quad)
    total, err = 0.0, 0.0
    for coef, b in h.terms:
        if coef == 0.0:
            continue
        total += 0.5 * coef * float(v @ mats[b] @ v)
        err += 0.5 * abs(coef) * float(np.abs(errs[b]) @ (v * v))
    return total, err, False


def interaction_energy(rho: RadialDensity, h: Potential, **quad) -> float:
    """1/2 iint h(d(x,y)) rho(x) rho(y); ``-inf`` when h is not locally integrable."""
    return pair_form(rho.space.n, rho.space.c, rho.edges, rho.values, h, **quad)[0]


def total_energy(rho: RadialDensity, h: Potential, **quad) -> EnergyReport:
    s = entropy(rho)
    inter, err, div = pair_form(rho.space.n, rho.space.c, rho.edges, rho.values, h, **quad)
    return EnergyReport(s, inter, s + inter, err, div)


def mean_pairwise_distance(rho: RadialDensity, **quad) -> float:
    """iint d(x, y) rho(x) rho(y)."""
    return 2.0 * interaction_energy(rho, Potential(((1.0, PowerBasis(1.0)),)), **quad)


def convolve_potential(rho: RadialDensity, h: Potential, **quad) -> np.ndarray:
    """Cell averages of (W * rho)(theta) = int h(d(theta, y)) rho(y) dy over each cell."""
    if not h.integrable(rho.space.n):
        return np.full(rho.values.size, -math.inf)
    K = rho.values.size
    bases = [b for coef, b in h.terms if coef != 0.0]
    mats, _ = kernel_matrices(rho.space.n, rho.space.c, rho.edges, bases, K, **quad)
    acc = np.zeros(K)
    for coef, b in h.terms:
        if coef != 0.0:
            acc += coef * (mats[b] @ rho.values)
    return acc / rho.cell_volumes


# --- the trial family of uniform balls ---------------------------------------------

def p_a(a: float, R: float, n: int) -> float:
    """p_a(R) = exp(-aR) int_0^R t^(n-1) exp(a t) dt, evaluated without overflow."""
    if R <= 0:
        return 0.0
    val, _ = integrate.quad(lambda t: t ** (n - 1) * math.exp(-a * (R - t)), 0.0, R,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@dataclass(frozen=True)
class EnergyBoundReport:
    R: float
    eps: float
    a: float
    beta: float
    p_a: float
    bound: float
    computed: float

    @property
    def slack(self) -> float:
        return self.bound - self.computed


def ball_energy_bound(space: Space, h: Potential, R: float, eps: float) -> tuple[float, float, float, float]:
    """Analytic upper bound on E[rho_R]; returns (bound, a, beta, p_a)."""
    n = space.n
    c_M = space.c_upper
    h2R = float(h(2.0 * R)) / 2.0
    if c_M == 0.0:
        return -math.log(unit_ball_volume(n)) - n * math.log(R) + h2R, 0.0, 1.0, math.nan
    a = math.sqrt(c_M) * (n - 1) * (1.0 - eps)
    beta = beta_eps(eps)
    pa = p_a(a, R, n)
    bound = (-math.log(n * unit_ball_volume(n) * beta ** (n - 1)) - a * R - math.log(pa) + h2R)
    return bound, a, beta, pa


def ball_energy_upper_bound(space: Space, h: Potential, R: float, eps: float,
                            cells: int = 96, **quad) -> EnergyBoundReport:
    """Compare E[rho_R] for the uniform ball with its analytic upper bound."""
    bound, a, beta, pa = ball_energy_bound(space, h, R, eps)
    computed = total_energy(uniform_ball(space, R, cells=cells), h, **quad).total
    return EnergyBoundReport(R, eps, a, beta, pa, bound, computed)


@dataclass(frozen=True)
class ScanResult:
    radii: np.ndarray
    entropy: np.ndarray
    interaction: np.ndarray
    total: np.ndarray
    bound: np.ndarray
    verdict: str
    small_slope: float  # d E / d log R over the smallest decade
    large_slope: float  # d E / d R over the largest decade


BLOW_UP_DIVERGES, SPREAD_DIVERGES, BOUNDED_BELOW = "BlowUpDiverges", "SpreadDiverges", "BoundedBelow"


def _lsq_slope(x, y) -> float:
    return float(np.polyfit(x, y, 1)[0])


def divergence_scan(space: Space, h: Potential, radii, eps: float = 0.5, cells: int = 64,
                    slope_threshold: float = 0.1, **quad) -> ScanResult:
    """E[rho_R] along the ball family and a verdict on divergence at R -> 0 or R -> infinity.

    BlowUpDiverges when E rises with log R over the smallest decade (slope >
    threshold), SpreadDiverges when E falls linearly in R over the largest
    decade (slope < -threshold), BoundedBelow otherwise.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    if radii.size < 3 or radii[-1] / radii[0] < 1e3 * (1 - 1e-12):
        raise ConfigurationError("radius list must span at least three decades")
    ent, inter, tot, bnd = [], [], [], []
    for R in radii:
        rep = total_energy(uniform_ball(space, float(R), cells=cells), h, **quad)
        ent.append(rep.entropy); inter.append(rep.interaction); tot.append(rep.total)
        bnd.append(ball_energy_bound(space, h, float(R), eps)[0])
    tot = np.array(tot)
    lo = radii <= radii[0] * 10.0 * (1 + 1e-12)
    hi = radii >= radii[-1] / 10.0 * (1 - 1e-12)
    small = _lsq_slope(np.log(radii[lo]), tot[lo]) if lo.sum() >= 2 else 0.0
    large = _lsq_slope(radii[hi], tot[hi]) if hi.sum() >= 2 else 0.0
    if not np.all(np.isfinite(tot)):
        verdict = BLOW_UP_DIVERGES
    elif small > slope_threshold:
        verdict = BLOW_UP_DIVERGES
    elif large < -slope_threshold:
        verdict = SPREAD_DIVERGES
    else:
        verdict = BOUNDED_BELOW
    return ScanResult(radii, np.array(ent), np.array(inter), tot, np.array(bnd), verdict, small, large)


# --- inequality checks ----------------------------------------------------------------

def lemma61_check(rho: RadialDensity, **quad) -> tuple[float, float, float]:
    """((2 - sqrt 2) W1, iint d rho rho, 2 W1) for a density centred at the pole."""
    w1 = first_moment(rho)
    return (2.0 - math.sqrt(2.0)) * w1, mean_pairwise_distance(rho, **quad), 2.0 * w1


def prop63_lower_bound_check(rho: RadialDensity, h: Potential, C0: float,
                             consts: Lemma62Constants, **quad) -> float:
    """E[rho] minus the W1 lower bound -C0 n + C/2 + (2 - sqrt 2) eps W1 / 2."""
    n = rho.space.n
    E = total_energy(rho, h, **quad).total
    lower = -C0 * n + consts.C / 2.0 + (2.0 - math.sqrt(2.0)) * consts.eps / 2.0 * first_moment(rho)
    return E - lower


def entropy_lower_bound_check(rho: RadialDensity, h: Potential, C0: float,
                              C_bar: float | None = None, **quad) -> float:
    """E[rho] minus delta int rho log rho - C0 n (1 - delta) + C_bar / 2, with A1 = 2n(1 - delta)."""
    sp = rho.space
    n = sp.n
    if not (h.a1 is not None and h.a1 < 2 * n):
        raise ConfigurationError("entropy lower bound needs A1 < 2n")
    delta = 1.0 - h.a1 / (2.0 * n)
    if C_bar is None:
        C_bar = entropy_bound_constant(h, n, sp.c_lower)
    rep = total_energy(rho, h, **quad)
    return rep.total - (delta * rep.entropy - C0 * n * (1.0 - delta) + C_bar / 2.0)


def log_sinhc_pair_moment(rho: RadialDensity, c: float | None = None, **quad) -> float:
    """iint log(sinh(sqrt(c) d)/(sqrt(c) d)) rho rho, with c defaulting to the lower band value."""
    c = rho.space.c_lower if c is None else c
    return 2.0 * interaction_energy(rho, Potential(((1.0, LogSinhcBasis(float(c))),)), **quad)
