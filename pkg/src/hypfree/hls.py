"""Logarithmic HLS deficits on H^n and an estimate of the Euclidean constant C0.

With the Euclidean constant C0(n) the manifold inequality reads

    -iint log d(x,y) rho rho <= (1/n) int rho log rho
                                + ((n-1)/n) int log(sinh(sqrt(c_m) theta)/(sqrt(c_m) theta)) rho + C0,

and the integrated form replaces the pole-centred correction by the double
integral of log(sinh(sqrt(c_m) d)/(sqrt(c_m) d)).  Deficits are right side
minus left side and should be nonnegative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import RadialDensity, entropy, radial_moment
from .energy import log_sinhc_pair_moment, pair_form
from .geometry import log_sinhc, shell_volumes
from .potentials import logarithmic

_LOG = logarithmic(1.0)


@dataclass(frozen=True)
class HlsConfig:
    C0: float
    source: str = "user-supplied"  # or "gaussian-estimated"


def euclidean_gaussian_deficit(n: int, sigma: float, cells: int = 256, width: float = 9.0) -> float:
    """-iint log|x-y| g g - (1/n) int g log g for the centred Gaussian of scale sigma in R^n.

    Evaluated with the same polar quadrature as the manifold energies, in
    the flat limit c = 0.
    """
    edges = np.linspace(0.0, width * sigma, cells + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    vol = shell_volumes(n, 0.0, edges[:-1], edges[1:])
    vals = np.exp(-0.5 * (mid / sigma) ** 2)
    vals /= np.sum(vals * vol)
    ent = float(np.sum(vals * np.log(vals) * vol))
    half_log, _, _ = pair_form(n, 0.0, edges, vals, _LOG)
    return -2.0 * half_log - ent / n


def estimate_C0(n: int, sigmas=None, cells: int = 256, margin: float = 0.1) -> HlsConfig:
    """Largest Gaussian deficit over a grid of scales, plus a relative safety margin.

    The Gaussian deficit is scale invariant in R^n, so the grid mostly
    guards against quadrature error; the margin covers the gap to the sharp
    constant, which Gaussians do not attain.
    """
    if int(n) != n or n < 2:
        raise ValueError("dimension must be an integer >= 2")
    sigmas = np.geomspace(0.25, 4.0, 9) if sigmas is None else np.asarray(sigmas, dtype=float)
    best = max(euclidean_gaussian_deficit(int(n), float(s), cells) for s in sigmas)
    return HlsConfig(best + margin * abs(best), "gaussian-estimated")


def gaussian_deficit_closed_form(n: int) -> float:
    """Exact value of the Euclidean Gaussian deficit (independent of the scale)."""
    from scipy.special import digamma
    # |x - y|^2 / (2 sigma^2) is chi-square with n degrees of freedom
    mean_log = 0.5 * (math.log(4.0) + float(digamma(n / 2.0)))
    neg_ent = 0.5 * n * math.log(2.0 * math.pi * math.e)
    return -mean_log + neg_ent / n


def log_moment_terms(rho: RadialDensity, **quad):
    """(entropy, -iint log d rho rho) of a density."""
    half_log, _, _ = pair_form(rho.space.n, rho.space.c, rho.edges, rho.values, _LOG, **quad)
    return entropy(rho), -2.0 * half_log


def pole_correction(rho: RadialDensity, c: float | None = None) -> float:
    """int log(sinh(sqrt(c) theta)/(sqrt(c) theta)) rho dV, c defaulting to the lower band value."""
    c = rho.space.c_lower if c is None else c
    k = math.sqrt(c)
    return radial_moment(rho, lambda t: log_sinhc(k * t))


def log_hls_deficit(rho: RadialDensity, config: HlsConfig, **quad) -> float:
    n = rho.space.n
    ent, lhs = log_moment_terms(rho, **quad)
    rhs = ent / n + (n - 1) / n * pole_correction(rho) + config.C0
    return rhs - lhs


def integrated_hls_deficit(rho: RadialDensity, config: HlsConfig, **quad) -> float:
    n = rho.space.n
    ent, lhs = log_moment_terms(rho, **quad)
    rhs = ent / n + (n - 1) / n * log_sinhc_pair_moment(rho, **quad) + config.C0
    return rhs - lhs
