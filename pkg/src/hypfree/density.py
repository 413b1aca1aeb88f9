"""Radial probability densities about the pole of H^n.

A :class:`RadialDensity` is piecewise constant on spherical shells
``edges[i] <= theta < edges[i+1]``; ``values[i]`` is the density per unit
Riemannian volume.  Piecewise-constant profiles keep the entropy exact and
turn every double integral into a sum over pairs of cells.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, DegenerateInputError
from .geometry import Space, area_profile, log_sinhc

MASS_TOL = 1e-8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _cell_quadrature(edges, f):
    """Per-cell integral of f(theta) over each [edges[i], edges[i+1]] with 16-point Gauss-Legendre."""
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    t = 0.5 * (lo + hi)[:, None] + half[:, None] * _GL_X[None, :]
    return half * (f(t) @ _GL_W)


@dataclass(eq=False)
class RadialDensity:
    """Piecewise-constant radial density on ``edges`` (0 = edges[0] < ... < edges[-1])."""

    space: Space
    edges: np.ndarray
    values: np.ndarray
    renormalization: float = 1.0
    label: str = field(default="rho")

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        e, v = self.edges, self.values
        if e.ndim != 1 or e.size < 2 or v.shape != (e.size - 1,):
            raise ConfigurationError("need K+1 edges and K cell values")
        if e[0] != 0.0 or np.any(np.diff(e) <= 0):
            raise ConfigurationError("edges must start at 0 and increase strictly")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ConfigurationError("density values must be finite and nonnegative")

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        return self.space.cell_volumes(self.edges)

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.cell_volumes

    @property
    def mass(self) -> float:
        return float(np.sum(self.masses))

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def theta_max(self) -> float:
        return float(self.edges[-1])

    @property
    def support_radius(self) -> float:
        nz = np.nonzero(self.values > 0)[0]
        return float(self.edges[nz[-1] + 1]) if nz.size else 0.0

    def with_values(self, values, label: str | None = None) -> "RadialDensity":
        """Same grid, new values (normalized, factor recorded)."""
        return normalized(self.space, self.edges, values, label or self.label)

    def __call__(self, theta):
        """Density value at radius theta (0 beyond the grid)."""
        theta = np.asarray(theta, dtype=float)
        idx = np.searchsorted(self.edges, theta, side="right") - 1
        inside = (idx >= 0) & (idx < self.values.size)
        return np.where(inside, self.values[np.clip(idx, 0, self.values.size - 1)], 0.0)


def normalized(space: Space, edges, values, label: str = "rho") -> RadialDensity:
    edges = np.asarray(edges, dtype=float)
    values = np.asarray(values, dtype=float)
    vol = space.cell_volumes(edges)
    m = float(np.sum(values * vol))
    if not m > 0:
        raise DegenerateInputError("density has zero total mass")
    return RadialDensity(space, edges, values / m, 1.0 / m, label)


def default_theta_max(space: Space) -> float:
    return 20.0 / space.sqrt_c


def uniform_ball(space: Space, R: float, cells: int = 128,
                 theta_max: float | None = None) -> RadialDensity:
    """rho_R = 1/|B_R| on [0, R), optionally zero-padded out to theta_max."""
    if not R > 0:
        raise ConfigurationError("ball radius must be positive")
    edges = np.linspace(0.0, R, cells + 1)
    if theta_max is not None and theta_max > R:
        h = R / cells
        extra = np.linspace(R, theta_max, max(1, int(math.ceil((theta_max - R) / h))) + 1)[1:]
        edges = np.concatenate([edges, extra])
    values = np.zeros(edges.size - 1)
    values[:cells] = 1.0 / space.ball_volume(R)
    return RadialDensity(space, edges, values, 1.0, f"ball(R={R:g})")


def gaussian_like(space: Space, sigma: float, cells: int = 512,
                  theta_max: float | None = None) -> RadialDensity:
    """rho proportional to exp(-theta^2 / (2 sigma^2)), sampled at cell centres."""
    if not sigma > 0:
        raise ConfigurationError("sigma must be positive")
    if theta_max is None:
        theta_max = (space.n - 1) * space.sqrt_c * sigma ** 2 + 10.0 * sigma
    edges = np.linspace(0.0, theta_max, cells + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    return normalized(space, edges, np.exp(-0.5 * (mid / sigma) ** 2), f"gauss(s={sigma:g})")


def exponential_like(space: Space, rate: float, cells: int = 512,
                     theta_max: float | None = None) -> RadialDensity:
    """rho proportional to exp(-rate * theta); integrable on H^n when rate > (n-1) sqrt(c)."""
    excess = rate - (space.n - 1) * space.sqrt_c
    if theta_max is None:
        if excess <= 0:
            raise ConfigurationError("rate too small for an integrable profile; give theta_max")
        theta_max = 30.0 / excess
    edges = np.linspace(0.0, theta_max, cells + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    return normalized(space, edges, np.exp(-rate * mid), f"exp(r={rate:g})")


def shell(space: Space, r_in: float, r_out: float, cells: int = 128,
          theta_max: float | None = None) -> RadialDensity:
    """Uniform density on the annulus r_in <= theta < r_out."""
    if not 0 <= r_in < r_out:
        raise ConfigurationError("need 0 <= r_in < r_out")
    top = max(r_out, theta_max or r_out)
    edges = np.linspace(0.0, top, cells + 1)
    edges = np.unique(np.concatenate([edges, [r_in, r_out]]))
    mid = 0.5 * (edges[:-1] + edges[1:])
    vals = ((mid >= r_in) & (mid < r_out)).astype(float)
    return normalized(space, edges, vals, f"shell({r_in:g},{r_out:g})")


def tabulated(space: Space, edges, values) -> RadialDensity:
    """Cell values on given edges, renormalized; the factor is kept in ``renormalization``."""
    values = np.asarray(values, dtype=float)
    if values.size and np.all(values == 0):
        raise DegenerateInputError("tabulated density is identically zero")
    if np.any(values < 0):
        raise ConfigurationError("tabulated density has negative entries")
    return normalized(space, edges, values, "tabulated")


def builtin_family(space: Space, cells: int = 192) -> list[RadialDensity]:
    """Twenty test densities sharing one grid, with lengths scaled by 1/sqrt(c).

    A shared grid means kernel matrices are computed once per potential.
    """
    s = 1.0 / space.sqrt_c
    radii = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 3.0]
    shells = [(0.5, 1.0), (1.0, 2.0), (2.0, 2.5)]
    top = 8.0 * s
    edges = np.linspace(0.0, top, cells + 1)
    fine = np.geomspace(0.01 * s, 0.25 * s, 17)
    marks = np.array(radii + [a for ab in shells for a in ab]) * s
    edges = np.unique(np.round(np.concatenate([edges, fine, marks]), 12))
    mid = 0.5 * (edges[:-1] + edges[1:])
    out = []
    for R in radii:
        out.append(normalized(space, edges, (mid < R * s).astype(float), f"ball(R={R * s:g})"))
    for a, b in shells:
        out.append(normalized(space, edges, ((mid >= a * s) & (mid < b * s)).astype(float),
                              f"shell({a * s:g},{b * s:g})"))
    for sig in [0.1, 0.3, 0.6, 1.0, 1.5]:
        out.append(normalized(space, edges, np.exp(-0.5 * (mid / (sig * s)) ** 2),
                              f"gauss(s={sig * s:g})"))
    k = (space.n - 1) * space.sqrt_c
    for rate in [1.5, 3.0, 6.0]:
        out.append(normalized(space, edges, np.exp(-(k + rate / s) * mid), f"exp(r={k + rate / s:g})"))
    # a bimodal profile and a decreasing power-like profile
    out.append(normalized(space, edges,
                          np.exp(-0.5 * (mid / (0.3 * s)) ** 2) + 0.2 * ((mid > 2 * s) & (mid < 3 * s)),
                          "bimodal"))
    out.append(normalized(space, edges, (1.0 + mid / (0.2 * s)) ** (-space.n - 2.0) * (mid < 6 * s),
                          "power-tail"))
    return out


# --- functionals ----------------------------------------------------------

def entropy(rho: RadialDensity) -> float:
    """Exact entropy sum_i rho_i log rho_i dV_i with 0 log 0 = 0."""
    v = rho.values
    pos = v > 0
    return float(np.sum(v[pos] * np.log(v[pos]) * rho.cell_volumes[pos]))


def radial_moment(rho: RadialDensity, f) -> float:
    """Integral of f(theta) rho dV, cell by cell with Gauss-Legendre on f S."""
    n, c = rho.space.n, rho.space.c
    w = _cell_quadrature(rho.edges, lambda t: f(t) * area_profile(n, c, t))
    return float(np.dot(rho.values, w))


def first_moment(rho: RadialDensity) -> float:
    """W1 distance to the point mass at the pole: the mean radius."""
    sp = rho.space
    if sp.n == 2:
        k = sp.sqrt_c
        e = rho.edges
        F = 2.0 * math.pi / k * (e * np.cosh(k * e) / k - np.sinh(k * e) / (k * k))
        # the antiderivative cancels badly near 0; fall back to quadrature there
        cells = np.diff(F)
        small = e[1:] * k < 1e-2
        if np.any(small):
            cells[small] = _cell_quadrature(e[:np.count_nonzero(small) + 1],
                                            lambda t: t * area_profile(2, sp.c, t))
        return float(np.dot(rho.values, cells))
    return radial_moment(rho, lambda t: t)


def log_jacobian_moment(rho: RadialDensity) -> float:
    """Integral of log J(theta) rho dV, J the Jacobian of exp at the pole."""
    sp = rho.space
    return (sp.n - 1) * radial_moment(rho, lambda t: log_sinhc(sp.sqrt_c * t))


def mass_beyond(rho: RadialDensity, theta: float) -> float:
    """Mass in cells whose inner edge is at or beyond theta."""
    return float(np.sum(rho.masses[rho.edges[:-1] >= theta]))


def pushforward_entropy_residual(rho: RadialDensity, panels: int = 1) -> float:
    """[entropy + int rho log J] minus the entropy of the pushforward under log_o.

    The left side uses the exact cell entropy and adaptive quadrature for the
    Jacobian term.  The right side integrates g log g over R^n in polar form,
    with g = rho J the pushforward density, by composite Simpson on each cell.
    """
    sp = rho.space
    n, k = sp.n, sp.sqrt_c
    omega_n = n * math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    lhs_ent = entropy(rho)
    lhs_jac = 0.0
    for i in np.nonzero(rho.values > 0)[0]:
        a, b = rho.edges[i], rho.edges[i + 1]
        val, _ = integrate.quad(
            lambda t: (n - 1) * float(log_sinhc(k * t)) * float(area_profile(n, sp.c, t)),
            a, b, epsabs=1e-15, epsrel=1e-13, limit=100)
        lhs_jac += rho.values[i] * val
    rhs = 0.0
    m = 2 * panels
    for i in np.nonzero(rho.values > 0)[0]:
        a, b = rho.edges[i], rho.edges[i + 1]
        r = np.linspace(a, b, m + 1)
        logj = (n - 1) * log_sinhc(k * r)
        g = rho.values[i] * np.exp(logj)
        f = g * (math.log(rho.values[i]) + logj) * omega_n * r ** (n - 1)
        rhs += integrate.simpson(f, x=r)
    return float(lhs_ent + lhs_jac - rhs)


# --- sampling -----------------------------------------------------------

def sample_radii(rho: RadialDensity, size: int, rng: np.random.Generator) -> np.ndarray:
    """Radii distributed like rho by inverting the cumulative shell volume."""
    sp = rho.space
    p = rho.masses / rho.masses.sum()
    cell = rng.choice(p.size, size=size, p=p)
    u = rng.random(size)
    lo, hi = rho.edges[cell], rho.edges[cell + 1]
    target = u * rho.cell_volumes[cell]
    if sp.n == 2:
        k = sp.sqrt_c
        v_lo = 4.0 * math.pi * np.sinh(0.5 * k * lo) ** 2 / sp.c
        return 2.0 / k * np.arcsinh(np.sqrt(sp.c * (v_lo + target) / (4.0 * math.pi)))
    # Newton on V(t) - V(lo) = target, with the partial volume by Gauss-Legendre
    t = lo + u * (hi - lo)
    xg, wg = _GL_X, _GL_W
    for _ in range(30):
        half = 0.5 * (t - lo)
        nodes = 0.5 * (t + lo)[:, None] + half[:, None] * xg[None, :]
        vol = half * (sp.sphere_area(nodes) @ wg)
        step = (vol - target) / np.maximum(sp.sphere_area(t), 1e-300)
        t = np.clip(t - step, lo, hi)
        if np.max(np.abs(step)) < 1e-14 * max(1.0, float(np.max(hi))):
            break
    return t


def sample(rho: RadialDensity, size: int, rng: np.random.Generator) -> np.ndarray:
    """Points of H^n (hyperboloid coordinates) drawn from rho with isotropic directions."""
    theta = sample_radii(rho, size, rng)
    u = rng.standard_normal((size, rho.space.n))
    return rho.space.point_at(theta, u)


# --- CSV ---------------------------------------------------------------------

def write_csv(rho: RadialDensity, path) -> None:
    """Two columns (theta, rho): every edge, with the value of the cell starting there.

    The final row carries theta_max and rho = 0.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "rho"])
        for t, v in zip(rho.edges, np.append(rho.values, 0.0)):
            w.writerow([repr(float(t)), repr(float(v))])


def read_csv(space: Space, path) -> RadialDensity:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [s.strip() for s in rows[0]] != ["theta", "rho"]:
        raise ConfigurationError(f"{path}: expected header 'theta,rho'")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: malformed row ({exc})") from None
    if data.shape[0] < 2:
        raise ConfigurationError(f"{path}: need at least two rows")
    return tabulated(space, data[:, 0], data[:-1, 1])


__all__ = [
    "RadialDensity", "uniform_ball", "gaussian_like", "exponential_like", "shell", "tabulated",
    "builtin_family", "entropy", "first_moment", "radial_moment", "log_jacobian_moment",
    "pushforward_entropy_residual", "sample", "sample_radii", "write_csv", "read_csv",
    "normalized", "mass_beyond",
]
