"""Hyperbolic space H^n of constant curvature -c in the hyperboloid model.

Points are rows of ambient Minkowski coordinates ``x = (x0, x1, ..., xn)`` with
``<x, x>_L = -x0**2 + sum(xi**2) = -1/c`` and ``x0 > 0``.  Tangent vectors at
``x`` are ambient vectors ``v`` with ``<x, v>_L = 0``.  Every function accepts
single points (shape ``(n+1,)``) or stacks of points (shape ``(..., n+1)``) and
broadcasts like numpy does.

Besides the exact kernel, :class:`Space` carries an optional curvature band
``(c_M, c_m)`` used by :meth:`Space.comparison_bands` to evaluate the
Jacobian and volume bounds valid on any Cartan-Hadamard manifold whose
sectional curvatures lie in ``[-c_m, -c_M]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ConfigurationError, IterationLimitError, NumericalDegeneracyError

SHEET_TOL = 1e-9
ACOSH_TOL = 1e-9
_SERIES_CUTOFF = 1e-4


def unit_ball_volume(n: int) -> float:
    """Volume omega(n) of the Euclidean unit ball in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sinhc(x):
    """sinh(x)/x with the removable singularity filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(small, 1.0 + x2 / 6.0 + x2 * x2 / 120.0, np.sinh(safe) / safe)


def log_sinhc(x):
    """log(sinh(x)/x) for x >= 0, accurate near 0 and free of overflow for large x."""
    x = np.abs(np.asarray(x, dtype=float))
    small = x < 1e-2
    big = x > 20.0
    mid = ~(small | big)
    out = np.empty_like(x)
    x2 = x[small] ** 2
    out[small] = np.log1p(x2 / 6.0 + x2 * x2 / 120.0 + x2 ** 3 / 5040.0)
    xm = x[mid]
    out[mid] = np.log(np.sinh(xm) / xm)
    xb = x[big]
    out[big] = xb + np.log1p(-np.exp(-2.0 * xb)) - np.log(2.0 * xb)
    return out


def langevin(x):
    """coth(x) - 1/x, the derivative of log(sinh(x)/x)."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    safe = np.where(small, 1.0, x)
    return np.where(small, x / 3.0 - x ** 3 / 45.0, 1.0 / np.tanh(safe) - 1.0 / safe)


def minkowski(x, y):
    """Lorentzian inner product along the last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.sum(x[..., 1:] * y[..., 1:], axis=-1) - x[..., 0] * y[..., 0]


# Radial profiles for a possibly Euclidean curvature c >= 0.  The Space class
# only admits c > 0, but comparison bands and the Euclidean log-HLS probe need
# the c = 0 limits of the same formulas.

def area_profile(n: int, c: float, t):
    """Area of the geodesic sphere of radius t in the simply connected space of curvature -c."""
    t = np.asarray(t, dtype=float)
    if c == 0.0:
        return n * unit_ball_volume(n) * t ** (n - 1)
    return n * unit_ball_volume(n) * (t * sinhc(math.sqrt(c) * t)) ** (n - 1)


def volume_profile(n: int, c: float, R: float) -> float:
    """Volume of the geodesic ball of radius R (closed form for n = 2 and c = 0)."""
    if R < 0:
        raise ValueError("radius must be nonnegative")
    if R == 0.0:
        return 0.0
    if c == 0.0:
        return unit_ball_volume(n) * R ** n
    if n == 2:
        s = math.sinh(0.5 * math.sqrt(c) * R)
        return 4.0 * math.pi * s * s / c
    val, _ = integrate.quad(lambda t: float(area_profile(n, c, t)), 0.0, R,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def shell_volumes(n: int, c: float, lo, hi) -> np.ndarray:
    """Volumes of the shells lo <= theta < hi (arrays of equal shape)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if c == 0.0:
        return unit_ball_volume(n) * (hi ** n - lo ** n)
    if n == 2:
        k = math.sqrt(c)
        # sinh^2(b) - sinh^2(a) = sinh(b - a) sinh(b + a), free of cancellation
        return 4.0 * math.pi / c * np.sinh(0.5 * k * (hi - lo)) * np.sinh(0.5 * k * (hi + lo))
    # 12-point Gauss-Legendre on pieces short against the growth scale
    # 1/((n-1) sqrt(c)) integrates the sphere area to rounding
    width = float(np.max(hi - lo)) if hi.size else 0.0
    pieces = int(min(256, max(1, math.ceil(width * math.sqrt(c) * (n - 1) / 0.5))))
    x, w = np.polynomial.legendre.leggauss(12)
    step = (hi - lo) / pieces
    total = np.zeros_like(lo)
    for p in range(pieces):
        a = lo + p * step
        t = (a + 0.5 * step)[..., None] + (0.5 * step)[..., None] * x
        total = total + 0.5 * step * (area_profile(n, c, t) @ w)
    return total


def cell_volumes(n: int, c: float, edges) -> np.ndarray:
    """Volumes of the spherical shells between consecutive radii in ``edges``."""
    edges = np.asarray(edges, dtype=float)
    return shell_volumes(n, c, edges[:-1], edges[1:])


def polar_distance_profile(c: float, t1, t2, gamma):
    """Distance between points at radii t1, t2 from the pole separated by angle gamma.

    Uses the half-angle form of the hyperbolic law of cosines,
    ``sinh^2(sqrt(c) d / 2) = sinh^2(sqrt(c)(t1-t2)/2) + sinh(sqrt(c) t1) sinh(sqrt(c) t2) sin^2(gamma/2)``,
    which stays accurate for nearby points; c = 0 gives the Euclidean law.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    s2 = np.sin(0.5 * np.asarray(gamma, dtype=float)) ** 2
    if c == 0.0:
        return np.sqrt((t1 - t2) ** 2 + 4.0 * t1 * t2 * s2)
    k = math.sqrt(c)
    a = np.sinh(0.5 * k * (t1 - t2))
    arg = a * a + np.sinh(k * t1) * np.sinh(k * t2) * s2
    return 2.0 / k * np.arcsinh(np.sqrt(arg))


@dataclass(frozen=True)
class Space:
    """Hyperbolic space of dimension ``n`` and sectional curvature ``-c``.

    ``band`` optionally holds ``(c_M, c_m)`` with ``0 <= c_M <= c <= c_m``; it
    describes the curvature pinching used by the comparison calculators.
    """

    n: int
    c: float = 1.0
    band: tuple[float, float] | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigurationError(f"dimension must be an integer >= 2, got {self.n!r}")
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ConfigurationError(f"curvature magnitude must be positive, got {self.c!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "c", float(self.c))
        if self.band is not None:
            c_lo, c_hi = (float(b) for b in self.band)
            if not (0.0 <= c_lo <= self.c <= c_hi):
                raise ConfigurationError(
                    f"band must satisfy 0 <= c_M <= c <= c_m, got {self.band!r} with c={self.c}")
            object.__setattr__(self, "band", (c_lo, c_hi))

    @property
    def sqrt_c(self) -> float:
        return math.sqrt(self.c)

    @property
    def c_upper(self) -> float:
        """c_M: the magnitude of the upper curvature bound -c_M."""
        return self.band[0] if self.band is not None else self.c

    @property
    def c_lower(self) -> float:
        """c_m: the magnitude of the lower curvature bound -c_m."""
        return self.band[1] if self.band is not None else self.c

    # --- points and tangents -------------------------------------------

    @property
    def pole(self) -> np.ndarray:
        o = np.zeros(self.n + 1)
        o[0] = 1.0 / self.sqrt_c
        return o

    def project(self, x) -> np.ndarray:
        """Put ambient points back on the upper sheet by recomputing x0."""
        x = np.array(x, dtype=float, copy=True)
        x[..., 0] = np.sqrt(1.0 / self.c + np.sum(x[..., 1:] ** 2, axis=-1))
        return x

    def to_tangent(self, x, v) -> np.ndarray:
        """Minkowski-orthogonal projection of ambient ``v`` onto the tangent space at ``x``."""
        v = np.asarray(v, dtype=float)
        return v + self.c * minkowski(x, v)[..., None] * np.asarray(x, dtype=float)

    def check_point(self, x, tol: float = SHEET_TOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n + 1:
            raise ConfigurationError(f"expected {self.n + 1} ambient coordinates, got {x.shape[-1]}")
        err = np.abs(self.c * minkowski(x, x) + 1.0)
        if not np.all(np.isfinite(x)) or np.any(err > tol * np.maximum(1.0, self.c * x[..., 0] ** 2)):
            raise NumericalDegeneracyError("point is not on the hyperboloid sheet")
        if np.any(x[..., 0] <= 0):
            raise NumericalDegeneracyError("point lies on the lower sheet")
        return x

    def check_tangent(self, x, v, tol: float = SHEET_TOL) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        scale = np.maximum(1.0, np.abs(np.asarray(x)[..., 0]) * np.max(np.abs(v), axis=-1))
        if np.any(np.abs(minkowski(x, v)) > tol * scale):
            raise NumericalDegeneracyError("vector is not tangent at its base point")
        return v

    def norm(self, v) -> np.ndarray:
        """Riemannian length of tangent vectors."""
        return np.sqrt(np.maximum(minkowski(v, v), 0.0))

    def point_at(self, theta, direction) -> np.ndarray:
        """Point at geodesic distance ``theta`` from the pole along a unit direction of R^n."""
        theta = np.asarray(theta, dtype=float)
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u, axis=-1, keepdims=True)
        k = self.sqrt_c
        x = np.empty(np.broadcast_shapes(theta.shape + (1,), u.shape[:-1] + (1,))[:-1] + (self.n + 1,))
        x[..., 0] = np.cosh(k * theta) / k
        x[..., 1:] = (np.sinh(k * theta) / k)[..., None] * u
        return x

    # --- metric operations ------------------------------------------------

    def distance(self, x, y) -> np.ndarray:
        """Geodesic distance ``arccosh(-c <x, y>_L) / sqrt(c)``.

        Evaluated through the Minkowski chord ``|x - y|_L`` so that nearby
        points keep full relative precision.  Raises
        :class:`NumericalDegeneracyError` when ``-c <x, y>_L`` falls below 1 by
        more than the clamping tolerance.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        q = -self.c * minkowski(x, y)
        if np.any(q < 1.0 - ACOSH_TOL) or not np.all(np.isfinite(q)):
            raise NumericalDegeneracyError(
                f"arccosh argument {np.min(q):.17g} below 1 beyond tolerance")
        diff = x - y
        chord2 = np.maximum(minkowski(diff, diff), 0.0)
        return 2.0 / self.sqrt_c * np.arcsinh(0.5 * self.sqrt_c * np.sqrt(chord2))

    def exp(self, x, v) -> np.ndarray:
        """Exponential map ``cosh(sqrt(c)|v|) x + sinh(sqrt(c)|v|) v / (sqrt(c)|v|)``."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        r = self.sqrt_c * self.norm(v)
        y = np.cosh(r)[..., None] * x + sinhc(r)[..., None] * v
        return self.project(y)

    def log(self, x, y) -> np.ndarray:
        """Logarithm map: the tangent vector at ``x`` pointing to ``y`` with length d(x, y)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = self.distance(x, y)
        diff = y - x
        chord2 = np.maximum(minkowski(diff, diff), 0.0)
        # y - cosh(sqrt(c) d) x, written so nearby points do not cancel
        u = diff - (0.5 * self.c * chord2)[..., None] * x
        u = self.to_tangent(x, u)
        return u / sinhc(self.sqrt_c * d)[..., None]

    def rauch_gap(self, x, y, pole=None) -> np.ndarray:
        """``d(x, y) - |log_p x - log_p y|``; nonnegative on any Cartan-Hadamard manifold."""
        p = self.pole if pole is None else np.asarray(pole, dtype=float)
        diff = self.log(p, x) - self.log(p, y)
        return self.distance(x, y) - self.norm(diff)

    def polar_distance(self, theta1, theta2, gamma) -> np.ndarray:
        """Distance between points at radii theta1, theta2 from the pole, at angle gamma."""
        return polar_distance_profile(self.c, theta1, theta2, gamma)

    # --- volume calculus ----------------------------------------------

    def jacobian_exp(self, r):
        """Jacobian of exp at the pole at radius r: ``(sinh(sqrt(c) r) / (sqrt(c) r))**(n-1)``."""
        return sinhc(self.sqrt_c * np.asarray(r, dtype=float)) ** (self.n - 1)

    def log_jacobian_exp(self, r):
        return (self.n - 1) * log_sinhc(self.sqrt_c * np.asarray(r, dtype=float))

    def sphere_area(self, theta):
        return area_profile(self.n, self.c, theta)

    def ball_volume(self, R: float) -> float:
        return volume_profile(self.n, self.c, float(R))

    def cell_volumes(self, edges) -> np.ndarray:
        return cell_volumes(self.n, self.c, edges)

    def comparison_bands(self, r: float) -> tuple[float, float, float, float]:
        """Jacobian and ball-volume bounds ``(jac_lo, jac_hi, vol_lo, vol_hi)`` at radius r.

        The lower bounds use the upper curvature bound -c_M, the upper bounds use
        -c_m; c_M = 0 falls back to the Euclidean values.
        """
        if self.band is None:
            raise ConfigurationError("comparison_bands needs a curvature band (c_M, c_m)")
        if r < 0:
            raise ConfigurationError("radius must be nonnegative")
        c_M, c_m = self.band
        jac_lo = float(sinhc(math.sqrt(c_M) * r) ** (self.n - 1))
        jac_hi = float(sinhc(math.sqrt(c_m) * r) ** (self.n - 1))
        return (jac_lo, jac_hi,
                volume_profile(self.n, c_M, float(r)),
                volume_profile(self.n, c_m, float(r)))

    # --- isometries, means, sampling ---------------------------------

    def boost(self, x) -> np.ndarray:
        """Lorentz boost (an isometry) sending the pole to the point ``x``."""
        y = self.sqrt_c * np.asarray(x, dtype=float)
        y0, yb = y[0], y[1:]
        L = np.empty((self.n + 1, self.n + 1))
        L[0, 0] = y0
        L[0, 1:] = yb
        L[1:, 0] = yb
        L[1:, 1:] = np.eye(self.n) + np.outer(yb, yb) / (1.0 + y0)
        return L

    def boost_to_pole(self, x) -> np.ndarray:
        """Inverse boost: sends ``x`` to the pole."""
        y = np.asarray(x, dtype=float).copy()
        y[1:] = -y[1:]
        return self.boost(y)

    def random_isometry(self, rng: np.random.Generator, spread: float = 2.0) -> np.ndarray:
        """A boost to a random point composed with a random rotation about the pole."""
        q, r = np.linalg.qr(rng.standard_normal((self.n, self.n)))
        q = q * np.sign(np.diag(r))
        rot = np.eye(self.n + 1)
        rot[1:, 1:] = q
        target = self.point_at(spread * rng.random(), rng.standard_normal(self.n))
        return self.boost(target) @ rot

    def karcher_mean(self, points, weights=None, tol: float = 1e-9,
                     max_iter: int = 10_000) -> np.ndarray:
        """Riemannian centre of mass by Newton steps on ``F(x) = (1/2) sum w_i d(x, p_i)^2``.

        The Hessian of ``d^2 / 2`` is known in closed form (1 along the geodesic,
        ``k d coth(k d)`` across it), so each step solves an ``n x n`` system in
        the boost frame at ``x``.  A step is halved whenever the gradient norm
        fails to decrease.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] == 0:
            raise ConfigurationError("karcher_mean needs at least one point")
        if weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(weights, dtype=float)
            if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-9):
                raise ConfigurationError("weights must be nonnegative and sum to 1")
        # ambient weighted average projected radially onto the sheet
        m = w @ pts
        x = m / math.sqrt(-self.c * minkowski(m, m))

        def frame_gradient(x):
            E = self.boost(x)[:, 1:]
            E[0, :] = -E[0, :]  # Minkowski pairing with the frame vectors
            a = self.log(x, pts) @ E
            return a, float(np.linalg.norm(w @ a))

        a, gnorm = frame_gradient(x)
        for _ in range(max_iter):
            if gnorm < tol:
                return x
            d = np.linalg.norm(a, axis=1)
            kd = self.sqrt_c * d
            f = np.where(kd < 1e-8, 1.0, kd / np.tanh(np.where(kd < 1e-8, 1.0, kd)))
            u = a / np.where(d > 0, d, 1.0)[:, None]
            H = (np.sum(w * f) * np.eye(self.n)
                 + np.einsum("i,ij,ik->jk", w * (1.0 - f), u, u))
            z = np.linalg.solve(H, w @ a)
            step = 1.0
            while True:
                trial = self.project(self.exp(x, self.frame_apply(x, step * z)))
                a_new, g_new = frame_gradient(trial)
                if g_new < gnorm or step < 1e-3:
                    break
                step *= 0.5
            if g_new >= gnorm:
                # no further progress is possible at this precision
                if gnorm < 1e3 * tol:
                    return x
                break
            x, a, gnorm = trial, a_new, g_new
        raise IterationLimitError(f"Karcher mean did not converge (gradient norm {gnorm:.3g})")

    def gaussian_tangent(self, x, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        """Isotropic Gaussian tangent vectors at ``x`` with per-axis standard deviation ``scale``.

        The orthonormal frame at ``x`` is the image of the standard frame at the
        pole under the boost :meth:`boost`, so the draw is isotropic for every
        base point.  Stacks of base points get independent draws.
        """
        x = np.asarray(x, dtype=float)
        z = scale * rng.standard_normal(x.shape[:-1] + (self.n,))
        return self.frame_apply(x, z)

    def frame_apply(self, x, z) -> np.ndarray:
        """Map frame coordinates ``z`` (shape ``(..., n)``) to tangent vectors at ``x``."""
        y = self.sqrt_c * np.asarray(x, dtype=float)
        y0, yb = y[..., 0], y[..., 1:]
        s = np.sum(yb * z, axis=-1)
        v = np.empty(np.broadcast_shapes(y.shape[:-1], z.shape[:-1]) + (self.n + 1,))
        v[..., 0] = s
        v[..., 1:] = z + (s / (1.0 + y0))[..., None] * yb
        return v

    def random_points(self, rng: np.random.Generator, size: int, max_radius: float) -> np.ndarray:
        """Points at radii uniform in [0, max_radius] with isotropic directions (test helper)."""
        theta = max_radius * rng.random(size)
        return self.point_at(theta, rng.standard_normal((size, self.n)))


def gl_nodes(order: int, lo: float = 0.0, hi: float = 1.0):
    """Gauss-Legendre nodes and weights on [lo, hi]."""
    x, w = special.roots_legendre(order)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w
