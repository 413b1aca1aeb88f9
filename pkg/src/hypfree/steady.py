"""Radial steady states by damped Picard iteration on ``log rho + W * rho = const``.

Each iterate is mixed with the Gibbs density ``Z^-1 exp(-(W * rho))``
computed on the same grid, so a fixed point of the map is a critical point
of the free energy among radial densities centred at the pole.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .density import RadialDensity, normalized, write_csv
from .energy import convolve_potential
from .errors import ConfigurationError
from .geometry import Space
from .potentials import Potential

CONVERGED, MASS_ESCAPE, COLLAPSE, ITERATION_LIMIT = "Converged", "MassEscape", "Collapse", "IterationLimit"

TAIL_FRACTION = 0.05  # outer share of the grid watched by the tail guard
TAIL_MASS = 1e-4
ESCAPE_TRIPS = 10
MAX_EXPANSIONS = 2  # theta_max may double twice (4x)
COLLAPSE_MASS = 0.99
MIN_DAMPING = 1e-3
REFINE_SPLIT = 8  # inner-cell subdivision for the grid-scale concentration test


@dataclass
class SteadyResult:
    outcome: str
    density: RadialDensity
    energy: float
    residual: float
    iterations: int
    damping: float
    energies: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.outcome == CONVERGED


def initial_guess(space: Space, cells: int = 128, theta_max: float | None = None,
                  width: float = 1.0) -> RadialDensity:
    """A Gaussian-shaped start on a uniform grid (default theta_max = 12 / sqrt(c))."""
    top = 12.0 / space.sqrt_c if theta_max is None else float(theta_max)
    edges = np.linspace(0.0, top, int(cells) + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    return normalized(space, edges, np.exp(-0.5 * (mid / width) ** 2), "initial")


def _free_energy(rho: RadialDensity, W: np.ndarray) -> float:
    m = rho.masses
    pos = rho.values > 0
    ent = float(np.sum(m[pos] * np.log(rho.values[pos])))
    return ent + 0.5 * float(np.sum(W * m))


def gibbs_map(rho: RadialDensity, W: np.ndarray) -> np.ndarray:
    """Normalized cell values of exp(-W), shifted so the exponent never overflows."""
    g = np.exp(-(W - np.min(W)))
    return g / float(np.sum(g * rho.cell_volumes))


def euler_lagrange_residual(rho: RadialDensity, h: Potential, W: np.ndarray | None = None, **quad) -> float:
    """sup over cells with rho > 1e-12 of |log rho + W*rho - m|, m the rho-weighted mean."""
    if W is None:
        W = convolve_potential(rho, h, **quad)
    live = rho.values > 1e-12
    if not np.any(live):
        return math.inf
    f = np.log(rho.values[live]) + W[live]
    w = rho.masses[live]
    m = float(np.sum(w * f) / np.sum(w))
    return float(np.max(np.abs(f - m)))


def _extend(rho: RadialDensity) -> RadialDensity:
    """Double theta_max keeping the mean cell width; new cells start empty."""
    e = rho.edges
    K = e.size - 1
    extra = np.linspace(e[-1], 2.0 * e[-1], K + 1)[1:]
    values = np.concatenate([rho.values, np.zeros(K)])
    return RadialDensity(rho.space, np.concatenate([e, extra]), values, 1.0, rho.label)


def median_radius(rho: RadialDensity) -> float:
    """Radius enclosing half the mass (linear within the crossing cell)."""
    cm = np.concatenate([[0.0], np.cumsum(rho.masses)]) / rho.mass
    i = int(np.searchsorted(cm, 0.5) - 1)
    i = min(max(i, 0), rho.values.size - 1)
    frac = (0.5 - cm[i]) / max(cm[i + 1] - cm[i], 1e-300)
    return float(rho.edges[i] + frac * (rho.edges[i + 1] - rho.edges[i]))


def _refine_inner(rho: RadialDensity, split: int = REFINE_SPLIT) -> RadialDensity:
    """Split the two innermost cells into ``split`` pieces each, keeping the values."""
    e = rho.edges
    inner = np.concatenate([np.linspace(e[0], e[1], split + 1)[:-1], np.linspace(e[1], e[2], split + 1)[:-1]])
    values = np.concatenate([np.full(split, rho.values[0]), np.full(split, rho.values[1]), rho.values[2:]])
    return normalized(rho.space, np.concatenate([inner, e[2:]]), values, rho.label)


def fixed_point(rho0: RadialDensity, h: Potential, damping: float = 0.3, tol: float = 1e-8,
                max_iter: int = 5000, refine_check: bool = True, **quad) -> SteadyResult:
    """Damped Picard iteration ``rho <- (1 - lam) rho + lam Z^-1 exp(-(W * rho))``.

    Outcomes: Converged (sup-norm step < tol and residual < 10 tol), MassEscape
    (tail guard tripped on ``ESCAPE_TRIPS`` consecutive iterates after the grid
    has been widened to 4x), Collapse (over 99% of the mass in the two
    innermost cells while the entropy grows), or IterationLimit.

    For singular potentials a converged state is re-solved with the inner
    cells split ``REFINE_SPLIT`` ways.  A genuine steady state keeps its
    median radius; one that shrinks by half or more with the grid is
    concentrating at the grid scale and is reported as Collapse.
    """
    if not 0 < damping <= 1:
        raise ConfigurationError("damping must lie in (0, 1]")
    if not tol > 0 or max_iter < 1:
        raise ConfigurationError("tol and max_iter must be positive")
    if not h.integrable(rho0.space.n):
        return SteadyResult(COLLAPSE, rho0, -math.inf, math.inf, 0, damping,
                            notes=["potential not locally integrable: energy unbounded below"])
    rho = normalized(rho0.space, rho0.edges, rho0.values, "steady")
    lam = damping
    trips = expansions = 0
    energies, notes = [], []
    prev_update = None
    prev_entropy = None
    W = convolve_potential(rho, h, **quad)
    for it in range(1, max_iter + 1):
        update = gibbs_map(rho, W) - rho.values
        if prev_update is not None:
            both = (update != 0) & (prev_update != 0)
            if np.any(both) and np.mean(np.sign(update[both]) != np.sign(prev_update[both])) > 0.5 \
                    and lam > MIN_DAMPING:
                lam = max(0.5 * lam, MIN_DAMPING)
                notes.append(f"damping halved to {lam:g} at iteration {it}")
        prev_update = update
        new = rho.with_values(rho.values + lam * update, "steady")
        step = float(np.max(np.abs(new.values - rho.values)))
        rho = new
        W = convolve_potential(rho, h, **quad)
        energy = _free_energy(rho, W)
        energies.append(energy)

        tail = float(np.sum(rho.masses[rho.centers > (1.0 - TAIL_FRACTION) * rho.theta_max]))
        if tail > TAIL_MASS:
            if expansions < MAX_EXPANSIONS:
                expansions += 1
                rho = _extend(rho)
                W = convolve_potential(rho, h, **quad)
                prev_update = None
                notes.append(f"grid widened to theta_max={rho.theta_max:g} at iteration {it}")
                continue
            trips += 1
            if trips >= ESCAPE_TRIPS:
                return SteadyResult(MASS_ESCAPE, rho, energy, euler_lagrange_residual(rho, h, W), it,
                                    lam, energies, notes)
        else:
            trips = 0

        m = rho.masses
        pos = rho.values > 0
        ent = float(np.sum(m[pos] * np.log(rho.values[pos])))
        if np.sum(m[:2]) > COLLAPSE_MASS and prev_entropy is not None and ent >= prev_entropy:
            return SteadyResult(COLLAPSE, rho, energy, euler_lagrange_residual(rho, h, W), it,
                                lam, energies, notes)
        prev_entropy = ent

        if step < tol:
            res = euler_lagrange_residual(rho, h, W)
            if res < 10.0 * tol:
                _check_monotone(energies, notes)
                result = SteadyResult(CONVERGED, rho, energy, res, it, lam, energies, notes)
                if refine_check and h.singular:
                    return _grid_scale_test(result, h, damping, tol, max_iter, quad)
                return result
    res = euler_lagrange_residual(rho, h, W)
    notes.append(f"last step residual {res:.3g}")
    return SteadyResult(ITERATION_LIMIT, rho, energies[-1], res, max_iter, lam, energies, notes)


def _grid_scale_test(coarse: SteadyResult, h, damping, tol, max_iter, quad) -> SteadyResult:
    fine = fixed_point(_refine_inner(coarse.density), h, damping, tol, max_iter, refine_check=False, **quad)
    r0 = median_radius(coarse.density)
    if fine.outcome == COLLAPSE or (fine.converged and median_radius(fine.density) < 0.5 * r0):
        note = (f"median radius {r0:.4g} -> {median_radius(fine.density):.4g} "
                f"when the inner cells are split {REFINE_SPLIT} ways")
        return SteadyResult(COLLAPSE, fine.density, fine.energy, fine.residual,
                            coarse.iterations + fine.iterations, fine.damping, coarse.energies + fine.energies,
                            coarse.notes + fine.notes + [note])
    coarse.notes.append(f"inner refinement kept the median radius ({r0:.4g} -> "
                        f"{median_radius(fine.density):.4g})")
    return coarse


def _check_monotone(energies, notes, skip: int = 10) -> None:
    e = np.asarray(energies[skip:])
    if e.size < 2:
        return
    ups = int(np.count_nonzero(np.diff(e) > 1e-12 * np.maximum(1.0, np.abs(e[:-1]))))
    if ups > 0.05 * (e.size - 1):
        notes.append(f"energy increased on {ups} of {e.size - 1} iterates")


def write_result(result: SteadyResult, h: Potential, path) -> None:
    """Profile CSV at ``path`` plus a JSON sidecar ``<path>.meta.json``."""
    write_csv(result.density, path)
    sp = result.density.space
    meta = {
        "outcome": result.outcome,
        "potential": h.label,
        "n": sp.n,
        "c": repr(sp.c),
        "residual": repr(float(result.residual)),
        "energy": repr(float(result.energy)),
        "iterations": result.iterations,
        "damping": repr(float(result.damping)),
    }
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
