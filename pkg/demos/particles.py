"""Run the stochastic particle system for a weak and a strong linear attraction."""

import warnings

from hypfree.geometry import Space
from hypfree.particles import SimConfig, run
from hypfree.potentials import linear

space = Space(2, 1.0)
config = SimConfig(N=200, steps=2000, seed=1)

with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    for a2 in (0.5, 3.0):
        rep = run(config, linear(a2), space)
        print(f"h = {a2} theta: {rep.verdict:12s} t = {rep.times[-1]:6.2f}  "
              f"mean distance {rep.mean_distance[0]:.3f} -> {rep.mean_distance[-1]:.3f}")
