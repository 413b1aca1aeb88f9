"""Scan the free energy of uniform balls for three interaction potentials on the hyperbolic plane."""

import numpy as np

from hypfree.energy import divergence_scan
from hypfree.geometry import Space
from hypfree.potentials import linear, logarithmic

space = Space(2, 1.0)
radii = np.geomspace(1e-3, 30.0, 16)

for name, h in [("5 log(theta)", logarithmic(5.0)), ("0.5 theta", linear(0.5)), ("3 theta", linear(3.0))]:
    scan = divergence_scan(space, h, radii)
    print(f"h = {name:12s} verdict: {scan.verdict}")
    for R, E in zip(scan.radii[::3], scan.total[::3]):
        print(f"    R = {R:9.4f}   E = {E: .5f}")
