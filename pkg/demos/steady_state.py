"""Solve for the radial steady state under h = 3 theta and compare it with the best trial ball."""

import numpy as np

from hypfree.density import uniform_ball
from hypfree.energy import total_energy
from hypfree.geometry import Space
from hypfree.potentials import linear
from hypfree.steady import fixed_point, initial_guess, median_radius, write_result

space, h = Space(2, 1.0), linear(3.0)
result = fixed_point(initial_guess(space), h)
print(f"outcome {result.outcome} after {result.iterations} iterations, residual {result.residual:.2e}")
print(f"free energy {result.energy:.6f}, median radius {median_radius(result.density):.4f}")

balls = [total_energy(uniform_ball(space, float(R)), h).total for R in np.geomspace(0.05, 5.0, 30)]
print(f"lowest uniform-ball energy {min(balls):.6f}")

write_result(result, h, "steady_profile.csv")
print("profile written to steady_profile.csv")
