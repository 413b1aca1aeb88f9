"""Free energies of attractive aggregation-diffusion on hyperbolic space."""

__version__ = "0.1.0"
