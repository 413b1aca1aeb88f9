"""Exception hierarchy shared by all modules."""


class HypfreeError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(HypfreeError, ValueError):
    """Invalid parameters, malformed config files, inconsistent curvature bands."""


class DomainError(HypfreeError, ValueError):
    """A scalar argument outside the domain of the requested operation."""


class NumericalDegeneracyError(HypfreeError, ArithmeticError):
    """Floating point state that can no longer be trusted (off-sheet points, NaN)."""


class IterationLimitError(HypfreeError, RuntimeError):
    """An iterative solver ran out of iterations before meeting its tolerance."""


class ClassificationInputError(HypfreeError, ValueError):
    """A potential lacks the asymptotic descriptors needed to classify it."""


class InfeasibleError(HypfreeError, ValueError):
    """No finite constant exists for the requested bound."""


class DegenerateInputError(HypfreeError, ValueError):
    """Input data that cannot be normalized (all-zero tables, empty clouds)."""


class BracketError(HypfreeError, ValueError):
    """Both ends of a bisection bracket give the same verdict."""
