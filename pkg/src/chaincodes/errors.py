"""Exception hierarchy shared by all modules."""


class ChainingError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(ChainingError, ValueError):
    """Inputs have the wrong shape or break a structural contract."""


class ParameterError(ChainingError, ValueError):
    pass


class DegenerateSpaceError(ChainingError, ValueError):
    pass


class InfiniteLengthError(ChainingError, ValueError):
    """A zero-mass cell would need an infinitely long codeword."""


class DivergenceError(ChainingError, ArithmeticError):
    """A functional integral or series is infinite."""


class AdmissibilityError(ChainingError, ValueError):
    pass


class ModelError(ChainingError):
    """Covariance matrix is not usable (not PSD, factorization failed)."""
