"""Exception hierarchy shared by all bmlab modules."""


class BMLabError(Exception):
    """Base class for every error raised by bmlab."""


class DomainError(BMLabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InvalidInputError(BMLabError, ValueError):
    """Input violates a documented precondition."""


class EmptyConditioningError(InvalidInputError):
    """Conditioning on a set of zero measure."""


class UnsupportedTargetError(InvalidInputError):
    """Transport target whose density vanishes inside its support."""


class UnsupportedError(BMLabError, NotImplementedError):
    """Operation not available for this family or dimension."""


class DegenerateError(BMLabError, ValueError):
    """Flat body, singular covariance or empty interior."""


class InsufficientSamplesError(BMLabError, ValueError):
    pass


class ConvergenceError(BMLabError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigurationError(BMLabError, ValueError):
    """Malformed scenario or body specification."""


class RecipeError(BMLabError, ValueError):
    """A pair-construction recipe missed its target."""
