"""Exception hierarchy shared across the package."""


class ArtsplatError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ArtsplatError, ValueError):
    pass


class DimensionError(ArtsplatError, ValueError):
    pass


class ConfigurationError(ArtsplatError, ValueError):
    pass


class ModelError(ArtsplatError, ValueError):
    pass


class JointTypeError(ArtsplatError, TypeError):
    pass


class DegenerateBlendError(ArtsplatError, ArithmeticError):
    pass


class DegenerateGeometryError(ArtsplatError, ArithmeticError):
    pass


class InsufficientDepthError(ArtsplatError, ValueError):
    pass


class NoDepthError(ArtsplatError, ValueError):
    pass


class VisibilityError(ArtsplatError, ValueError):
    pass


class DegenerateGraspError(ArtsplatError, ValueError):
    pass


class ParameterError(ArtsplatError, ValueError):
    pass


class PreconditionError(ArtsplatError, ValueError):
    pass


class DivergenceError(ArtsplatError, ArithmeticError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class PartError(ArtsplatError):
    """Wraps a per-part failure during joint initialization."""

    def __init__(self, part_index, cause):
        super().__init__(f"part {part_index}: {cause}")
        self.part_index = part_index
        self.cause = cause
