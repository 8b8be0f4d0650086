"""Exception hierarchy shared across the package."""


class SpatialRentError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SpatialRentError, ValueError):
    pass


class CapacityError(SpatialRentError, ValueError):
    """A size limit was exceeded (k too large, dense cap, h > n, ...)."""


class SchemaError(SpatialRentError, ValueError):
    pass


class ParseError(SpatialRentError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SingularDesignError(SpatialRentError, ValueError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)


class NumericalError(SpatialRentError, ArithmeticError):
    pass


class InvalidPriorError(InvalidInputError):
    pass


class TrainingError(SpatialRentError, RuntimeError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")


class CoverageError(SpatialRentError, ValueError):
    pass


class ConfigError(SpatialRentError, ValueError):
    pass
