"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PhononLabError(Exception):
    exit_code = 1


class ConfigurationError(PhononLabError, ValueError):
    exit_code = 2


class FieldMissingError(ConfigurationError):
    pass


class InvalidParameterError(ConfigurationError):
    pass


class InsufficientDataError(ConfigurationError):
    pass


class DegenerateGeometryError(ConfigurationError):
    pass


class InvalidStateError(ConfigurationError):
    pass


class InvalidDistributionError(ConfigurationError):
    pass


class ConvergenceError(PhononLabError, RuntimeError):
    exit_code = 3

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history or [])


class IntegrationError(ConvergenceError):
    pass


class CapacityError(PhononLabError, MemoryError):
    exit_code = 4

    def __init__(self, message, dimension=None):
        super().__init__(message)
        self.dimension = dimension
