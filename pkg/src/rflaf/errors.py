"""Exception hierarchy shared across the package."""


class RflafError(Exception):
    """Base class for all package errors."""


class InvalidArgument(RflafError, ValueError):
    pass


class IllPosedError(RflafError, ValueError):
    pass


class NumericError(RflafError, ArithmeticError):
    pass


class DivergenceError(NumericError):
    pass


class DegeneratePoolError(RflafError):
    pass


class PipelineError(RflafError):
    pass


class ConfigError(RflafError, ValueError):
    pass


class DataError(RflafError, ValueError):
    pass
