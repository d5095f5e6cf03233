"""Exception hierarchy shared across the package."""


class ForecastError(Exception):
    """Base class for every error raised by cyberforecast."""


class DataError(ForecastError):
    """Input data is malformed or insufficient. Maps to CLI exit code 3."""


class ModelError(ForecastError):
    """A model could not be fitted or evaluated. Maps to CLI exit code 4."""


class LengthError(DataError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class OrderError(DataError):
    pass


class CoverageError(DataError):
    pass


class OverlapError(DataError):
    pass


class EmptyError(DataError):
    pass


class TooShortError(DataError):
    pass


class DegenerateError(ForecastError, ValueError):
    """Statistic undefined for the input (constant vector, zero denominator).

    ``partial`` carries whatever could still be computed, if anything.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class MixedTypeError(ForecastError, ValueError):
    pass


class DimensionError(ForecastError, ValueError):
    pass


class NonFiniteError(ModelError, FloatingPointError):
    pass


class AllFailedError(ModelError):
    pass


class SpecError(ForecastError, ValueError):
    pass


class ConfigError(ForecastError):
    """Invalid run configuration. Maps to CLI exit code 2."""
