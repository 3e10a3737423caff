"""Exception types shared across the forecasting pipeline."""


class ForecastError(Exception):
    """Base class for all tbmcast errors."""


class SchemaError(ForecastError):
    """Input data does not match the configured feature schema."""


class ParseError(ForecastError):
    """A cell could not be parsed as a finite real number."""


class EmptyInputError(ParseError):
    """Input file contains no data rows."""


class DimensionError(ForecastError):
    """Array shapes do not match the declared contract."""


class InsufficientDataError(ForecastError):
    """Series too short for the requested window width."""


class NumericError(ForecastError):
    """A non-finite value appeared where finite numbers are required."""


class ValidationError(ForecastError):
    """Configuration or argument values are inconsistent."""


class UndefinedMetricError(ForecastError):
    """Metric has no defined value for the given inputs."""


class TrainingDiverged(ForecastError):
    """Training loss or gradients became non-finite."""

    def __init__(self, update_index: int, message: str):
        super().__init__(f"update {update_index}: {message}")
        self.update_index = update_index
