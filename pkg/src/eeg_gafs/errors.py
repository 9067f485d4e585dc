"""Exception hierarchy shared by every stage of the pipeline."""

from typing import List, Optional


class EegGafsError(Exception):
    """Base exception for all pipeline errors."""
    pass


class ConfigurationError(EegGafsError):
    """Invalid parameters or settings (exit code 2)."""
    pass


class ConfigValidationError(ConfigurationError):
    """Experiment config violates the schema; carries every violation."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__(
            f"{len(self.violations)} config violation(s): " + "; ".join(self.violations)
        )


class NyquistError(ConfigurationError):
    """A frequency at or above half the sampling rate."""
    pass


class DataError(EegGafsError):
    """Input data cannot be used (exit code 3)."""
    pass


class InvalidRecordingError(DataError):
    """Recording or instance-set invariant violated."""
    pass


class EdfParseError(DataError):
    """Malformed EDF header."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class EdfIntegrityError(DataError):
    """EDF header and data records disagree."""
    pass


class CsvParseError(DataError):
    """Malformed CSV recording."""

    def __init__(self, message: str, row: Optional[int] = None, col: Optional[int] = None):
        self.row = row
        self.col = col
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", col {col})" if col is not None else ")")
        super().__init__(message + where)


class InputError(DataError):
    """Signal too short or otherwise unusable for an operation."""
    pass


class DegenerateError(DataError):
    """Zero-variance input where a nonzero variance is required."""

    def __init__(self, message: str, channel: Optional[str] = None):
        self.channel = channel
        super().__init__(message)


class FeatureError(DataError):
    """Feature computation failed for a matrix cell."""

    def __init__(self, message: str, row: int, electrode: str, feature: str):
        self.row = row
        self.electrode = electrode
        self.feature = feature
        super().__init__(f"row {row}, electrode {electrode}, feature {feature}: {message}")


class MissingArtifactError(DataError):
    """A run directory lacks an artifact needed for reporting."""
    pass


class EvaluationError(EegGafsError):
    """Wrapped model failed during the GA (exit code 4)."""

    def __init__(self, message: str, generation: int, chromosome: int):
        self.generation = generation
        self.chromosome = chromosome
        super().__init__(f"generation {generation}, chromosome {chromosome}: {message}")


class StageError(EegGafsError):
    """An experiment stage aborted; the cause is chained."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
