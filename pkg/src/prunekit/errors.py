"""Exception types shared across the toolkit."""


class PrunekitError(Exception):
    """Base class for all toolkit errors."""


class IngestError(PrunekitError):
    """A corpus record could not be ingested; names the offending line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class FormatError(PrunekitError):
    """A file does not conform to its declared on-disk format."""


class AlignmentError(PrunekitError):
    """Row-aligned inputs disagree on document count."""


class DataError(PrunekitError):
    """Input data violates an invariant (e.g. a zero-norm embedding row)."""


class CalibrationError(PrunekitError):
    """Synthetic corpus calibration failed to reach its target."""


class ConfigError(PrunekitError):
    """A pipeline configuration is invalid."""
