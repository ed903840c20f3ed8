"""Exception types shared across the library."""


class CloudRegError(Exception):
    """Base class for all library errors."""


class ParseError(CloudRegError):
    """Malformed cloud file. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormat(CloudRegError):
    """File encoding or format variant the reader deliberately rejects."""


class InvalidParameter(CloudRegError):
    """Parameter outside its documented domain."""


class DegenerateInput(CloudRegError):
    """Input too small or rank-deficient for the requested operation."""


class DegenerateSample(CloudRegError):
    """Minimal sample (collinear or coincident) cannot constrain a transform."""


class InsufficientData(CloudRegError):
    """Fewer correspondences than the estimator's minimal sample."""


class NumericalFailure(CloudRegError):
    """Non-finite value encountered during optimization."""


class NoOverlap(CloudRegError):
    """No point pairings within the correspondence distance at the initial guess."""


class NoFeatures(CloudRegError):
    """Feature extraction produced an empty set."""


class KindMismatch(CloudRegError):
    """Descriptor kinds of two feature sets differ."""


class EmptyInput(CloudRegError):
    """Operation requires a non-empty input set."""


class InvalidSegment(CloudRegError):
    """Segment too small for descriptor computation."""


class EmptyCrop(CloudRegError):
    """Cropping removed every point."""


class ConfigError(CloudRegError):
    """Malformed benchmark or realization configuration."""


class StageError(CloudRegError):
    """Pipeline stage failure, wrapping the underlying error with its stage label."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}': {cause}")
