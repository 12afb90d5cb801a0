"""Exception hierarchy shared by all submodules."""


class DualCycleGANError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(DualCycleGANError, ValueError):
    """An argument is outside its valid range."""


class LengthError(DualCycleGANError, ValueError):
    """A signal has an unusable length (too short, not divisible, ...)."""


class UnsupportedRatioError(DualCycleGANError, ValueError):
    """Resampling between rates whose ratio is not 3:1 or 1:3."""


class SilentInputError(DualCycleGANError, ValueError):
    """Loudness normalization of an all-zero signal."""


class MismatchError(DualCycleGANError, ValueError):
    """Two signals that must be compared differ in rate or length."""


class DomainError(DualCycleGANError, ValueError):
    """A signal was passed where a different rate domain was expected."""


class DegenerateWeightError(DualCycleGANError, ValueError):
    """A weight tensor has an output channel with zero norm."""


class CorruptModelError(DualCycleGANError, RuntimeError):
    """Model parameters contain non-finite values."""


class ConfigurationError(DualCycleGANError, ValueError):
    """Invalid configuration, manifest contents or split policy."""


class ManifestParseError(ConfigurationError):
    """A manifest file could not be parsed; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TrainingDivergenceError(DualCycleGANError, RuntimeError):
    """Non-finite loss or gradient during training."""

    def __init__(self, message: str, checkpoint: str | None = None):
        self.checkpoint = checkpoint
        if checkpoint is not None:
            message = f"{message} (last good checkpoint: {checkpoint})"
        super().__init__(message)


class IntegrityError(DualCycleGANError, IOError):
    """A checkpoint archive is truncated, corrupt, or fails its digest."""


class UnsupportedVersionError(IntegrityError):
    """A checkpoint archive was written by an incompatible format version."""
