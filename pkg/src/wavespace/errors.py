"""Shared exception types."""


class WavespaceError(Exception):
    """Base class for errors raised by this package."""


class RangeError(WavespaceError, ValueError):
    """A value is outside its documented range."""


class ShapeError(WavespaceError, ValueError):
    """Array shapes are incompatible for an operation."""

    def __init__(self, message, *shapes):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)


class DegenerateInputError(WavespaceError, ValueError):
    """Input collapses to zero and cannot be normalized."""


class ConfigError(WavespaceError, ValueError):
    """Inconsistent or unknown configuration value."""


class IngestError(WavespaceError, ValueError):
    """A source file cannot be turned into dataset entries."""


class CheckpointError(WavespaceError):
    """Base class for checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    """File is not a checkpoint (bad magic or malformed header)."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported."""


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint ends before all declared tensors were read."""


class CheckpointNameError(CheckpointError):
    """Stored tensor names do not match the model being loaded."""


class ResumeError(WavespaceError):
    """Checkpoint is incompatible with the requested training run."""


class TrainingDivergedError(WavespaceError):
    """Loss became non-finite; diagnostic snapshot written."""

    def __init__(self, message, snapshot_path=None):
        super().__init__(message)
        self.snapshot_path = snapshot_path
