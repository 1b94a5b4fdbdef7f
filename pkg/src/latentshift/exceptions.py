"""Exception types shared across the package."""


class LatentShiftError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(LatentShiftError, ValueError):
    """Tensor arguments have inconsistent or unexpected shapes."""


class ConfigError(LatentShiftError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class DegenerateInputError(LatentShiftError, ValueError):
    """Input is mathematically degenerate for the requested operation
    (e.g. a zero vector passed to a cosine similarity)."""


class CapabilityError(LatentShiftError, RuntimeError):
    """The wrapped model does not support the requested operation."""


class CheckpointError(LatentShiftError, RuntimeError):
    """A checkpoint file could not be read or parsed."""


class IncompatibleCheckpointError(CheckpointError):
    """A checkpoint was read successfully but does not match the
    configuration it is being combined with."""


class NonFiniteLossError(LatentShiftError, RuntimeError):
    """Training produced a non-finite loss; the offending batch was dumped
    for inspection."""
