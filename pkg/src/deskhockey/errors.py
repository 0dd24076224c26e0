"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A config file or run configuration is missing, malformed, or unsupported."""


class ReplayVerificationError(RuntimeError):
    """A replay log did not reproduce bit-identically."""


class CheckpointError(ValueError):
    """A policy checkpoint file is malformed or incompatible."""
