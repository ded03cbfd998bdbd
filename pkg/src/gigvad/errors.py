"""Exception types shared across the package."""


class GigVadError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(GigVadError):
    """Tensor extents do not satisfy an operation's contract."""


class ConfigError(GigVadError):
    """Invalid configuration value, key, or file."""


class NumericError(GigVadError):
    """A value that must be finite is NaN or infinite."""


class MetricError(GigVadError):
    """A metric is undefined for the given inputs (e.g. single-class labels)."""


class CheckpointError(GigVadError):
    """Checkpoint file failed a structural check (magic, size, or checksum)."""


class DatasetError(GigVadError):
    """Dataset description file is malformed or inconsistent."""
