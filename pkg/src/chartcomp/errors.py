"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, storage errors -> 3,
NumericError -> 4.
"""


class ChartCompError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ChartCompError):
    """Invalid configuration value or violated call precondition."""


class StorageError(ChartCompError):
    """Base class for file format problems."""


class FormatError(StorageError):
    """File is not in the expected format (bad magic bytes, malformed body)."""


class VersionError(StorageError):
    """File carries an unsupported format version."""


class TruncatedError(StorageError):
    """File ends before the declared payload is complete."""


class ChecksumError(StorageError):
    """Payload checksum does not match the stored CRC-32."""


class NumericError(ChartCompError):
    """Non-finite values or numerically degenerate state."""


class DegenerateOutputError(NumericError):
    """Decoder produced an exactly-zero raw output, cannot normalize."""


class DivergenceError(NumericError):
    """Training loss became non-finite."""
