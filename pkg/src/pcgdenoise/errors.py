"""Exception hierarchy shared across the pipeline.

CLI exit codes map onto these: ConfigError -> 2, DataError (and
subclasses) -> 3, NumericalError -> 4.
"""


class PcgDenoiseError(Exception):
    """Base class for all package errors."""


class ConfigError(PcgDenoiseError):
    """Invalid or inconsistent configuration."""


class DataError(PcgDenoiseError):
    """Missing, malformed, or mismatched data."""


class IntegrityError(DataError):
    """Checksum or cache consistency violation."""


class CheckpointError(DataError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


class NumericalError(PcgDenoiseError):
    """Non-finite values encountered where finiteness is required."""
