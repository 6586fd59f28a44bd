"""Exception hierarchy shared across the package.

The CLI maps these onto its exit codes: ConfigError -> 2, DataError -> 3,
TrainingError and ModelFormatError -> 4.
"""


class WindRampError(Exception):
    """Base class for all windramp errors."""


class ConfigError(WindRampError):
    """Invalid configuration, flags, or parameter values."""


class DataError(WindRampError):
    """Malformed, inconsistent, or insufficient input data."""


class TrainingError(WindRampError):
    """A model cannot be trained from the given dataset."""


class ModelFormatError(WindRampError):
    """A model document is malformed, truncated, or has the wrong version."""
