"""Error taxonomy shared across the package (maps to CLI exit codes)."""


class ConfigError(Exception):
    """Bad configuration, flags, or file-format declarations (exit 2)."""


class DataError(Exception):
    """Unreadable, malformed, or insufficient data (exit 3)."""


class NumericalError(Exception):
    """Non-finite losses or diverging optimization (exit 4)."""
