"""Exception hierarchy shared across the toolkit."""


class GeombenchError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(GeombenchError):
    """Invalid configuration or malformed input file (CLI exit code 2)."""


class StageError(GeombenchError):
    """A pipeline stage failed mid-run (CLI exit code 3)."""
