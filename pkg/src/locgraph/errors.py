"""Error types shared across modules; the CLI maps them to exit codes."""


class ConfigError(ValueError):
    """Invalid or unknown configuration (exit code 2)."""


class DataError(ValueError):
    """Unreadable or inconsistent input data (exit code 3)."""
