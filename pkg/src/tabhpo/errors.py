"""Exception hierarchy; the CLI maps each family to an exit code."""


class TabHPOError(Exception):
    exit_code = 3


class ConfigError(TabHPOError, ValueError):
    """Bad user configuration (exit code 1)."""

    exit_code = 1


class DataError(TabHPOError, ValueError):
    """Malformed or inconsistent input data (exit code 2)."""

    exit_code = 2


class InvariantError(TabHPOError, RuntimeError):
    """An internal invariant failed (exit code 3)."""

    exit_code = 3


class DomainError(ConfigError):
    """A value lies outside its hyperparameter dimension's domain."""
