"""Exceptions shared across modules, kept coarse on purpose.

ConfigError covers malformed configuration and bad user input (CLI exit
code 1); plain ValueError is used for contract violations inside the
library. I/O problems propagate as OSError (CLI exit code 2).
"""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or inconsistent."""
