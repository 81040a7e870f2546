"""Exception types raised across the package.

Every error carries a short machine-readable ``category`` that the CLI
reports alongside a nonzero exit code.
"""

from __future__ import annotations


class BurstfdError(Exception):
    """Base class; ``category`` names the kind of rejection."""

    category = "error"
    exit_code = 1


class PreconditionError(BurstfdError, ValueError):
    """Input violates an operation's precondition (length, shape, rate...)."""

    category = "precondition"
    exit_code = 3


class ConfigError(BurstfdError, ValueError):
    category = "config"
    exit_code = 2


class FormatError(BurstfdError, ValueError):
    """A file or document could not be parsed.

    ``position`` is a human-readable location (``line 4`` or a JSON path).
    """

    category = "format"
    exit_code = 4

    def __init__(self, message: str, position: str | None = None):
        self.position = position
        if position:
            message = f"{message} (at {position})"
        super().__init__(message)
