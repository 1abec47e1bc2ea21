"""Exception hierarchy shared by all modules.

The three leaf classes map onto the command-line exit codes documented in
the README: configuration problems (exit 2), data problems (exit 3), and
numerical degeneracies (exit 4).
"""
from __future__ import annotations


class EarnlinkError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(EarnlinkError):
    """A config file, parameter set, or analysis request is invalid."""


class DataError(EarnlinkError):
    """Input data violates the schema or an operation's preconditions."""


class EstimationError(EarnlinkError):
    """A numerical computation is degenerate (rank deficiency, zero denominator)."""
