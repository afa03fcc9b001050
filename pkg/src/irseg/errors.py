"""Exception hierarchy shared by the library and the CLI.

Each error family maps onto one CLI exit code so scripts can branch on
failures without parsing messages:

* :class:`UsageError`     -> exit 2 (bad arguments, bad config, misuse)
* :class:`DataError`      -> exit 3 (missing/malformed files, inconsistent data)
* :class:`NumericalError` -> exit 4 (singular systems, failed convergence)
"""

from __future__ import annotations


class IrsegError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(IrsegError):
    """Invalid arguments, configuration values, or API misuse."""

    exit_code = 2


class DataError(IrsegError):
    """Missing, malformed, or mutually inconsistent input data."""

    exit_code = 3


class NumericalError(IrsegError):
    """A numerical routine failed (singular system, divergence, ...)."""

    exit_code = 4
