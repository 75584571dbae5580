"""Exception hierarchy and process exit codes.

Exit code convention (used by the CLI): 0 ok, 1 usage, 2 data error,
3 endpoint error.
"""
from __future__ import annotations

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENDPOINT = 3


class NuclevalError(Exception):
    """Base class for toolkit errors."""

    exit_code = EXIT_DATA


class UsageError(NuclevalError):
    """Bad command-line or configuration input."""

    exit_code = EXIT_USAGE


class DataError(NuclevalError):
    """Invalid manifest, file, or wire-format content."""

    exit_code = EXIT_DATA


class EndpointError(NuclevalError):
    """Segmenter endpoint protocol failure.

    fatal: the whole run must abort (process died, response order broken).
    client_dead: this endpoint process is unusable but a respawn may continue.
    """

    exit_code = EXIT_ENDPOINT

    def __init__(self, message: str, *, fatal: bool = False, client_dead: bool = False):
        super().__init__(message)
        self.fatal = fatal
        self.client_dead = client_dead or fatal
