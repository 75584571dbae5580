"""Adapter exit codes and exception types (mirrors the toolkit CLI's codes)."""
from __future__ import annotations

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class AdapterError(Exception):
    """Unrecoverable adapter failure (bad config, bad data, bad layout)."""

    exit_code = EXIT_DATA


class UsageError(AdapterError):
    """Bad command-line input."""

    exit_code = EXIT_USAGE
