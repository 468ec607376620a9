"""Shared exception base so the CLI can map any engine failure to exit != 0."""


class KgrecError(Exception):
    """Base class for all errors raised by this package."""
