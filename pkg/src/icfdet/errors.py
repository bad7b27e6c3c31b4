"""Shared exception hierarchy so the CLI can report domain errors cleanly."""


class IcfdetError(Exception):
    """Base class for all expected/domain failures in this package."""
