"""Shared exception types with CLI exit-code mappings."""


class NoPathError(RuntimeError):
    """Search exhausted (or budget exceeded) without reaching the goal."""


class SamplingExhaustedError(RuntimeError):
    """Rejection sampling gave up after the configured number of draws."""


class BadConfigError(ValueError):
    """A config file or episode description is malformed."""
