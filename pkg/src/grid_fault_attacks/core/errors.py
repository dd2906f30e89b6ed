"""
Exception hierarchy for grid-fault-attacks.
"""


class GridFaultError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(GridFaultError, ValueError):
    """A configuration, plan or flag value is invalid or inconsistent."""


class InvalidInputError(GridFaultError, ValueError):
    """An operation received data outside its domain (empty, too short, non-finite)."""


class IncompleteDatasetError(GridFaultError):
    """A fault instance is missing one or more measurement-location records."""


class InvariantViolation(GridFaultError):
    """A hard run-time invariant failed during an experiment."""

    def __init__(self, check: str, detail: str):
        super().__init__(f"{check}: {detail}")
        self.check = check
        self.detail = detail


class ArtifactError(GridFaultError):
    """An artifact could not be read, written, or has an incompatible schema."""
