"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SchedPerfError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SchedPerfError):
    """A configuration value is missing, inverted, or out of range."""


class GraphStructureError(SchedPerfError):
    """A pipeline graph violates a structural invariant (cycle, bad index, ...).

    ``edges`` carries the offending edge set when one can be identified.
    """

    def __init__(self, message: str, edges: list[tuple[int, int]] | None = None):
        super().__init__(message)
        self.edges = edges or []


class GenerationError(SchedPerfError):
    """Random generation could not produce a valid artifact within its attempt cap."""


class DataFormatError(SchedPerfError):
    """A dataset, checkpoint, or report file is malformed or unreadable."""


class IncompatibleArtifactError(SchedPerfError):
    """Two artifacts (checkpoint vs dataset, versions, widths) do not match."""
