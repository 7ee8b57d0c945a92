"""Exception types shared across the package.

Argument-validation failures raise plain ValueError; the classes here mark
conditions a caller may reasonably want to catch and handle separately.
"""


class VisPlanError(Exception):
    """Base class for package-specific errors."""


class OutOfDomainError(VisPlanError):
    """A world-space point falls outside the grid's bounding box."""


class DegenerateMapError(VisPlanError):
    """An occupancy mask has no free nodes, so no level set can be built."""


class InvalidVantageError(VisPlanError):
    """A requested vantage node is out of bounds or not in free space."""


class NoCandidateError(VisPlanError):
    """No admissible candidate node remains for selection."""


class EstimatorError(VisPlanError):
    """An external gain estimator failed or returned malformed output."""


class FormatError(VisPlanError):
    """A serialized field or polygon file is malformed."""


class InvalidPolygonError(VisPlanError):
    """A polygon is degenerate, self-intersecting, or has misplaced holes."""


class GenerationFailureError(VisPlanError):
    """Scene generation could not satisfy its constraints within the retry budget."""
