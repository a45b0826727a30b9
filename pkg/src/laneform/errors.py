"""Exception types shared across the package."""


class LaneformError(Exception):
    """Base class for all package-specific errors."""


class MalformedInstanceError(LaneformError, ValueError):
    """A planning instance violates its structural preconditions."""


class ResolutionBudgetError(LaneformError, RuntimeError):
    """Conflict resolution exhausted its iteration budget."""


class GeometryError(LaneformError, ValueError):
    """A trajectory segment request violates its geometric preconditions."""


class InfeasibleSegmentError(LaneformError, RuntimeError):
    """A speed-profile segment cannot be met under the motion limits."""

    def __init__(self, segment_index: int, message: str):
        super().__init__(f"segment {segment_index}: {message}")
        self.segment_index = segment_index


class TrackingLostError(LaneformError, RuntimeError):
    """The vehicle left the envelope in which path tracking is defined."""


class ConfigError(LaneformError, ValueError):
    """A run configuration failed validation."""


class SimulationError(LaneformError, RuntimeError):
    """A traffic run reached an invalid or degenerate state."""
