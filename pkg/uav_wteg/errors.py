"""Exception hierarchy for the uav-wteg library.

Every error raised by the library derives from :class:`UavWtegError`. Errors that
signal invalid input additionally derive from :class:`ValueError`, so code written
against plain ``ValueError`` keeps working.
"""

from __future__ import annotations

from typing import Optional


class UavWtegError(Exception):
    """Root of all library errors."""


class ConfigError(UavWtegError, ValueError):
    """A scenario or data document is malformed or inconsistent.

    Attributes:
        key: Dotted path of the offending key, when known.
    """

    def __init__(self, message: str, key: Optional[str] = None) -> None:
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class NavigationError(UavWtegError, ValueError):
    """Invalid navigation state or IMU trace."""


class TrajectoryError(UavWtegError, ValueError):
    """Invalid truth trajectory definition or query."""


class TopologyError(UavWtegError, ValueError):
    """Inconsistent slot topologies or graph queries."""


class DagError(UavWtegError, ValueError):
    """Structural problem in a task DAG."""


class CycleDetected(DagError):
    """The task graph contains a directed cycle."""


class MultipleSources(DagError):
    """The task graph does not have exactly one start subtask."""


class MultipleSinks(DagError):
    """The task graph does not have exactly one terminal subtask."""


class OrphanNode(DagError):
    """A subtask does not lie on any start-to-terminal path."""


class NotValidated(DagError):
    """An operation needs a validated (and possibly propagated) DAG."""


class MappingError(UavWtegError, ValueError):
    """A decision matrix violates the subtask-to-UAV mapping rules."""


class RuleViolation(MappingError):
    """Start or terminal subtask is not anchored to its designated UAV."""


class ReplicaNotSameUav(MappingError):
    """The replicas of one subtask sit on different UAVs or non-consecutive slots."""


class HorizonExceeded(MappingError):
    """A replica set extends beyond the second time slot."""


class RowSumInvalid(MappingError):
    """A decision-matrix row does not sum to one or two."""


class InfeasibleSchedule(UavWtegError):
    """A rule-valid schedule cannot be executed within the two-slot horizon.

    Attributes:
        reason: Short machine-readable reason code.
    """

    def __init__(self, reason: str, detail: str = "") -> None:
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class UnreachablePair(InfeasibleSchedule):
    """No route exists between two mapped replica nodes."""

    def __init__(self, detail: str = "") -> None:
        super().__init__("unreachable", detail)


class NoFeasibleSchedule(UavWtegError):
    """A solver could not produce any feasible schedule."""


class EnumerationBoundExceeded(UavWtegError, ValueError):
    """An instance is too large for exhaustive enumeration."""
