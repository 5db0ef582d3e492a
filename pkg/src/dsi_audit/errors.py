"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class DsiAuditError(Exception):
    """Base class for all toolkit errors."""


class DataError(DsiAuditError):
    """Invalid input data (bad records, malformed files, broken geometry)."""


class UsageError(DsiAuditError):
    """Caller misuse: bad arguments, unmet preconditions."""


class FlowError(DsiAuditError):
    """Information-flow problems: missing or partially specified declarations."""


class GateBlocked(DsiAuditError):
    """An analysis was blocked by the contextual-integrity gate."""

    def __init__(self, message: str, verdict=None):
        super().__init__(message)
        self.verdict = verdict


class ThresholdUnattainable(UsageError):
    """A precision floor no point on the curve can reach."""

    def __init__(self, floor: float, max_achievable: float):
        super().__init__(
            f"precision floor {floor} unattainable; max achievable precision "
            f"is {max_achievable:.6f}"
        )
        self.floor = floor
        self.max_achievable = max_achievable
