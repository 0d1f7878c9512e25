"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front-end can map
error classes to distinct process exit statuses.
"""

from __future__ import annotations


class PAError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1

    where: str | None = None

    def at(self, where: str) -> "PAError":
        """Attach a location (e.g. ``"block 2, batch 0"``) and return self."""
        self.where = where
        return self

    def __str__(self) -> str:
        msg = super().__str__()
        if self.where is not None:
            msg = f"{msg} ({self.where})"
        return msg


class ParameterError(PAError, ValueError):
    exit_code = 2


class ShapeError(PAError, ValueError):
    exit_code = 3


class BitRangeError(PAError, IndexError):
    exit_code = 3


class PlanError(PAError):
    exit_code = 4


class InfeasiblePlanError(PlanError):
    pass


class PrecisionExceededError(PAError, ArithmeticError):
    """Float transform output drifted too far from integers to trust its parities."""

    exit_code = 5

    def __init__(self, residual: float, guard: float, mode: str):
        escalate = {"single": "double", "double": "exact"}.get(mode, "smaller batches")
        super().__init__(
            f"{mode}-precision residual {residual:.4g} >= round guard {guard}; "
            f"retry with {escalate}"
        )
        self.residual = residual
        self.guard = guard
        self.mode = mode


class KeyFileError(PAError):
    exit_code = 6

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} at byte offset {offset}"
        super().__init__(message)
        self.offset = offset


class SessionError(PAError):
    exit_code = 7

    def __init__(self, message: str, transcript=None):
        super().__init__(message)
        self.transcript = transcript


class EntropyError(PAError):
    exit_code = 8
