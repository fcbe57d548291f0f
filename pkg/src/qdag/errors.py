"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: InputError -> 2,
ConfigError -> 3, OSError on writes -> 4, verdict failures -> 1.
"""

from __future__ import annotations

from enum import Enum


class QdagError(Exception):
    """Base class for package errors."""


class InputError(QdagError):
    """Malformed external input: bad matrices, bad CSV cells, shape mismatches."""


class ConfigError(QdagError):
    """A configuration value violates a documented invariant."""


class Rejection(Enum):
    """Why an edge edit was refused."""

    EDGE_EXISTS = "edge-exists"
    EDGE_ABSENT = "edge-absent"
    WOULD_CYCLE = "would-cycle"
    BUDGET_EXCEEDED = "budget-exceeded"


class EditRejected(QdagError):
    """Raised by apply_edit when a move violates a graph constraint."""

    def __init__(self, reason: Rejection, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason.value}{': ' + detail if detail else ''}")


class NoValidActions(QdagError):
    """Signals that a state admits no valid edit (empty action mask)."""
