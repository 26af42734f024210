"""Transaction outcomes, abort taxonomy, and body-level errors."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class AbortReason(Enum):
    LOCK_BUSY = "lock_busy"
    READ_VALIDATION = "read_validation"
    SCAN_VALIDATION = "scan_validation"
    RTS_EXTENSION_FAILED = "rts_extension_failed"
    WOUNDED = "wounded"
    USER_ABORT = "user_abort"


@dataclass(frozen=True)
class Committed:
    commit_ts: int | None = None


@dataclass(frozen=True)
class Aborted:
    reason: AbortReason


@dataclass
class TxResult:
    """Final outcome of run_transaction plus per-attempt abort history."""
    outcome: Committed | Aborted
    retries: int
    value: object = None
    abort_reasons: list[AbortReason] = field(default_factory=list)

    @property
    def committed(self) -> bool:
        return isinstance(self.outcome, Committed)


class ConflictError(Exception):
    """Internal control flow: the current attempt must abort with `reason`."""

    def __init__(self, reason: AbortReason):
        super().__init__(reason.value)
        self.reason = reason


class UserAbort(Exception):
    """Raised by a transaction body to roll back without retry."""


class DuplicateKeyError(Exception):
    """Insert or load of a key that already exists."""


class AbsentKeyError(Exception):
    """Update of a key that does not exist."""
