"""In-memory transactional tables with pluggable concurrency control.

Core loop: build an Engine, register a TableSchema per table (each
schema names a concurrency policy and a column-group layout), then run
transaction bodies through Engine.run_transaction or drive begin/commit
yourself. The layout decides how many synchronization words guard a
row, so unrelated columns can stop conflicting without touching the
transaction code.
"""
from .engine import Engine, TxContext
from .outcomes import (Aborted, AbortReason, AbsentKeyError, Committed,
                       ConflictError, DuplicateKeyError, TxResult, UserAbort)
from .table import Table, TableSchema, key_range, pack_key
from .words import GroupLayout, PolicyId

__version__ = "0.1.0"

__all__ = [
    "Aborted", "AbortReason", "AbsentKeyError", "Committed",
    "ConflictError", "DuplicateKeyError", "Engine", "GroupLayout",
    "PolicyId", "Table", "TableSchema", "TxContext", "TxResult",
    "UserAbort", "key_range", "pack_key",
]
