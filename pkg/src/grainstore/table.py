"""Tables, rows, and order-preserving key encoding.

A table is a sorted map from byte-string keys to rows. Each row carries one
synchronization word per column group; the word type is fixed by the table's
concurrency policy. The index mutex guards only map structure, never row
contents, and is never held while waiting on a word.
"""
from __future__ import annotations

import threading

from sortedcontainers import SortedDict

from .outcomes import DuplicateKeyError
from .words import GroupLayout, PolicyId, word_for_policy

INT_KEY_WIDTH = 4


def enc_int(v: int, width: int = INT_KEY_WIDTH) -> bytes:
    """Big-endian unsigned encoding; byte order equals numeric order."""
    return v.to_bytes(width, "big")


def enc_str(s: str, width: int) -> bytes:
    """NUL-padded fixed width; byte order equals string order for ASCII."""
    b = s.encode("ascii")
    if len(b) > width:
        raise ValueError(f"string key part longer than {width} bytes")
    return b.ljust(width, b"\x00")


def pack_key(*parts) -> bytes:
    """Concatenate key parts. ints -> 4-byte big-endian, bytes pass through.

    Composite keys built left to right sort lexicographically in the same
    order as the original tuples, so range scans over a prefix work.
    """
    out = []
    for p in parts:
        if isinstance(p, int):
            out.append(enc_int(p))
        elif isinstance(p, bytes):
            out.append(p)
        else:
            raise TypeError(f"key part must be int or bytes, got {type(p)!r}")
    return b"".join(out)


def key_range(*prefix_parts) -> tuple[bytes, bytes]:
    """[lo, hi) byte range covering every key that starts with the prefix."""
    lo = pack_key(*prefix_parts)
    i = len(lo) - 1
    while i >= 0 and lo[i] == 0xFF:
        i -= 1
    if i < 0:
        raise ValueError("prefix has no finite upper bound")
    # shortest byte string greater than every lo-prefixed key
    hi = lo[:i] + bytes([lo[i] + 1])
    return lo, hi


class TableSchema:
    """Column names, per-column byte widths for text, layout, and policy."""

    __slots__ = ("name", "columns", "layout", "policy", "widths", "_index",
                 "group_cols")

    def __init__(self, name: str, columns, layout: GroupLayout,
                 policy: PolicyId, widths: dict | None = None):
        columns = tuple(columns)
        if not name:
            raise ValueError("table needs a name")
        if len(set(columns)) != len(columns):
            raise ValueError("duplicate column name")
        if layout.num_columns != len(columns):
            raise ValueError(
                f"layout covers {layout.num_columns} columns, "
                f"schema has {len(columns)}")
        self.name = name
        self.columns = columns
        self.layout = layout
        self.policy = policy
        self._index = {c: i for i, c in enumerate(columns)}
        self.group_cols = tuple(tuple(sorted(g)) for g in layout.groups)
        self.widths = {}
        if widths:
            for cname, w in widths.items():
                self.widths[self._index[cname]] = w

    def col(self, name: str) -> int:
        return self._index[name]

    def cols(self, *names) -> tuple[int, ...]:
        return tuple(self._index[n] for n in names)

    def fit(self, ci: int, value):
        """Pad/verify a text value to its declared fixed width."""
        w = self.widths.get(ci)
        if w is None:
            return value
        if isinstance(value, str):
            value = value.encode("ascii")
        if len(value) > w:
            raise ValueError(
                f"{self.name}.{self.columns[ci]} wider than {w} bytes")
        return value.ljust(w, b" ")

    def fit_row(self, values) -> list:
        if len(values) != len(self.columns):
            raise ValueError(
                f"{self.name} expects {len(self.columns)} values, "
                f"got {len(values)}")
        return [self.fit(i, v) for i, v in enumerate(values)]


class Row:
    """Column values plus one synchronization word per group.

    pending_by marks an uncommitted insert: the inserting transaction sees
    the row, everyone else treats the key as absent. Set to None exactly
    once, at install time.
    """

    __slots__ = ("words", "cols", "pending_by")

    def __init__(self, words, cols, pending_by=None):
        self.words = words
        self.cols = cols
        self.pending_by = pending_by


class Table:
    """Sorted key -> Row map with a structure-only mutex.

    Range reads snapshot the key list under the mutex and examine rows
    after releasing it, so no caller ever spins on a word while holding
    the index lock.
    """

    __slots__ = ("schema", "table_id", "_rows", "_mu", "_k_pess", "_m_opt")

    def __init__(self, schema: TableSchema, table_id: int,
                 k_pess: int, m_opt: int):
        self.schema = schema
        self.table_id = table_id
        self._rows = SortedDict()
        self._mu = threading.Lock()
        self._k_pess = k_pess
        self._m_opt = m_opt

    def new_words(self) -> tuple:
        return tuple(
            word_for_policy(self.schema.policy, self._k_pess, self._m_opt)
            for _ in range(len(self.schema.layout)))

    def load_insert(self, key: bytes, values) -> Row:
        """Non-transactional insert for initial population. Single-writer."""
        row = Row(self.new_words(), self.schema.fit_row(values))
        with self._mu:
            if key in self._rows:
                raise DuplicateKeyError(f"{self.schema.name}: {key!r}")
            self._rows[key] = row
        return row

    def lookup(self, key: bytes) -> Row | None:
        with self._mu:
            return self._rows.get(key)

    def insert_pending(self, key: bytes, row: Row) -> Row | None:
        """Claim a key for an in-flight insert; returns the occupant on loss."""
        with self._mu:
            cur = self._rows.get(key)
            if cur is not None:
                return cur
            self._rows[key] = row
            return None

    def remove_pending(self, key: bytes, row: Row):
        with self._mu:
            if self._rows.get(key) is row:
                del self._rows[key]

    def range(self, lo: bytes, hi: bytes, reverse: bool = False) -> list:
        """Snapshot of (key, row) pairs with lo <= key < hi."""
        with self._mu:
            keys = list(self._rows.irange(lo, hi, inclusive=(True, False),
                                          reverse=reverse))
            return [(k, self._rows[k]) for k in keys]

    def items(self) -> list:
        with self._mu:
            return list(self._rows.items())

    def __len__(self):
        with self._mu:
            return len(self._rows)
