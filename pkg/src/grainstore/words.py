"""Per-record-group synchronization words shared by all CC policies.

Each word guards one column group of one row. Mutations run under a tiny
per-word mutex; reads use double-read validation so the hot read path never
writes shared state. CPython's per-bytecode atomicity makes the unlocked
double-read safe.
"""
from __future__ import annotations

import threading
import time
from enum import Enum

VERSION_WRAP = 1 << 23       # adaptive words carry a 23-bit version; wraps tolerated
CONTENTION_CAP = 255         # 8-bit saturating counter
K_PESS_DEFAULT = 3           # blamed aborts before a record turns pessimistic
M_OPT_DEFAULT = 128          # consecutive clean accesses before it turns back


class LockKind(Enum):
    READ = "read"
    WRITE = "write"


class Mode(Enum):
    OPTIMISTIC = "optimistic"
    PESSIMISTIC = "pessimistic"


class TransitionEvent(Enum):
    ABORT_BLAMED = "abort_blamed"
    CLEAN_ACCESS = "clean_access"


class OccVersion:
    """Exclusive-lock bit plus a monotonically increasing version counter.

    Read anchor for the OCC, SwissTM, and adaptive-optimistic validation
    paths. The counter changes only under the lock and only upward.
    """

    __slots__ = ("_mu", "locked", "counter", "owner")

    def __init__(self):
        self._mu = threading.Lock()
        self.locked = False
        self.counter = 0
        self.owner = None

    def stable_read(self) -> int:
        """Return a counter value observed while unlocked; spins out writers."""
        while True:
            c1 = self.counter
            if not self.locked and c1 == self.counter:
                return c1
            time.sleep(0)

    def try_lock(self, owner=None) -> bool:
        """Set the lock bit if clear. Never waits."""
        with self._mu:
            if self.locked:
                return False
            self.locked = True
            self.owner = owner
            return True

    def unlock_bump(self) -> int:
        """Publish a change: counter += 1, then release, atomically."""
        with self._mu:
            assert self.locked, "unlock_bump without holding the lock"
            self.counter += 1
            self.owner = None
            self.locked = False
            return self.counter

    def unlock(self):
        """Release without publishing (abort path)."""
        with self._mu:
            assert self.locked, "unlock without holding the lock"
            self.owner = None
            self.locked = False

    def snapshot(self) -> tuple[bool, int, object]:
        """Consistent (locked, counter, owner) triple."""
        with self._mu:
            return self.locked, self.counter, self.owner


class TicTocStamp:
    """Write timestamp with lock bit plus an independently growing read timestamp.

    Invariant at every unlocked instant: rts >= wts. wts moves only under the
    lock and strictly upward; rts never shrinks while wts is unchanged.
    """

    __slots__ = ("_mu", "locked", "wts", "rts", "owner")

    def __init__(self):
        self._mu = threading.Lock()
        self.locked = False
        self.wts = 0
        self.rts = 0
        self.owner = None

    def read_pair(self) -> tuple[int, int]:
        """Return a (wts, rts) pair that was simultaneously current while unlocked."""
        while True:
            w1 = self.wts
            r1 = self.rts
            if not self.locked and w1 == self.wts and r1 == self.rts:
                return w1, r1
            time.sleep(0)

    def try_lock(self, owner=None) -> bool:
        with self._mu:
            if self.locked:
                return False
            self.locked = True
            self.owner = owner
            return True

    def extend_rts(self, expected_wts: int, target: int, owner=None) -> bool:
        """rts = max(rts, target) iff wts is still expected_wts and the lock
        is clear or ours. False signals interference, never an error."""
        with self._mu:
            if self.locked and self.owner is not owner:
                return False
            if self.wts != expected_wts:
                return False
            if target > self.rts:
                self.rts = target
            return True

    def install(self, commit_ts: int):
        """wts = rts = commit_ts and release, as one publication."""
        with self._mu:
            assert self.locked, "install without holding the lock"
            assert commit_ts > self.wts, "install timestamp must advance wts"
            self.wts = commit_ts
            self.rts = commit_ts
            self.owner = None
            self.locked = False

    def unlock(self):
        with self._mu:
            assert self.locked, "unlock without holding the lock"
            self.owner = None
            self.locked = False

    def snapshot(self) -> tuple[bool, int, int, object]:
        with self._mu:
            return self.locked, self.wts, self.rts, self.owner


class RwLockWord:
    """Reader-count/writer-bit word with an adaptive mode state machine.

    Backs 2PL grants and the adaptive policy. The embedded version feeds
    adaptive optimistic reads and changes only under the writer bit. The
    contention counter saturates at 255 and doubles as the clean-access
    streak while the word is pessimistic.
    """

    __slots__ = ("_mu", "readers", "writer", "writer_owner", "mode",
                 "contention", "version", "k_pess", "m_opt")

    def __init__(self, k_pess: int = K_PESS_DEFAULT, m_opt: int = M_OPT_DEFAULT):
        self._mu = threading.Lock()
        self.readers = 0
        self.writer = False
        self.writer_owner = None
        self.mode = Mode.OPTIMISTIC
        self.contention = 0
        self.version = 0
        self.k_pess = k_pess
        self.m_opt = m_opt

    def stable_read(self) -> int:
        """Version observed while no writer held the word (adaptive optimistic reads)."""
        while True:
            v1 = self.version
            if not self.writer and v1 == self.version:
                return v1
            time.sleep(0)

    def try_acquire(self, kind: LockKind, owner=None) -> bool:
        """No-wait grant. READ needs writer clear; WRITE needs the word idle."""
        with self._mu:
            if kind is LockKind.READ:
                if self.writer:
                    return False
                self.readers += 1
                return True
            if self.writer or self.readers:
                return False
            self.writer = True
            self.writer_owner = owner
            return True

    def try_upgrade(self, owner=None) -> bool:
        """READ->WRITE when the caller is the sole reader."""
        with self._mu:
            if self.writer or self.readers != 1:
                return False
            self.readers = 0
            self.writer = True
            self.writer_owner = owner
            return True

    def release(self, kind: LockKind, bump: bool = False):
        with self._mu:
            if kind is LockKind.READ:
                assert self.readers > 0, "read release without a grant"
                self.readers -= 1
                return
            assert self.writer, "write release without a grant"
            if bump:
                self.version = (self.version + 1) % VERSION_WRAP
            self.writer_owner = None
            self.writer = False

    def transition(self, event: TransitionEvent) -> Mode:
        """Advance the per-record contention state machine; returns the mode."""
        with self._mu:
            if event is TransitionEvent.ABORT_BLAMED:
                if self.mode is Mode.OPTIMISTIC:
                    if self.contention < CONTENTION_CAP:
                        self.contention += 1
                    if self.contention >= self.k_pess:
                        self.mode = Mode.PESSIMISTIC
                        self.contention = 0
                else:
                    self.contention = 0  # breaks the clean streak
            else:  # CLEAN_ACCESS
                if self.mode is Mode.PESSIMISTIC:
                    if self.contention < CONTENTION_CAP:
                        self.contention += 1
                    if self.contention >= self.m_opt:
                        self.mode = Mode.OPTIMISTIC
                        self.contention = 0
            return self.mode

    def snapshot(self) -> tuple[bool, int, int, object]:
        """(writer, readers, version, writer_owner) under the word mutex."""
        with self._mu:
            return self.writer, self.readers, self.version, self.writer_owner


class GroupLayout:
    """Partition of column indexes into timestamp groups.

    One synchronization word is allocated per group; the group count is the
    row's timestamp granularity.
    """

    __slots__ = ("groups", "_group_of")

    def __init__(self, groups):
        groups = [frozenset(g) for g in groups]
        if not groups:
            raise ValueError("layout needs at least one group")
        seen = {}
        for gi, cols in enumerate(groups):
            if not cols:
                raise ValueError("empty column group")
            for c in cols:
                if c in seen:
                    raise ValueError(f"column {c} in two groups")
                seen[c] = gi
        n = len(seen)
        if set(seen) != set(range(n)):
            raise ValueError("groups must cover [0, num_columns) exactly")
        self.groups = tuple(groups)
        self._group_of = tuple(seen[c] for c in range(n))

    @classmethod
    def coarse(cls, num_columns: int) -> "GroupLayout":
        return cls([range(num_columns)])

    @classmethod
    def even_odd(cls, num_columns: int) -> "GroupLayout":
        return cls([range(0, num_columns, 2), range(1, num_columns, 2)])

    @property
    def num_columns(self) -> int:
        return len(self._group_of)

    def __len__(self):
        return len(self.groups)

    def group_of(self, col: int) -> int:
        return self._group_of[col]

    def groups_for(self, cols) -> list[int]:
        """Distinct group indexes touched by cols, in first-touch order."""
        out = []
        for c in cols:
            gi = self._group_of[c]
            if gi not in out:
                out.append(gi)
        return out


class PolicyId(Enum):
    OCC = "occ"
    TICTOC = "tictoc"
    TWO_PL = "2pl"
    SWISSTM = "swisstm"
    ADAPTIVE = "adaptive"


def word_for_policy(policy: PolicyId, k_pess: int = K_PESS_DEFAULT,
                    m_opt: int = M_OPT_DEFAULT):
    """Allocate the synchronization word type a policy validates against."""
    if policy in (PolicyId.OCC, PolicyId.SWISSTM):
        return OccVersion()
    if policy is PolicyId.TICTOC:
        return TicTocStamp()
    # 2PL ignores mode/contention fields; adaptive uses all of them.
    return RwLockWord(k_pess=k_pess, m_opt=m_opt)
