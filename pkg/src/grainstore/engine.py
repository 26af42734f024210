"""Transaction engine: per-policy access tracking and a five-phase commit.

One Engine owns the tables; a TxContext carries a single attempt's read,
write, scan, and absence footprints, keyed by synchronization word. Every
policy funnels through the same commit pipeline: lock buffered writes,
pick a TicToc timestamp, validate reads, revalidate scans and absences,
install. Which steps do real work depends on the word type each table's
policy selected.

No lock acquisition ever blocks. The only waits are bounded read spins
(OCC and TicToc words are held only for the commit tail) and the SwissTM
contention manager's wound-wait spin, which polls the waiter's own
wounded flag so age cycles cannot form. Adaptive optimistic reads treat
a writer-held word as an immediate conflict instead of spinning, since
write grants are held for whole transaction bodies.
"""
from __future__ import annotations

import itertools
import random
import sys
import threading
import time

from enum import Enum

from .outcomes import (Aborted, AbortReason, AbsentKeyError, Committed,
                       ConflictError, DuplicateKeyError, TxResult, UserAbort)
from .table import Row, Table
from .words import (K_PESS_DEFAULT, LockKind, M_OPT_DEFAULT, Mode, OccVersion,
                    PolicyId, TicTocStamp, TransitionEvent)

_BUSY = object()  # fingerprint slot for a foreign-locked word; equals nothing
_OWN = "own"      # fingerprint slot for a row this transaction inserted


class Arbitration(Enum):
    WOUND_OWNER = "wound_owner"
    ABORT_SELF = "abort_self"


def cm_resolve(owner_priority: int, requester_priority: int) -> Arbitration:
    """Wound-wait: the older transaction (smaller priority) always wins."""
    if requester_priority < owner_priority:
        return Arbitration.WOUND_OWNER
    return Arbitration.ABORT_SELF


class ReadEntry:
    """One tracked read observation per (row, group) word.

    grant=True means a 2PL-style READ grant is held and must be released.
    obs is the version/counter (int) or TicToc wts; obs=None marks a read
    whose stability a continuously held grant guarantees instead.
    """

    __slots__ = ("table", "row", "gi", "word", "policy", "grant", "obs",
                 "obs_rts")

    def __init__(self, table, row, gi, word, policy, grant, obs, obs_rts):
        self.table = table
        self.row = row
        self.gi = gi
        self.word = word
        self.policy = policy
        self.grant = grant
        self.obs = obs
        self.obs_rts = obs_rts


class WriteEntry:
    """Buffered or lock-backed intent to overwrite one group of one row.

    values maps column index to new value; None for inserts, whose values
    already sit in the (still pending) row. locked tracks whether this
    entry currently holds its word's exclusive side.
    """

    __slots__ = ("table", "key", "row", "gi", "word", "policy", "values",
                 "locked", "is_insert", "sortkey")

    def __init__(self, table, key, row, gi, word, policy, values, locked,
                 is_insert):
        self.table = table
        self.key = key
        self.row = row
        self.gi = gi
        self.word = word
        self.policy = policy
        self.values = values
        self.locked = locked
        self.is_insert = is_insert
        self.sortkey = (table.table_id, key, gi)


class ScanRecord:
    """Range predicate plus the fingerprint its first evaluation produced."""

    __slots__ = ("table", "lo", "hi", "reverse", "limit", "fingerprint")

    def __init__(self, table, lo, hi, reverse, limit, fingerprint):
        self.table = table
        self.lo = lo
        self.hi = hi
        self.reverse = reverse
        self.limit = limit
        self.fingerprint = fingerprint


class TxContext:
    """State of one transaction attempt. Not reusable after commit/abort."""

    __slots__ = ("engine", "tx_id", "cm_priority", "active", "wounded",
                 "commit_ts", "read_set", "write_set", "scan_set",
                 "absent_set", "insert_rows")

    def __init__(self, engine, tx_id: int, cm_priority: int):
        self.engine = engine
        self.tx_id = tx_id
        self.cm_priority = cm_priority
        self.active = True
        self.wounded = False
        self.commit_ts = None
        self.read_set = {}    # word -> ReadEntry, in first-access order
        self.write_set = {}   # word -> WriteEntry
        self.scan_set = []
        self.absent_set = set()   # (table, key) observed absent
        self.insert_rows = []     # (table, key, row) pending installs

    # -- public operations ------------------------------------------------

    def get(self, table: Table, key: bytes, cols=None):
        """Read columns of one row; None if the key is (treated as) absent."""
        self._check_active()
        schema = table.schema
        need = tuple(cols) if cols is not None else tuple(
            range(len(schema.columns)))
        row = table.lookup(key)
        if row is None or (row.pending_by is not None
                           and row.pending_by is not self):
            self.absent_set.add((table, key))
            return None
        if row.pending_by is self:
            return tuple(row.cols[c] for c in need)
        out = {}
        layout = schema.layout
        for gi in layout.groups_for(need):
            gcols = [c for c in need if layout.group_of(c) == gi]
            vals, _ = self._read_row_group(table, row, gi, gcols)
            for c, v in zip(gcols, vals):
                out[c] = v
        return tuple(out[c] for c in need)

    def update(self, table: Table, key: bytes, values: dict):
        """Stage new values for an existing row ({column index: value})."""
        self._check_active()
        schema = table.schema
        fitted = {ci: schema.fit(ci, v) for ci, v in values.items()}
        row = table.lookup(key)
        if row is None or (row.pending_by is not None
                           and row.pending_by is not self):
            self.absent_set.add((table, key))
            raise AbsentKeyError(f"{schema.name}: {key!r}")
        if row.pending_by is self:
            for ci, v in fitted.items():
                row.cols[ci] = v
            return
        layout = schema.layout
        for gi in layout.groups_for(fitted):
            gvals = {ci: v for ci, v in fitted.items()
                     if layout.group_of(ci) == gi}
            self._stage_write(table, key, row, gi, gvals)

    def insert(self, table: Table, key: bytes, values):
        """Create a row invisible to others until this transaction commits."""
        self._check_active()
        if self.wounded:
            raise ConflictError(AbortReason.WOUNDED)
        schema = table.schema
        row = Row(table.new_words(), schema.fit_row(values), pending_by=self)
        for w in row.words:
            if isinstance(w, (OccVersion, TicTocStamp)):
                ok = w.try_lock(self)
            else:
                ok = w.try_acquire(LockKind.WRITE, self)
            assert ok, "fresh word already held"
        cur = table.insert_pending(key, row)
        if cur is not None:
            if cur.pending_by is None or cur.pending_by is self:
                raise DuplicateKeyError(f"{schema.name}: {key!r}")
            # someone else's in-flight insert owns the key right now
            raise ConflictError(AbortReason.LOCK_BUSY)
        self.insert_rows.append((table, key, row))
        for gi, w in enumerate(row.words):
            self.write_set[w] = WriteEntry(table, key, row, gi, w,
                                           schema.policy, None, True, True)

    def scan(self, table: Table, lo: bytes, hi: bytes, reverse: bool = False,
             limit: int | None = None):
        """Ordered read of [lo, hi); returns (key, full row tuple) pairs.

        The observed keys and per-group versions are fingerprinted and
        re-checked at commit, which is what stops phantoms.
        """
        self._check_active()
        if self.wounded:
            raise ConflictError(AbortReason.WOUNDED)
        results = []
        fingerprint = []
        ncols = len(table.schema.columns)
        group_cols = table.schema.group_cols
        for key, row in table.range(lo, hi, reverse):
            if limit is not None and len(results) >= limit:
                break
            if row.pending_by is self:
                results.append((key, tuple(row.cols)))
                fingerprint.append((key, _OWN))
                continue
            if row.pending_by is not None:
                continue
            out = [None] * ncols
            parts = []
            for gi, gcols in enumerate(group_cols):
                vals, fp = self._read_row_group(table, row, gi, gcols)
                for c, v in zip(gcols, vals):
                    out[c] = v
                parts.append(fp)
            results.append((key, tuple(out)))
            fingerprint.append((key, tuple(parts)))
        self.scan_set.append(ScanRecord(table, lo, hi, reverse, limit,
                                        tuple(fingerprint)))
        return results

    def user_abort(self):
        raise UserAbort()

    def commit(self):
        return self.engine.commit(self)

    def abort(self, reason: AbortReason = AbortReason.USER_ABORT):
        return self.engine.abort(self, reason)

    # -- tracked access internals ------------------------------------------

    def track_read(self, table: Table, row: Row, gi: int) -> ReadEntry:
        """Record a read observation for one group; returns its entry."""
        self._tracked_read(table, row, gi, table.schema.group_cols[gi])
        return self.read_set[row.words[gi]]

    def stage_write(self, table: Table, key: bytes, row: Row, gi: int,
                    values: dict) -> WriteEntry:
        return self._stage_write(table, key, row, gi, values)

    def _check_active(self):
        if not self.active:
            raise RuntimeError("transaction already finished")

    def _read_row_group(self, table, row, gi, gcols):
        """(values, fingerprint scalar) for gcols, own writes overlaid."""
        word = row.words[gi]
        we = self.write_set.get(word)
        if we is not None and we.locked:
            # word held exclusively by us: contents are stable
            vals = [row.cols[c] for c in gcols]
            policy = table.schema.policy
            if policy is PolicyId.TICTOC:
                fp = word.wts
            elif policy in (PolicyId.OCC, PolicyId.SWISSTM):
                fp = word.counter
            else:
                fp = word.version
            if we.values:
                vals = [we.values.get(c, v) for c, v in zip(gcols, vals)]
            return vals, fp
        vals, fp = self._tracked_read(table, row, gi, gcols)
        if we is not None and we.values:
            vals = [we.values.get(c, v) for c, v in zip(gcols, vals)]
        return vals, fp

    def _tracked_read(self, table, row, gi, gcols):
        """Read one group consistently and record it in the read set."""
        if self.wounded:
            raise ConflictError(AbortReason.WOUNDED)
        word = row.words[gi]
        policy = table.schema.policy
        re = self.read_set.get(word)
        if re is not None and re.grant:
            # grant keeps writers out; contents cannot move
            return [row.cols[c] for c in gcols], word.version
        vals, obs, obs_rts, grant = self._observe(policy, word, row, gcols)
        if re is None:
            self.read_set[word] = ReadEntry(table, row, gi, word, policy,
                                            grant, obs, obs_rts)
            return vals, (word.version if grant else obs)
        # re-access: merge, and fail fast if the first observation is stale
        if grant:
            re.grant = True
        if re.obs is not None:
            cur = word.version if grant else obs
            if policy is PolicyId.TICTOC:
                if cur != re.obs:
                    raise ConflictError(AbortReason.RTS_EXTENSION_FAILED)
                if obs_rts > re.obs_rts:
                    re.obs_rts = obs_rts
            elif cur != re.obs:
                if policy is PolicyId.ADAPTIVE:
                    word.transition(TransitionEvent.ABORT_BLAMED)
                raise ConflictError(AbortReason.READ_VALIDATION)
        return vals, (re.obs if re.obs is not None else word.version)

    def _observe(self, policy, word, row, gcols):
        """Policy-dispatched consistent group read.

        Returns (values, obs, obs_rts, grant). Raises ConflictError when
        the policy aborts rather than waits.
        """
        if policy is PolicyId.OCC:
            while True:
                c1 = word.counter
                if word.locked:
                    time.sleep(0)
                    continue
                vals = [row.cols[c] for c in gcols]
                if not word.locked and word.counter == c1:
                    return vals, c1, None, False
                time.sleep(0)
        if policy is PolicyId.TICTOC:
            while True:
                w1 = word.wts
                r1 = word.rts
                if word.locked:
                    time.sleep(0)
                    continue
                vals = [row.cols[c] for c in gcols]
                if not word.locked and word.wts == w1:
                    return vals, w1, r1, False
                time.sleep(0)
        if policy is PolicyId.SWISSTM:
            while True:
                locked, c1, owner = word.snapshot()
                if locked and owner is not self:
                    self._contend(word, owner)
                    continue
                vals = [row.cols[c] for c in gcols]
                locked2, c2, owner2 = word.snapshot()
                if c2 == c1 and (not locked2 or owner2 is self):
                    return vals, c1, None, False
        if policy is PolicyId.TWO_PL:
            if not word.try_acquire(LockKind.READ, self):
                raise ConflictError(AbortReason.LOCK_BUSY)
            return [row.cols[c] for c in gcols], None, None, True
        # ADAPTIVE: grant in pessimistic mode, versioned read otherwise
        if word.mode is Mode.PESSIMISTIC:
            if not word.try_acquire(LockKind.READ, self):
                raise ConflictError(AbortReason.LOCK_BUSY)
            return [row.cols[c] for c in gcols], None, None, True
        while True:
            writer, _, v1, wowner = word.snapshot()
            if writer:
                if wowner is self:
                    return [row.cols[c] for c in gcols], v1, None, False
                # writer grants span whole bodies: waiting here can deadlock
                raise ConflictError(AbortReason.LOCK_BUSY)
            vals = [row.cols[c] for c in gcols]
            writer2, _, v2, _ = word.snapshot()
            if not writer2 and v2 == v1:
                return vals, v1, None, False

    def _stage_write(self, table, key, row, gi, gvals):
        if self.wounded:
            raise ConflictError(AbortReason.WOUNDED)
        word = row.words[gi]
        we = self.write_set.get(word)
        if we is not None:
            we.values.update(gvals)
            return we
        policy = table.schema.policy
        locked = False
        if policy is PolicyId.SWISSTM:
            self._swiss_lock(word)
            locked = True
        elif policy is PolicyId.TWO_PL or (policy is PolicyId.ADAPTIVE
                                           and word.mode is Mode.PESSIMISTIC):
            self._acquire_write_grant(word)
            locked = True
        we = WriteEntry(table, key, row, gi, word, policy, dict(gvals),
                        locked, False)
        self.write_set[word] = we
        return we

    def _acquire_write_grant(self, word):
        """Take the exclusive side of a RwLockWord, upgrading our own grant."""
        re = self.read_set.get(word)
        if re is not None and re.grant:
            if not word.try_upgrade(self):
                raise ConflictError(AbortReason.LOCK_BUSY)
            # the grant was held from read to upgrade, so the observation
            # can never go stale; drop it from validation
            re.grant = False
            re.obs = None
        elif not word.try_acquire(LockKind.WRITE, self):
            raise ConflictError(AbortReason.LOCK_BUSY)

    def _swiss_lock(self, word):
        while True:
            if self.wounded:
                raise ConflictError(AbortReason.WOUNDED)
            if word.try_lock(self):
                return
            self._contend(word, word.owner)

    def _contend(self, word, owner):
        """Wound-wait arbitration against the holder of an eager lock."""
        if owner is None or owner is self:
            return
        if cm_resolve(owner.cm_priority, self.cm_priority) \
                is Arbitration.ABORT_SELF:
            raise ConflictError(AbortReason.LOCK_BUSY)
        owner.wounded = True
        while word.locked and word.owner is owner:
            if self.wounded:
                raise ConflictError(AbortReason.WOUNDED)
            time.sleep(0)


class Engine:
    """Table registry plus the commit/abort protocol shared by all policies."""

    # Minimum GIL timeslice while any commit holds install locks. Callers
    # that lower sys.setswitchinterval() to force body interleavings (the
    # benchmark does) would otherwise preempt half-finished commits, and a
    # committer parked across other threads' slices holds its locks for
    # thread-count times longer than the pipeline itself needs, flooding
    # every run with LOCK_BUSY. Install sections are short; keep them so.
    COMMIT_SHIELD_SECS = 0.005

    # Retry backoff, full-jitter exponential. The base is sized to one
    # transaction body here (interpreted work plus scheduler stalls), so
    # the loser of a conflict waits out the winner's in-flight attempt
    # instead of re-reading the same doomed state and re-colliding with it
    # several times per logical conflict.
    RETRY_BACKOFF_BASE = 1e-3
    RETRY_BACKOFF_CAP = 4e-3

    def __init__(self, *, k_pess: int = K_PESS_DEFAULT,
                 m_opt: int = M_OPT_DEFAULT):
        self._mu = threading.Lock()
        self.tables: dict[str, Table] = {}
        self._tx_ids = itertools.count(1)
        self._priorities = itertools.count(1)
        self.k_pess = k_pess
        self.m_opt = m_opt
        self._shield_mu = threading.Lock()
        self._shield_depth = 0
        self._shield_ambient = 0.0

    def _shield_enter(self):
        with self._shield_mu:
            self._shield_depth += 1
            if self._shield_depth == 1:
                self._shield_ambient = sys.getswitchinterval()
                if self._shield_ambient < self.COMMIT_SHIELD_SECS:
                    sys.setswitchinterval(self.COMMIT_SHIELD_SECS)

    def _shield_exit(self):
        with self._shield_mu:
            self._shield_depth -= 1
            if (self._shield_depth == 0
                    and self._shield_ambient < self.COMMIT_SHIELD_SECS):
                sys.setswitchinterval(self._shield_ambient)

    def create_table(self, schema: TableSchema) -> Table:
        with self._mu:
            if schema.name in self.tables:
                raise ValueError(f"table {schema.name} already exists")
            table = Table(schema, len(self.tables), self.k_pess, self.m_opt)
            self.tables[schema.name] = table
            return table

    def table(self, name: str) -> Table:
        return self.tables[name]

    def begin(self, cm_priority: int | None = None) -> TxContext:
        if cm_priority is None:
            cm_priority = next(self._priorities)
        return TxContext(self, next(self._tx_ids), cm_priority)

    # -- commit pipeline ----------------------------------------------------

    def commit(self, ctx: TxContext):
        """Run the commit pipeline; returns Committed or Aborted(reason)."""
        self._shield_enter()
        try:
            return self._commit_pipeline(ctx)
        finally:
            self._shield_exit()

    def _commit_pipeline(self, ctx: TxContext):
        ctx._check_active()
        if ctx.wounded:
            return self.abort(ctx, AbortReason.WOUNDED)
        # phase 1: lock buffered writes in global key order
        pending = [we for we in ctx.write_set.values() if not we.locked]
        pending.sort(key=lambda we: we.sortkey)
        for we in pending:
            if not self._lock_write(ctx, we):
                return self.abort(ctx, AbortReason.LOCK_BUSY)
            we.locked = True
        # phase 2: TicToc commit timestamp
        cts = 0
        has_tictoc = False
        for re in ctx.read_set.values():
            if re.policy is PolicyId.TICTOC and re.obs is not None:
                has_tictoc = True
                if re.obs > cts:
                    cts = re.obs
        for we in ctx.write_set.values():
            if we.policy is PolicyId.TICTOC:
                has_tictoc = True
                # we hold the lock, so rts is stable
                if we.word.rts + 1 > cts:
                    cts = we.word.rts + 1
        ctx.commit_ts = cts if has_tictoc else None
        # phase 3: validate reads in first-access order
        for re in ctx.read_set.values():
            reason = self._validate_read(ctx, re, cts)
            if reason is not None:
                if re.policy is PolicyId.ADAPTIVE:
                    re.word.transition(TransitionEvent.ABORT_BLAMED)
                return self.abort(ctx, reason)
        # phase 4: scans re-run, absences re-checked
        for sr in ctx.scan_set:
            if self._scan_fingerprint(ctx, sr) != sr.fingerprint:
                return self.abort(ctx, AbortReason.SCAN_VALIDATION)
        for table, key in ctx.absent_set:
            row = table.lookup(key)
            if row is not None and row.pending_by is None:
                return self.abort(ctx, AbortReason.SCAN_VALIDATION)
        # phase 5: install values, reveal inserts, publish words
        for we in ctx.write_set.values():
            if we.values:
                cols = we.row.cols
                for ci, v in we.values.items():
                    cols[ci] = v
        for _, _, row in ctx.insert_rows:
            row.pending_by = None
        for we in ctx.write_set.values():
            word = we.word
            if isinstance(word, OccVersion):
                word.unlock_bump()
            elif isinstance(word, TicTocStamp):
                word.install(cts)
            else:
                word.release(LockKind.WRITE, bump=True)
        for re in ctx.read_set.values():
            if re.grant:
                re.word.release(LockKind.READ)
        seen = set()
        for re in ctx.read_set.values():
            if re.policy is PolicyId.ADAPTIVE and re.word not in seen:
                seen.add(re.word)
                re.word.transition(TransitionEvent.CLEAN_ACCESS)
        for we in ctx.write_set.values():
            if we.policy is PolicyId.ADAPTIVE and we.word not in seen:
                seen.add(we.word)
                we.word.transition(TransitionEvent.CLEAN_ACCESS)
        ctx.active = False
        return Committed(ctx.commit_ts)

    def _lock_write(self, ctx, we) -> bool:
        word = we.word
        if we.policy in (PolicyId.TWO_PL, PolicyId.ADAPTIVE):
            re = ctx.read_set.get(word)
            if re is not None and re.grant:
                if not word.try_upgrade(ctx):
                    return False
                re.grant = False
                re.obs = None
                return True
            return word.try_acquire(LockKind.WRITE, ctx)
        return word.try_lock(ctx)

    def _validate_read(self, ctx, re, cts) -> AbortReason | None:
        if re.grant or re.obs is None:
            return None
        word = re.word
        if re.policy is PolicyId.TICTOC:
            if word in ctx.write_set:
                # own lock held: wts equality is the whole check
                return None if word.wts == re.obs \
                    else AbortReason.RTS_EXTENSION_FAILED
            if re.obs_rts >= cts:
                return None
            if word.extend_rts(re.obs, cts, owner=ctx):
                return None
            return AbortReason.RTS_EXTENSION_FAILED
        if isinstance(word, OccVersion):
            locked, cur, owner = word.snapshot()
        else:
            locked, _, cur, owner = word.snapshot()
        if cur != re.obs:
            return AbortReason.READ_VALIDATION
        if locked and owner is not ctx:
            return AbortReason.READ_VALIDATION
        return None

    def _scan_fingerprint(self, ctx, sr):
        """Re-evaluate a recorded scan without tracking or waiting."""
        cur = []
        for key, row in sr.table.range(sr.lo, sr.hi, sr.reverse):
            if sr.limit is not None and len(cur) >= sr.limit:
                break
            if row.pending_by is ctx:
                cur.append((key, _OWN))
                continue
            if row.pending_by is not None:
                continue
            parts = []
            for word in row.words:
                if isinstance(word, OccVersion):
                    locked, c, owner = word.snapshot()
                    parts.append(_BUSY if locked and owner is not ctx else c)
                elif isinstance(word, TicTocStamp):
                    locked, wts, _, owner = word.snapshot()
                    parts.append(_BUSY if locked and owner is not ctx else wts)
                else:
                    writer, _, v, owner = word.snapshot()
                    parts.append(_BUSY if writer and owner is not ctx else v)
            cur.append((key, tuple(parts)))
        return tuple(cur)

    def abort(self, ctx: TxContext, reason: AbortReason) -> Aborted:
        ctx._check_active()
        for we in ctx.write_set.values():
            if not we.locked:
                continue
            word = we.word
            if isinstance(word, (OccVersion, TicTocStamp)):
                word.unlock()
            else:
                word.release(LockKind.WRITE, bump=False)
        for re in ctx.read_set.values():
            if re.grant:
                re.word.release(LockKind.READ)
        for table, key, row in ctx.insert_rows:
            table.remove_pending(key, row)
        ctx.read_set.clear()
        ctx.write_set.clear()
        ctx.scan_set.clear()
        ctx.absent_set.clear()
        ctx.insert_rows.clear()
        ctx.active = False
        return Aborted(reason)

    # -- driver ---------------------------------------------------------------

    def run_transaction(self, body, *, cm_priority: int | None = None,
                        max_retries: int | None = None,
                        stop=None) -> TxResult:
        """Run body(ctx) to a Committed outcome, retrying aborted attempts.

        Retries keep the first attempt's cm_priority, so a transaction ages
        rather than being reborn younger. Backoff is full-jitter exponential
        from RETRY_BACKOFF_BASE, doubling to RETRY_BACKOFF_CAP. UserAbort
        rolls back and returns without retrying.
        """
        reasons = []
        prio = cm_priority
        backoff = self.RETRY_BACKOFF_BASE
        while True:
            ctx = self.begin(prio)
            prio = ctx.cm_priority
            try:
                value = body(ctx)
            except ConflictError as e:
                outcome = self.abort(ctx, e.reason)
            except UserAbort:
                self.abort(ctx, AbortReason.USER_ABORT)
                reasons.append(AbortReason.USER_ABORT)
                return TxResult(Aborted(AbortReason.USER_ABORT),
                                len(reasons) - 1, None, reasons)
            except BaseException:
                if ctx.active:
                    self.abort(ctx, AbortReason.USER_ABORT)
                raise
            else:
                outcome = self.commit(ctx)
                if isinstance(outcome, Committed):
                    return TxResult(outcome, len(reasons), value, reasons)
            reasons.append(outcome.reason)
            # retries counts attempts beyond the first, aborted or not
            if max_retries is not None and len(reasons) > max_retries:
                return TxResult(outcome, len(reasons) - 1, None, reasons)
            if stop is not None and stop():
                return TxResult(outcome, len(reasons) - 1, None, reasons)
            time.sleep(random.uniform(0.0, backoff))
            backoff = min(backoff * 2.0, self.RETRY_BACKOFF_CAP)

    # -- whole-store inspection ----------------------------------------------

    def snapshot(self) -> dict:
        """Committed state only: {table: {key: value tuple}}, keys ordered."""
        out = {}
        for name in sorted(self.tables):
            t = self.tables[name]
            out[name] = {k: tuple(r.cols) for k, r in t.items()
                         if r.pending_by is None}
        return out

    def assert_quiescent(self) -> int:
        """Verify no word is held and no insert is pending; returns words checked."""
        checked = 0
        for t in self.tables.values():
            for key, row in t.items():
                if row.pending_by is not None:
                    raise AssertionError(
                        f"pending row {key!r} left in {t.schema.name}")
                for w in row.words:
                    checked += 1
                    if isinstance(w, OccVersion):
                        locked, _, _ = w.snapshot()
                        bad = locked
                    elif isinstance(w, TicTocStamp):
                        locked, wts, rts, _ = w.snapshot()
                        bad = locked or rts < wts
                    else:
                        writer, readers, _, _ = w.snapshot()
                        bad = writer or readers
                    if bad:
                        raise AssertionError(
                            f"held word on {t.schema.name} key {key!r}")
        return checked
