"""Per-policy conflict behavior and cross-policy agreement."""
import random
import sys
import threading
import time

import pytest

from grainstore.engine import Arbitration, Engine, cm_resolve
from grainstore.outcomes import (Aborted, AbortReason, Committed,
                                 ConflictError)
from grainstore.table import TableSchema, pack_key
from grainstore.words import GroupLayout, Mode, PolicyId


def fresh(policy, groups=None, rows=10, ncols=2, name="t", **engine_kw):
    eng = Engine(**engine_kw)
    t = add_table(eng, policy, groups=groups, rows=rows, ncols=ncols,
                  name=name)
    return eng, t


def add_table(eng, policy, groups=None, rows=10, ncols=2, name="t"):
    layout = GroupLayout(groups) if groups else GroupLayout.coarse(ncols)
    names = tuple(f"c{i}" for i in range(ncols))
    t = eng.create_table(TableSchema(name, names, layout, policy))
    for i in range(rows):
        t.load_insert(pack_key(i), [i * 10 + j for j in range(ncols)])
    return t


# -- contention manager ------------------------------------------------------


def test_cm_resolve_prefers_older():
    assert cm_resolve(owner_priority=5, requester_priority=3) \
        is Arbitration.WOUND_OWNER
    assert cm_resolve(owner_priority=3, requester_priority=5) \
        is Arbitration.ABORT_SELF
    assert cm_resolve(owner_priority=3, requester_priority=3) \
        is Arbitration.ABORT_SELF


# -- OCC ----------------------------------------------------------------------


def test_occ_stale_read_aborts():
    eng, t = fresh(PolicyId.OCC)
    reader = eng.begin()
    reader.get(t, pack_key(1))
    writer = eng.begin()
    writer.update(t, pack_key(1), {0: 99})
    eng.commit(writer)
    assert eng.commit(reader) == Aborted(AbortReason.READ_VALIDATION)
    eng.assert_quiescent()


def test_occ_blind_write_survives_interleaved_writer():
    # no read of the overwritten value, so last-writer-wins is serializable
    eng, t = fresh(PolicyId.OCC)
    t1 = eng.begin()
    t1.update(t, pack_key(1), {0: 111})
    t2 = eng.begin()
    t2.update(t, pack_key(1), {0: 222})
    eng.commit(t2)
    assert isinstance(eng.commit(t1), Committed)
    check = eng.begin()
    assert check.get(t, pack_key(1), cols=(0,)) == (111,)
    eng.commit(check)


def test_occ_fine_groups_dodge_false_conflict():
    # disjoint column groups: reader of c0 ignores writes to c1
    eng, t = fresh(PolicyId.OCC, groups=[(0,), (1,)])
    reader = eng.begin()
    reader.get(t, pack_key(1), cols=(0,))
    writer = eng.begin()
    writer.update(t, pack_key(1), {1: 99})
    eng.commit(writer)
    assert isinstance(eng.commit(reader), Committed)


def test_occ_coarse_group_takes_false_conflict():
    # same access pattern, single group: the write invalidates the read
    eng, t = fresh(PolicyId.OCC, groups=[(0, 1)])
    reader = eng.begin()
    reader.get(t, pack_key(1), cols=(0,))
    writer = eng.begin()
    writer.update(t, pack_key(1), {1: 99})
    eng.commit(writer)
    assert eng.commit(reader) == Aborted(AbortReason.READ_VALIDATION)


def test_occ_reread_fails_fast_on_staleness():
    eng, t = fresh(PolicyId.OCC)
    reader = eng.begin()
    reader.get(t, pack_key(2))
    writer = eng.begin()
    writer.update(t, pack_key(2), {0: 5})
    eng.commit(writer)
    with pytest.raises(ConflictError) as ei:
        reader.get(t, pack_key(2))
    assert ei.value.reason is AbortReason.READ_VALIDATION
    eng.abort(reader, ei.value.reason)
    eng.assert_quiescent()


# -- TicToc -------------------------------------------------------------------


def test_tictoc_commit_ts_and_stamp_install():
    eng, t = fresh(PolicyId.TICTOC)
    a, b = pack_key(1), pack_key(2)
    tx = eng.begin()
    tx.get(t, a)
    tx.update(t, b, {0: 7})
    out = eng.commit(tx)
    # read wts 0, write rts 0: ts = max(0, 0 + 1)
    assert out == Committed(1)
    wa = t.lookup(a).words[0]
    wb = t.lookup(b).words[0]
    assert (wa.wts, wa.rts) == (0, 1)  # rts extended to cover the read
    assert (wb.wts, wb.rts) == (1, 1)


def test_tictoc_read_under_extended_rts_needs_no_extension():
    eng, t = fresh(PolicyId.TICTOC)
    a, b, c = pack_key(1), pack_key(2), pack_key(3)
    warm = eng.begin()
    warm.get(t, a)
    warm.update(t, b, {0: 1})
    assert eng.commit(warm) == Committed(1)
    later = eng.begin()
    later.get(t, a)          # observes wts 0, rts 1
    later.update(t, c, {0: 2})
    assert eng.commit(later) == Committed(1)  # 1 <= rts(a): valid as-is
    assert t.lookup(a).words[0].rts == 1


def test_tictoc_wts_change_fails_extension():
    eng, t = fresh(PolicyId.TICTOC)
    a, b = pack_key(1), pack_key(2)
    reader = eng.begin()
    reader.get(t, a)
    reader.update(t, b, {0: 1})
    writer = eng.begin()
    writer.update(t, a, {0: 9})
    assert eng.commit(writer) == Committed(1)
    assert eng.commit(reader) == Aborted(AbortReason.RTS_EXTENSION_FAILED)
    eng.assert_quiescent()


def test_tictoc_writer_timestamps_strictly_increase():
    eng, t = fresh(PolicyId.TICTOC)
    key = pack_key(4)
    seen = []
    for i in range(5):
        tx = eng.begin()
        tx.update(t, key, {0: i})
        out = eng.commit(tx)
        seen.append(out.commit_ts)
    assert seen == sorted(seen) and len(set(seen)) == 5
    word = t.lookup(key).words[0]
    assert word.wts == seen[-1] == word.rts


def test_tictoc_rmw_validates_by_wts_equality():
    eng, t = fresh(PolicyId.TICTOC)
    key = pack_key(5)

    def body(ctx):
        (v,) = ctx.get(t, key, cols=(0,))
        ctx.update(t, key, {0: v + 1})

    for _ in range(3):
        assert eng.run_transaction(body).committed
    check = eng.begin()
    assert check.get(t, key, cols=(0,)) == (53,)
    eng.commit(check)
    eng.assert_quiescent()


def test_tictoc_ts_zero_when_nothing_tictoc_touched():
    eng, t = fresh(PolicyId.TICTOC)
    tx = eng.begin()
    out = eng.commit(tx)  # empty transaction
    assert out == Committed(None)


# -- 2PL ----------------------------------------------------------------------


def test_2pl_reader_blocks_writer_no_wait():
    eng, t = fresh(PolicyId.TWO_PL)
    reader = eng.begin()
    reader.get(t, pack_key(1))
    writer = eng.begin()
    with pytest.raises(ConflictError) as ei:
        writer.update(t, pack_key(1), {0: 1})
    assert ei.value.reason is AbortReason.LOCK_BUSY
    eng.abort(writer, ei.value.reason)
    eng.commit(reader)
    eng.assert_quiescent()


def test_2pl_writer_blocks_reader_no_wait():
    eng, t = fresh(PolicyId.TWO_PL)
    writer = eng.begin()
    writer.update(t, pack_key(1), {0: 1})
    reader = eng.begin()
    with pytest.raises(ConflictError) as ei:
        reader.get(t, pack_key(1))
    assert ei.value.reason is AbortReason.LOCK_BUSY
    eng.abort(reader, ei.value.reason)
    eng.commit(writer)
    eng.assert_quiescent()


def test_2pl_concurrent_readers_share():
    eng, t = fresh(PolicyId.TWO_PL)
    r1, r2 = eng.begin(), eng.begin()
    assert r1.get(t, pack_key(1)) == r2.get(t, pack_key(1))
    eng.commit(r1)
    eng.commit(r2)
    eng.assert_quiescent()


def test_2pl_sole_reader_upgrades():
    eng, t = fresh(PolicyId.TWO_PL)
    tx = eng.begin()
    (v,) = tx.get(t, pack_key(1), cols=(0,))
    tx.update(t, pack_key(1), {0: v + 1})
    assert isinstance(eng.commit(tx), Committed)
    eng.assert_quiescent()


def test_2pl_upgrade_denied_with_second_reader():
    eng, t = fresh(PolicyId.TWO_PL)
    tx = eng.begin()
    tx.get(t, pack_key(1))
    other = eng.begin()
    other.get(t, pack_key(1))
    with pytest.raises(ConflictError) as ei:
        tx.update(t, pack_key(1), {0: 1})
    assert ei.value.reason is AbortReason.LOCK_BUSY
    eng.abort(tx, ei.value.reason)
    eng.commit(other)
    eng.assert_quiescent()


def test_2pl_stress_emits_only_lock_taxonomy():
    # every abort must be LOCK_BUSY (or none): no validation-style reasons
    eng, t = fresh(PolicyId.TWO_PL, rows=4)
    reasons = []
    mu = threading.Lock()
    old = sys.getswitchinterval()
    sys.setswitchinterval(2e-4)
    try:
        def worker(wid):
            rng = random.Random(1000 + wid)
            for _ in range(120):
                key = pack_key(rng.randrange(4))

                def body(ctx):
                    (v,) = ctx.get(t, key, cols=(0,))
                    ctx.update(t, key, {0: v + 1})

                res = eng.run_transaction(body)
                assert res.committed
                with mu:
                    reasons.extend(res.abort_reasons)

        ts = [threading.Thread(target=worker, args=(w,)) for w in range(4)]
        for th in ts:
            th.start()
        for th in ts:
            th.join()
    finally:
        sys.setswitchinterval(old)
    assert set(reasons) <= {AbortReason.LOCK_BUSY}
    total = 0
    check = eng.begin()
    for i in range(4):
        total += check.get(t, pack_key(i), cols=(0,))[0] - i * 10
    eng.commit(check)
    assert total == 4 * 120
    eng.assert_quiescent()


# -- SwissTM ------------------------------------------------------------------


def test_swiss_younger_writer_aborts_self():
    eng, t = fresh(PolicyId.SWISSTM)
    older = eng.begin()
    older.update(t, pack_key(1), {0: 1})
    younger = eng.begin()
    with pytest.raises(ConflictError) as ei:
        younger.update(t, pack_key(1), {0: 2})
    assert ei.value.reason is AbortReason.LOCK_BUSY
    eng.abort(younger, ei.value.reason)
    eng.commit(older)
    check = eng.begin()
    assert check.get(t, pack_key(1), cols=(0,)) == (1,)
    eng.commit(check)
    eng.assert_quiescent()


def test_swiss_younger_reader_aborts_self():
    eng, t = fresh(PolicyId.SWISSTM)
    older = eng.begin()
    older.update(t, pack_key(1), {0: 1})
    younger = eng.begin()
    with pytest.raises(ConflictError) as ei:
        younger.get(t, pack_key(1))
    assert ei.value.reason is AbortReason.LOCK_BUSY
    eng.abort(younger, ei.value.reason)
    eng.commit(older)
    eng.assert_quiescent()


def test_swiss_older_wounds_lock_holder():
    eng, t = fresh(PolicyId.SWISSTM)
    older = eng.begin()
    younger = eng.begin()
    younger.update(t, pack_key(1), {0: 111})
    seen = []

    def young_side():
        while not younger.wounded:
            time.sleep(0.0005)
        try:
            younger.get(t, pack_key(2))
        except ConflictError as e:
            seen.append(e.reason)
            eng.abort(younger, e.reason)

    th = threading.Thread(target=young_side)
    th.start()
    # wounds the younger holder, then waits for it to notice and release
    older.update(t, pack_key(1), {0: 222})
    th.join(timeout=30)
    assert not th.is_alive()
    assert seen == [AbortReason.WOUNDED]
    assert isinstance(eng.commit(older), Committed)
    check = eng.begin()
    assert check.get(t, pack_key(1), cols=(0,)) == (222,)
    eng.commit(check)
    eng.assert_quiescent()


def test_swiss_wounded_polled_at_every_operation():
    eng, t = fresh(PolicyId.SWISSTM)
    for op in ("get", "update", "insert", "scan"):
        ctx = eng.begin()
        ctx.wounded = True
        with pytest.raises(ConflictError) as ei:
            if op == "get":
                ctx.get(t, pack_key(0))
            elif op == "update":
                ctx.update(t, pack_key(0), {0: 1})
            elif op == "insert":
                ctx.insert(t, pack_key(77), [0, 0])
            else:
                ctx.scan(t, pack_key(0), pack_key(3))
        assert ei.value.reason is AbortReason.WOUNDED
        eng.abort(ctx, ei.value.reason)
    eng.assert_quiescent()


def test_swiss_buffered_write_invisible_until_commit():
    eng, t = fresh(PolicyId.SWISSTM)
    tx = eng.begin()
    tx.update(t, pack_key(3), {0: 999})
    assert tx.get(t, pack_key(3), cols=(0,)) == (999,)
    assert t.lookup(pack_key(3)).cols[0] == 30  # store unchanged while locked
    eng.commit(tx)
    assert t.lookup(pack_key(3)).cols[0] == 999


def test_swiss_stress_exact_counters():
    eng, t = fresh(PolicyId.SWISSTM, rows=3)
    old = sys.getswitchinterval()
    sys.setswitchinterval(2e-4)
    try:
        def worker(wid):
            rng = random.Random(2000 + wid)
            for _ in range(100):
                key = pack_key(rng.randrange(3))

                def body(ctx):
                    (v,) = ctx.get(t, key, cols=(0,))
                    ctx.update(t, key, {0: v + 1})

                assert eng.run_transaction(body).committed

        ts = [threading.Thread(target=worker, args=(w,)) for w in range(4)]
        for th in ts:
            th.start()
        for th in ts:
            th.join()
    finally:
        sys.setswitchinterval(old)
    check = eng.begin()
    total = sum(check.get(t, pack_key(i), cols=(0,))[0] - i * 10
                for i in range(3))
    eng.commit(check)
    assert total == 4 * 100
    eng.assert_quiescent()


# -- adaptive -----------------------------------------------------------------


def test_adaptive_optimistic_start_validates_like_occ():
    eng, t = fresh(PolicyId.ADAPTIVE)
    word = t.lookup(pack_key(1)).words[0]
    assert word.mode is Mode.OPTIMISTIC
    reader = eng.begin()
    reader.get(t, pack_key(1))
    writer = eng.begin()
    writer.update(t, pack_key(1), {0: 9})
    eng.commit(writer)
    assert eng.commit(reader) == Aborted(AbortReason.READ_VALIDATION)
    assert word.contention == 1  # blamed, but below the default threshold
    assert word.mode is Mode.OPTIMISTIC


def test_adaptive_flips_pessimistic_after_k_blamed_aborts():
    eng, t = fresh(PolicyId.ADAPTIVE, k_pess=2)
    key = pack_key(1)
    word = t.lookup(key).words[0]
    for i in range(2):
        reader = eng.begin()
        reader.get(t, key)
        writer = eng.begin()
        writer.update(t, key, {0: i})
        eng.commit(writer)
        assert eng.commit(reader) == Aborted(AbortReason.READ_VALIDATION)
    assert word.mode is Mode.PESSIMISTIC
    # pessimistic writers now hold the word for the whole body
    w2 = eng.begin()
    w2.update(t, key, {0: 5})
    assert word.writer
    r2 = eng.begin()
    with pytest.raises(ConflictError) as ei:
        r2.get(t, key)
    assert ei.value.reason is AbortReason.LOCK_BUSY
    eng.abort(r2, ei.value.reason)
    eng.commit(w2)
    eng.assert_quiescent()


def test_adaptive_returns_optimistic_after_clean_streak():
    eng, t = fresh(PolicyId.ADAPTIVE, k_pess=1, m_opt=2)
    key = pack_key(1)
    word = t.lookup(key).words[0]
    reader = eng.begin()
    reader.get(t, key)
    writer = eng.begin()
    writer.update(t, key, {0: 1})
    eng.commit(writer)
    eng.commit(reader)
    assert word.mode is Mode.PESSIMISTIC
    for _ in range(2):
        tx = eng.begin()
        tx.get(t, key)
        eng.commit(tx)
    assert word.mode is Mode.OPTIMISTIC
    # optimistic writers buffer again instead of locking eagerly
    w2 = eng.begin()
    w2.update(t, key, {0: 2})
    assert not word.writer
    eng.commit(w2)
    eng.assert_quiescent()


def test_adaptive_blames_only_first_failing_entry():
    eng, t = fresh(PolicyId.ADAPTIVE)
    k1, k2 = pack_key(1), pack_key(2)
    reader = eng.begin()
    reader.get(t, k1)
    reader.get(t, k2)
    writer = eng.begin()
    writer.update(t, k1, {0: 9})
    writer.update(t, k2, {0: 9})
    eng.commit(writer)
    assert eng.commit(reader) == Aborted(AbortReason.READ_VALIDATION)
    assert t.lookup(k1).words[0].contention == 1
    assert t.lookup(k2).words[0].contention == 0


def test_adaptive_lock_busy_is_not_blamed():
    eng, t = fresh(PolicyId.ADAPTIVE, k_pess=1)
    key = pack_key(1)
    word = t.lookup(key).words[0]
    # force pessimistic first
    r = eng.begin()
    r.get(t, key)
    w = eng.begin()
    w.update(t, key, {0: 1})
    eng.commit(w)
    eng.commit(r)
    assert word.mode is Mode.PESSIMISTIC
    holder = eng.begin()
    holder.update(t, key, {0: 2})
    blocked = eng.begin()
    with pytest.raises(ConflictError):
        blocked.get(t, key)
    eng.abort(blocked, AbortReason.LOCK_BUSY)
    streak_before = word.contention
    eng.commit(holder)
    # LOCK_BUSY never advances the blame counter
    assert word.contention in (streak_before, streak_before + 1)  # +1: holder's clean access
    eng.assert_quiescent()


def test_adaptive_stress_exact_counters():
    eng, t = fresh(PolicyId.ADAPTIVE, rows=3, k_pess=1, m_opt=4)
    old = sys.getswitchinterval()
    sys.setswitchinterval(2e-4)
    try:
        def worker(wid):
            rng = random.Random(3000 + wid)
            for _ in range(100):
                key = pack_key(rng.randrange(3))

                def body(ctx):
                    (v,) = ctx.get(t, key, cols=(0,))
                    ctx.update(t, key, {0: v + 1})

                assert eng.run_transaction(body).committed

        ts = [threading.Thread(target=worker, args=(w,)) for w in range(4)]
        for th in ts:
            th.start()
        for th in ts:
            th.join()
    finally:
        sys.setswitchinterval(old)
    check = eng.begin()
    total = sum(check.get(t, pack_key(i), cols=(0,))[0] - i * 10
                for i in range(3))
    eng.commit(check)
    assert total == 4 * 100
    eng.assert_quiescent()


# -- mixed policies in one transaction ---------------------------------------


def test_mixed_occ_and_2pl_commit_atomically():
    eng = Engine()
    t_occ = add_table(eng, PolicyId.OCC, name="a")
    t_2pl = add_table(eng, PolicyId.TWO_PL, name="b")
    tx = eng.begin()
    (v,) = tx.get(t_occ, pack_key(1), cols=(0,))
    tx.update(t_2pl, pack_key(1), {0: v + 1})
    assert isinstance(eng.commit(tx), Committed)
    check = eng.begin()
    assert check.get(t_2pl, pack_key(1), cols=(0,)) == (11,)
    eng.commit(check)
    eng.assert_quiescent()


def test_mixed_abort_releases_grants_on_other_tables():
    eng = Engine()
    t_occ = add_table(eng, PolicyId.OCC, name="a")
    t_2pl = add_table(eng, PolicyId.TWO_PL, name="b")
    tx = eng.begin()
    tx.get(t_occ, pack_key(1))
    tx.update(t_2pl, pack_key(2), {0: 1})  # write grant held eagerly
    intruder = eng.begin()
    intruder.update(t_occ, pack_key(1), {0: 9})
    eng.commit(intruder)
    assert eng.commit(tx) == Aborted(AbortReason.READ_VALIDATION)
    free = eng.begin()
    free.update(t_2pl, pack_key(2), {0: 5})  # grant must be gone
    assert isinstance(eng.commit(free), Committed)
    eng.assert_quiescent()


def test_mixed_commit_ts_only_from_tictoc_entries():
    eng = Engine()
    t_occ = add_table(eng, PolicyId.OCC, name="a")
    t_tt = add_table(eng, PolicyId.TICTOC, name="b")
    occ_only = eng.begin()
    occ_only.update(t_occ, pack_key(1), {0: 1})
    assert eng.commit(occ_only) == Committed(None)
    both = eng.begin()
    both.update(t_occ, pack_key(2), {0: 1})
    both.update(t_tt, pack_key(2), {0: 1})
    assert eng.commit(both) == Committed(1)


# -- cross-policy agreement ---------------------------------------------------


def test_policies_agree_on_serial_history():
    # identical seeded single-threaded workload must leave identical data
    snapshots = {}
    for policy in PolicyId:
        eng, t = fresh(policy, rows=20, ncols=2)
        rng = random.Random(42)
        next_key = 100
        for _ in range(200):
            ops = rng.randrange(1, 4)

            def body(ctx, ops=ops, rng=rng):
                nonlocal next_key
                for _ in range(ops):
                    kind = rng.random()
                    if kind < 0.45:
                        k = pack_key(rng.randrange(20))
                        (v,) = ctx.get(t, k, cols=(0,))
                        ctx.update(t, k, {0: v + 1})
                    elif kind < 0.75:
                        k = pack_key(rng.randrange(20))
                        ctx.update(t, k, {1: rng.randrange(1000)})
                    elif kind < 0.9:
                        ctx.insert(t, pack_key(next_key),
                                   [next_key, rng.randrange(1000)])
                        next_key += 1
                    else:
                        lo = rng.randrange(15)
                        ctx.scan(t, pack_key(lo), pack_key(lo + 4))

            res = eng.run_transaction(body)
            assert res.committed and res.retries == 0
        eng.assert_quiescent()
        snapshots[policy] = eng.snapshot()
    base = snapshots[PolicyId.OCC]
    for policy, snap in snapshots.items():
        assert snap == base, f"{policy} diverged"
