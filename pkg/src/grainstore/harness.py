"""Scripted multi-transaction interleavings on a single driver thread.

Each step runs one operation of one labeled transaction, so exact
interleavings reproduce without sleep-based races; every engine operation
is synchronous and the commit protocol runs inline, which makes the
single-thread driver equivalent to a real interleaving. Aborts are final
inside a script (there is no retry loop): the first conflict a label hits
resolves it, its later data operations are skipped, and its COMMIT step
reports the already-recorded outcome. EXPECT steps assert on a label's
resolution and raise with a diff on mismatch.

Text form, one whitespace-separated step per line ('#' starts a comment):

    T1 READ   accounts 1 balance,note
    T2 WRITE  accounts 1 balance=70
    T1 INSERT log 4,1 7,0
    T1 SCAN   log 0 10 LIMIT 3 DESC
    T2 COMMIT
    T2 EXPECT COMMITTED 2
    T1 EXPECT ABORTED READ_VALIDATION

Keys are comma-separated ints (composite keys allowed); READ's column list
is comma-separated names or '*'; WRITE takes col=int pairs; INSERT takes
positional comma-separated int values.
"""
from __future__ import annotations

from .outcomes import Aborted, AbortReason, Committed, ConflictError
from .table import pack_key

_OPS = ("read", "write", "insert", "scan", "commit", "expect")


class Script:
    """Validated ordered list of (label, op, ...) steps."""

    def __init__(self, steps):
        steps = [tuple(s) for s in steps]
        committed = set()
        for i, step in enumerate(steps):
            if len(step) < 2 or step[1] not in _OPS:
                raise ValueError(f"step {i}: malformed {step!r}")
            label, op = step[0], step[1]
            if op == "expect":
                if label not in committed:
                    raise ValueError(
                        f"step {i}: EXPECT for {label} before its COMMIT")
            elif label in committed:
                raise ValueError(f"step {i}: {label} already committed")
            elif op == "commit":
                committed.add(label)
        self.steps = steps
        self.labels = tuple(dict.fromkeys(s[0] for s in steps))

    def __len__(self):
        return len(self.steps)


def _parse_key(tok: str) -> bytes:
    return pack_key(*(int(p) for p in tok.split(",")))


def parse_script(text: str) -> Script:
    """Build a Script from the one-step-per-line text form."""
    steps = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        try:
            label, op = toks[0], toks[1].lower()
            if op == "read":
                cols = None
                if len(toks) > 4 and toks[4] != "*":
                    cols = tuple(toks[4].split(","))
                steps.append((label, "read", toks[2], _parse_key(toks[3]),
                              cols))
            elif op == "write":
                vals = {}
                for pair in toks[4:]:
                    name, _, v = pair.partition("=")
                    vals[name] = int(v)
                if not vals:
                    raise ValueError("WRITE needs col=value pairs")
                steps.append((label, "write", toks[2], _parse_key(toks[3]),
                              vals))
            elif op == "insert":
                vals = [int(v) for v in toks[4].split(",")]
                steps.append((label, "insert", toks[2], _parse_key(toks[3]),
                              vals))
            elif op == "scan":
                limit, reverse = None, False
                rest = [t.lower() for t in toks[5:]]
                while rest:
                    tok = rest.pop(0)
                    if tok == "limit":
                        limit = int(rest.pop(0))
                    elif tok == "desc":
                        reverse = True
                    else:
                        raise ValueError(f"unknown SCAN modifier {tok!r}")
                steps.append((label, "scan", toks[2], _parse_key(toks[3]),
                              _parse_key(toks[4]), limit, reverse))
            elif op == "commit":
                steps.append((label, "commit"))
            elif op == "expect":
                kind = toks[2].lower()
                if kind == "committed":
                    ts = int(toks[3]) if len(toks) > 3 else None
                    steps.append((label, "expect", ("committed", ts)))
                elif kind == "aborted":
                    reason = AbortReason[toks[3]] if len(toks) > 3 else None
                    steps.append((label, "expect", ("aborted", reason)))
                else:
                    raise ValueError(f"EXPECT {kind!r}")
            else:
                raise ValueError(f"unknown op {op!r}")
        except (IndexError, KeyError, ValueError) as e:
            raise ValueError(f"script line {ln}: {raw.strip()!r}: {e}") from e
    return Script(steps)


def fmt_outcome(out) -> str:
    if isinstance(out, Committed):
        return "COMMITTED" if out.commit_ts is None \
            else f"COMMITTED(ts={out.commit_ts})"
    if isinstance(out, Aborted):
        return f"ABORTED({out.reason.name})"
    return "UNRESOLVED"


def _matches(want, got) -> bool:
    kind, detail = want
    if kind == "committed":
        return isinstance(got, Committed) and (
            detail is None or got.commit_ts == detail)
    return isinstance(got, Aborted) and (
        detail is None or got.reason is detail)


def scripted_run(engine, script: Script, trace: list | None = None) -> dict:
    """Execute a script; returns {label: outcome}.

    trace, when given, collects (step index, label, op, result) for READ
    and SCAN steps, which is how tests witness the values a transaction
    actually observed.
    """
    ctxs = {}
    outcomes = {}
    for i, step in enumerate(script.steps):
        label, op = step[0], step[1]
        if op == "expect":
            want = step[2]
            got = outcomes.get(label)
            if not _matches(want, got):
                wanted = want[1].name if want[0] == "aborted" and want[1] \
                    else (want[1] if want[1] is not None else "")
                lines = [f"step {i}: {label} expected "
                         f"{want[0].upper()}{f'({wanted})' if wanted else ''}"
                         f", got {fmt_outcome(got)}",
                         "outcomes so far:"]
                lines += [f"  {lb}: {fmt_outcome(o)}"
                          for lb, o in outcomes.items()]
                raise AssertionError("\n".join(lines))
            continue
        if label in outcomes:
            continue  # resolved by an earlier conflict; remaining steps skip
        ctx = ctxs.get(label)
        if ctx is None:
            ctx = ctxs[label] = engine.begin()
        if op == "commit":
            outcomes[label] = engine.commit(ctx)
            continue
        table = engine.table(step[2])
        schema = table.schema
        try:
            if op == "read":
                cols = None if step[4] is None else schema.cols(*step[4])
                result = ctx.get(table, step[3], cols=cols)
            elif op == "write":
                vals = {schema.col(n): v for n, v in step[4].items()}
                ctx.update(table, step[3], vals)
                result = None
            elif op == "insert":
                ctx.insert(table, step[3], step[4])
                result = None
            else:  # scan
                result = ctx.scan(table, step[3], step[4],
                                  reverse=step[6], limit=step[5])
        except ConflictError as e:
            outcomes[label] = engine.abort(ctx, e.reason)
            continue
        if trace is not None and op in ("read", "scan"):
            trace.append((i, label, op, result))
    # a label whose steps never reached COMMIT stays out of the map unless
    # a conflict resolved it; expose those as unresolved None entries
    for label in script.labels:
        outcomes.setdefault(label, None)
    return outcomes


def fixture(engine, rows: dict):
    """Load {table name: {key: values}} via non-transactional inserts.

    Keys may be bytes, ints, or int tuples; call on a quiesced engine
    before any scripted transactions run.
    """
    for tname, table_rows in rows.items():
        table = engine.table(tname)
        for key, values in table_rows.items():
            if isinstance(key, int):
                key = pack_key(key)
            elif isinstance(key, tuple):
                key = pack_key(*key)
            table.load_insert(key, values)
