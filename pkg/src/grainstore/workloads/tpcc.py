"""Inventory workload: warehouses, districts, customers, orders.

Three transaction profiles (new order, payment, order status) over eleven
tables. Money is integer cents, tax and discount rates are basis points,
so every conservation check is exact. All randomness flows from seeded
generators; timestamps are per-generator sequence numbers, never wall
clock, so a fixed seed reproduces the same database bit for bit.
"""
import random
from dataclasses import dataclass
from enum import Enum

from ..outcomes import (AbortReason, AbsentKeyError, ConflictError,
                        DuplicateKeyError, UserAbort)
from ..table import TableSchema, enc_str, key_range, pack_key
from ..words import GroupLayout, PolicyId

DISTRICTS_PER_W = 10

# column indices, one block per table
W_NAME, W_TAX, W_YTD = range(3)
D_NAME, D_TAX, D_NEXT_O_ID, D_YTD = range(4)
(C_FIRST, C_MIDDLE, C_LAST, C_CREDIT, C_CREDIT_LIM, C_DISCOUNT,
 C_BALANCE, C_YTD_PAYMENT, C_PAYMENT_CNT, C_DATA) = range(10)
O_C_ID, O_ENTRY_D, O_OL_CNT, O_ALL_LOCAL = range(4)
OL_I_ID, OL_SUPPLY_W, OL_QUANTITY, OL_AMOUNT = range(4)
I_NAME, I_PRICE, I_DATA = range(3)
S_QUANTITY, S_YTD, S_ORDER_CNT = range(3)
H_W, H_D, H_AMOUNT, H_DATE = range(4)

NAME_W = 16  # last/first name key width in the customer name index

SYLLABLES = ("BAR", "OUGHT", "ABLE", "PRI", "PRES",
             "ESE", "ANTI", "CALLY", "ATION", "EING")


def last_name(num: int) -> str:
    return (SYLLABLES[num // 100] + SYLLABLES[num // 10 % 10]
            + SYLLABLES[num % 10])


class TpccLayout(Enum):
    COARSE = "coarse"
    FINE_SPLIT = "fine_split"


@dataclass(frozen=True)
class TpccConfig:
    warehouses: int = 8
    layout: TpccLayout = TpccLayout.COARSE
    # new order, payment, order status; renormalized to sum to 1
    mix: tuple = (0.45, 0.43, 0.04)
    seed: int = 0
    # standard cardinalities; shrink only to make small deterministic runs
    customers_per_district: int = 3000
    items: int = 100_000

    def __post_init__(self):
        if self.warehouses < 1:
            raise ValueError("need at least one warehouse")
        if self.customers_per_district < 10 or self.items < 10:
            raise ValueError("cardinalities too small to draw inputs")
        if len(self.mix) != 3 or any(m < 0 for m in self.mix) \
                or sum(self.mix) <= 0:
            raise ValueError("mix must be three non-negative weights")
        total = sum(self.mix)
        object.__setattr__(self, "mix",
                           tuple(m / total for m in self.mix))

    @property
    def name_max(self) -> int:
        # highest last-name number guaranteed present in every district
        return min(999, self.customers_per_district - 1)

    @property
    def undelivered_tail(self) -> int:
        return self.customers_per_district * 3 // 10


def tpcc_schemas(layout: TpccLayout, policy: PolicyId) -> list:
    fine = layout is TpccLayout.FINE_SPLIT
    # the split isolates the payment-hot cents columns in their own group
    w_layout = GroupLayout([(0, 1), (2,)]) if fine else GroupLayout.coarse(3)
    d_layout = GroupLayout([(0, 1, 2), (3,)]) if fine else GroupLayout.coarse(4)
    c_layout = (GroupLayout([(0, 1, 2, 3, 4, 5), (6, 7, 8, 9)]) if fine
                else GroupLayout.coarse(10))
    return [
        TableSchema("warehouse", ("W_NAME", "W_TAX", "W_YTD"), w_layout,
                    policy, widths={"W_NAME": 10}),
        TableSchema("district", ("D_NAME", "D_TAX", "D_NEXT_O_ID", "D_YTD"),
                    d_layout, policy, widths={"D_NAME": 10}),
        TableSchema("customer",
                    ("C_FIRST", "C_MIDDLE", "C_LAST", "C_CREDIT",
                     "C_CREDIT_LIM", "C_DISCOUNT", "C_BALANCE",
                     "C_YTD_PAYMENT", "C_PAYMENT_CNT", "C_DATA"),
                    c_layout, policy,
                    widths={"C_FIRST": NAME_W, "C_MIDDLE": 2,
                            "C_LAST": NAME_W, "C_CREDIT": 2, "C_DATA": 24}),
        TableSchema("customer_name", ("C_ID",), GroupLayout.coarse(1),
                    policy),
        TableSchema("orders",
                    ("O_C_ID", "O_ENTRY_D", "O_OL_CNT", "O_ALL_LOCAL"),
                    GroupLayout.coarse(4), policy),
        TableSchema("order_cust", ("O_ID",), GroupLayout.coarse(1), policy),
        TableSchema("new_order", ("NO_F",), GroupLayout.coarse(1), policy),
        TableSchema("order_line",
                    ("OL_I_ID", "OL_SUPPLY_W", "OL_QUANTITY", "OL_AMOUNT"),
                    GroupLayout.coarse(4), policy),
        TableSchema("item", ("I_NAME", "I_PRICE", "I_DATA"),
                    GroupLayout.coarse(3), policy,
                    widths={"I_NAME": 14, "I_DATA": 24}),
        TableSchema("stock", ("S_QUANTITY", "S_YTD", "S_ORDER_CNT"),
                    GroupLayout.coarse(3), policy),
        TableSchema("history", ("H_W", "H_D", "H_AMOUNT", "H_DATE"),
                    GroupLayout.coarse(4), policy),
    ]


D_YTD_INIT = 3_000_000  # 30,000.00 per district, warehouse holds the sum


def tpcc_load(engine, config: TpccConfig, policy: PolicyId = PolicyId.OCC):
    for schema in tpcc_schemas(config.layout, policy):
        engine.create_table(schema)
    rng = random.Random(f"{config.seed}:tpcc-load")
    name_c = rng.randrange(256)
    ncust = config.customers_per_district
    tail_from = ncust - config.undelivered_tail

    item_t = engine.table("item")
    for i in range(1, config.items + 1):
        item_t.load_insert(pack_key(i), [
            f"item{i:06d}", rng.randint(100, 10_000),
            f"d{rng.randrange(10 ** 8):08d}"])

    wh_t, d_t = engine.table("warehouse"), engine.table("district")
    cust_t, name_t = engine.table("customer"), engine.table("customer_name")
    ord_t, oc_t = engine.table("orders"), engine.table("order_cust")
    no_t, ol_t = engine.table("new_order"), engine.table("order_line")
    stock_t = engine.table("stock")
    entry_seq = 0

    for w in range(1, config.warehouses + 1):
        wh_t.load_insert(pack_key(w), [
            f"WARE{w:04d}", rng.randint(0, 2000),
            D_YTD_INIT * DISTRICTS_PER_W])
        for i in range(1, config.items + 1):
            stock_t.load_insert(pack_key(w, i), [rng.randint(10, 100), 0, 0])
        for d in range(1, DISTRICTS_PER_W + 1):
            d_t.load_insert(pack_key(w, d), [
                f"DIST{d:04d}", rng.randint(0, 2000), ncust + 1, D_YTD_INIT])
            for c in range(1, ncust + 1):
                if c <= min(1000, ncust):
                    last = last_name(c - 1)
                else:
                    num = (((rng.randrange(256) | rng.randrange(1000))
                            + name_c) % 1000)
                    last = last_name(num)
                first = f"F{rng.randrange(10 ** 8):08d}"
                credit = "BC" if rng.random() < 0.10 else "GC"
                cust_t.load_insert(pack_key(w, d, c), [
                    first, "OE", last, credit, 5_000_000,
                    rng.randint(0, 5000), -1000, 1000, 1,
                    f"data{rng.randrange(10 ** 8):08d}"])
                name_t.load_insert(
                    pack_key(w, d, enc_str(last, NAME_W),
                             enc_str(first, NAME_W), c), [c])
            perm = list(range(1, ncust + 1))
            rng.shuffle(perm)
            for o in range(1, ncust + 1):
                c = perm[o - 1]
                ol_cnt = rng.randint(5, 15)
                entry_seq += 1
                ord_t.load_insert(pack_key(w, d, o),
                                  [c, entry_seq, ol_cnt, 1])
                oc_t.load_insert(pack_key(w, d, c, o), [o])
                if o > tail_from:
                    no_t.load_insert(pack_key(w, d, o), [1])
                for ol in range(1, ol_cnt + 1):
                    ol_t.load_insert(pack_key(w, d, o, ol), [
                        rng.randint(1, config.items), w, 5,
                        rng.randint(100, 99_999)])


# -- input generation ----------------------------------------------------------


@dataclass(frozen=True)
class NewOrderInputs:
    w: int
    d: int
    c: int
    lines: tuple  # (item_id, supply_w, quantity); item_id 0 forces rollback
    entry_d: int


@dataclass(frozen=True)
class PaymentInputs:
    w: int
    d: int
    c_w: int
    c_d: int
    by_name: bool
    c_last: str | None
    c_id: int | None
    amount: int
    h_date: int


@dataclass(frozen=True)
class OrderStatusInputs:
    w: int
    d: int
    by_name: bool
    c_last: str | None
    c_id: int | None


class TpccGen:
    """Per-worker input stream. NURand constants are shared (seed-derived)
    so every worker samples the same skewed hot sets."""

    __slots__ = ("cfg", "rng", "seq", "_c_last", "_c_id", "_i_id")

    def __init__(self, config: TpccConfig, worker_id: int = 0):
        self.cfg = config
        self.rng = random.Random(f"{config.seed}:tpcc:{worker_id}")
        base = random.Random(f"{config.seed}:nurand")
        self._c_last = base.randrange(256)
        self._c_id = base.randrange(1024)
        self._i_id = base.randrange(8192)
        self.seq = 0

    def _nurand(self, a, x, y, c):
        r = self.rng
        return (((r.randrange(a + 1) | r.randint(x, y)) + c) % (y - x + 1)) + x

    def _tick(self) -> int:
        self.seq += 1
        return self.seq

    def _customer_selector(self):
        if self.rng.random() < 0.60:
            num = self._nurand(255, 0, self.cfg.name_max, self._c_last)
            return True, last_name(num), None
        cid = self._nurand(1023, 1, self.cfg.customers_per_district,
                           self._c_id)
        return False, None, cid

    def mix_next(self) -> str:
        r = self.rng.random()
        if r < self.cfg.mix[0]:
            return "new_order"
        if r < self.cfg.mix[0] + self.cfg.mix[1]:
            return "payment"
        return "order_status"

    def new_order_inputs(self) -> NewOrderInputs:
        cfg, rng = self.cfg, self.rng
        w = rng.randint(1, cfg.warehouses)
        d = rng.randint(1, DISTRICTS_PER_W)
        c = self._nurand(1023, 1, cfg.customers_per_district, self._c_id)
        n = rng.randint(5, 15)
        rollback = rng.random() < 0.01
        lines = []
        for j in range(n):
            i_id = self._nurand(8191, 1, cfg.items, self._i_id)
            if rollback and j == n - 1:
                i_id = 0  # unused id, the body aborts on it
            supply = w
            if cfg.warehouses > 1 and rng.random() < 0.01:
                while supply == w:
                    supply = rng.randint(1, cfg.warehouses)
            lines.append((i_id, supply, rng.randint(1, 10)))
        return NewOrderInputs(w, d, c, tuple(lines), self._tick())

    def payment_inputs(self) -> PaymentInputs:
        cfg, rng = self.cfg, self.rng
        w = rng.randint(1, cfg.warehouses)
        d = rng.randint(1, DISTRICTS_PER_W)
        if cfg.warehouses > 1 and rng.random() < 0.15:
            c_w = w
            while c_w == w:
                c_w = rng.randint(1, cfg.warehouses)
            c_d = rng.randint(1, DISTRICTS_PER_W)
        else:
            c_w, c_d = w, d
        by_name, c_last, c_id = self._customer_selector()
        return PaymentInputs(w, d, c_w, c_d, by_name, c_last, c_id,
                             rng.randint(100, 500_000), self._tick())

    def order_status_inputs(self) -> OrderStatusInputs:
        w = self.rng.randint(1, self.cfg.warehouses)
        d = self.rng.randint(1, DISTRICTS_PER_W)
        by_name, c_last, c_id = self._customer_selector()
        return OrderStatusInputs(w, d, by_name, c_last, c_id)


# -- transaction bodies --------------------------------------------------------


def _stale_insert():
    # a duplicate key here proves the id we read was already consumed by a
    # committed rival, so the attempt is doomed at validation anyway
    return ConflictError(AbortReason.READ_VALIDATION)


def _find_customer(ctx, w, d, by_name, c_last, c_id) -> int:
    if not by_name:
        return c_id
    name_t = ctx.engine.table("customer_name")
    lo, hi = key_range(w, d, enc_str(c_last, NAME_W))
    rows = ctx.scan(name_t, lo, hi)
    if not rows:
        raise AbsentKeyError(f"no customer named {c_last!r} in {(w, d)}")
    # middle match in first-name order, position ceil(n/2)
    return rows[(len(rows) - 1) // 2][1][0]


def txn_new_order(ctx, inp: NewOrderInputs):
    eng = ctx.engine
    (w_tax,) = ctx.get(eng.table("warehouse"), pack_key(inp.w),
                       cols=(W_TAX,))
    (c_disc,) = ctx.get(eng.table("customer"), pack_key(inp.w, inp.d, inp.c),
                        cols=(C_DISCOUNT,))

    item_t, stock_t = eng.table("item"), eng.table("stock")
    total = 0
    lines = []
    for i_id, supply_w, qty in inp.lines:
        got = ctx.get(item_t, pack_key(i_id), cols=(I_PRICE,))
        if got is None:
            raise UserAbort("unused item id")
        (price,) = got
        skey = pack_key(supply_w, i_id)
        s_qty, s_ytd, s_cnt = ctx.get(stock_t, skey)
        new_qty = s_qty - qty if s_qty - qty >= 10 else s_qty - qty + 91
        ctx.update(stock_t, skey, {S_QUANTITY: new_qty, S_YTD: s_ytd + qty,
                                   S_ORDER_CNT: s_cnt + 1})
        amount = qty * price
        total += amount
        lines.append((i_id, supply_w, qty, amount))

    # Allocate the order id as late as possible. Every order in a district
    # races on D_NEXT_O_ID, so the window between reading it and committing
    # is pure contention; processing the lines first keeps it to the inserts
    # plus the commit itself.
    district = eng.table("district")
    dkey = pack_key(inp.w, inp.d)
    d_tax, o = ctx.get(district, dkey, cols=(D_TAX, D_NEXT_O_ID))
    ctx.update(district, dkey, {D_NEXT_O_ID: o + 1})

    all_local = int(all(sw == inp.w for _, sw, _ in inp.lines))
    okey = pack_key(inp.w, inp.d, o)
    ol_t = eng.table("order_line")
    try:
        ctx.insert(eng.table("orders"), okey,
                   [inp.c, inp.entry_d, len(inp.lines), all_local])
        ctx.insert(eng.table("new_order"), okey, [1])
        ctx.insert(eng.table("order_cust"),
                   pack_key(inp.w, inp.d, inp.c, o), [o])
        for ol, line in enumerate(lines, start=1):
            ctx.insert(ol_t, pack_key(inp.w, inp.d, o, ol), list(line))
    except DuplicateKeyError:
        raise _stale_insert() from None
    # discount and taxes in basis points, floor division keeps exact cents
    total = total * (10_000 - c_disc) * (10_000 + w_tax + d_tax) // 10 ** 8
    return o, total


def txn_payment(ctx, inp: PaymentInputs):
    eng = ctx.engine
    customer = eng.table("customer")
    c = _find_customer(ctx, inp.c_w, inp.c_d, inp.by_name,
                       inp.c_last, inp.c_id)
    ckey = pack_key(inp.c_w, inp.c_d, c)
    bal, ytd_p, cnt, credit = ctx.get(
        customer, ckey,
        cols=(C_BALANCE, C_YTD_PAYMENT, C_PAYMENT_CNT, C_CREDIT))
    new_cnt = cnt + 1
    upd = {C_BALANCE: bal - inp.amount, C_YTD_PAYMENT: ytd_p + inp.amount,
           C_PAYMENT_CNT: new_cnt}
    if credit == b"BC":
        upd[C_DATA] = (f"{c}|{inp.c_w}|{inp.c_d}|{inp.w}|{inp.d}|"
                       f"{inp.amount}")[:24]
    ctx.update(customer, ckey, upd)
    try:
        ctx.insert(eng.table("history"), pack_key(inp.c_w, inp.c_d, c,
                                                  new_cnt),
                   [inp.w, inp.d, inp.amount, inp.h_date])
    except DuplicateKeyError:
        raise _stale_insert() from None

    # the two hottest rows go last to shrink their conflict window
    district = eng.table("district")
    dkey = pack_key(inp.w, inp.d)
    (d_ytd,) = ctx.get(district, dkey, cols=(D_YTD,))
    ctx.update(district, dkey, {D_YTD: d_ytd + inp.amount})
    warehouse = eng.table("warehouse")
    wkey = pack_key(inp.w)
    (w_ytd,) = ctx.get(warehouse, wkey, cols=(W_YTD,))
    ctx.update(warehouse, wkey, {W_YTD: w_ytd + inp.amount})
    return c


def txn_order_status(ctx, inp: OrderStatusInputs):
    eng = ctx.engine
    c = _find_customer(ctx, inp.w, inp.d, inp.by_name, inp.c_last, inp.c_id)
    bal, first, middle, last = ctx.get(
        eng.table("customer"), pack_key(inp.w, inp.d, c),
        cols=(C_BALANCE, C_FIRST, C_MIDDLE, C_LAST))
    lo, hi = key_range(inp.w, inp.d, c)
    latest = ctx.scan(eng.table("order_cust"), lo, hi, reverse=True, limit=1)
    if not latest:
        raise AbsentKeyError(f"customer {(inp.w, inp.d, c)} has no orders")
    (o,) = latest[0][1]
    entry_d, ol_cnt = ctx.get(eng.table("orders"), pack_key(inp.w, inp.d, o),
                              cols=(O_ENTRY_D, O_OL_CNT))
    lo, hi = key_range(inp.w, inp.d, o)
    lines = ctx.scan(eng.table("order_line"), lo, hi)
    return c, bal, o, entry_d, ol_cnt, len(lines)


def run_one(engine, gen: TpccGen, kind: str, stop=None):
    """Draw inputs once, then retry the body on conflicts with those same
    inputs. Returns (kind, TxResult)."""
    if kind == "new_order":
        inp = gen.new_order_inputs()
        body = lambda ctx: txn_new_order(ctx, inp)
    elif kind == "payment":
        inp = gen.payment_inputs()
        body = lambda ctx: txn_payment(ctx, inp)
    else:
        inp = gen.order_status_inputs()
        body = lambda ctx: txn_order_status(ctx, inp)
    return kind, engine.run_transaction(body, stop=stop)


# -- consistency oracle --------------------------------------------------------


@dataclass(frozen=True)
class ConditionResult:
    name: str
    ok: bool
    checked: int
    violations: tuple  # first few offending keys


@dataclass(frozen=True)
class ConsistencyReport:
    conditions: tuple

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.conditions)

    def failing(self):
        return [c.name for c in self.conditions if not c.ok]


def _u32(b: bytes, i: int) -> int:
    return int.from_bytes(b[i * 4:i * 4 + 4], "big")


def consistency_check(engine, warehouses: int) -> ConsistencyReport:
    snap = engine.snapshot()
    districts = snap["district"]
    orders = snap["orders"]

    bad_ytd = []
    d_ytd_by_w = {}
    for key, row in districts.items():
        d_ytd_by_w.setdefault(_u32(key, 0), 0)
        d_ytd_by_w[_u32(key, 0)] += row[D_YTD]
    for key, row in snap["warehouse"].items():
        if row[W_YTD] != d_ytd_by_w.get(_u32(key, 0)):
            bad_ytd.append(_u32(key, 0))
    c_ytd = ConditionResult("warehouse_ytd_equals_district_sum",
                            not bad_ytd, warehouses, tuple(bad_ytd[:10]))

    # order ids are dense: count == max == D_NEXT_O_ID - 1, in both the
    # order table and the new-order queue
    per_d = {}
    for key in orders:
        wd, o = key[:8], _u32(key, 2)
        cnt, mx = per_d.get(wd, (0, 0))
        per_d[wd] = (cnt + 1, o if o > mx else mx)
    no_max = {}
    for key in snap["new_order"]:
        wd, o = key[:8], _u32(key, 2)
        if o > no_max.get(wd, 0):
            no_max[wd] = o
        if key not in orders:
            per_d[wd] = (-1, -1)  # queue entry for a missing order
    bad_density = []
    for key, row in districts.items():
        top = row[D_NEXT_O_ID] - 1
        cnt, mx = per_d.get(key[:8], (0, 0))
        if not (cnt == mx == top and no_max.get(key[:8]) == top):
            bad_density.append((_u32(key, 0), _u32(key, 1)))
    c_density = ConditionResult("order_id_density", not bad_density,
                                len(districts), tuple(bad_density[:10]))

    line_counts = {}
    for key in snap["order_line"]:
        line_counts[key[:12]] = line_counts.get(key[:12], 0) + 1
    bad_lines = [(_u32(k, 0), _u32(k, 1), _u32(k, 2))
                 for k, row in orders.items()
                 if line_counts.get(k, 0) != row[O_OL_CNT]]
    orphans = sum(1 for k in line_counts if k not in orders)
    if orphans:
        bad_lines.append(("orphan_lines", orphans))
    c_lines = ConditionResult("order_line_counts", not bad_lines,
                              len(orders), tuple(bad_lines[:10]))

    return ConsistencyReport((c_ytd, c_density, c_lines))
