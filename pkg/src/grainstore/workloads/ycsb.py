"""Key-value workload: one wide table, Zipfian key choice, read/write mix."""
import random
from dataclasses import dataclass
from enum import Enum

from ..table import TableSchema, pack_key
from ..words import GroupLayout, PolicyId
from .zipf import ZipfianGen

TABLE = "usertable"

_MASK = (1 << 61) - 1


class YcsbLayout(Enum):
    COARSE = "coarse"
    FINE_EVEN_ODD = "fine_even_odd"


@dataclass(frozen=True)
class YcsbConfig:
    num_keys: int = 10_000_000
    columns: int = 10
    column_width: int = 10
    ops_per_txn: int = 16
    write_fraction: float = 0.5
    theta: float = 0.9
    layout: YcsbLayout = YcsbLayout.COARSE
    seed: int = 0
    scramble: bool = False  # rank -> key via hash instead of identity

    def __post_init__(self):
        if self.num_keys < 1:
            raise ValueError("num_keys must be positive")
        if not 0.0 <= self.write_fraction <= 1.0:
            raise ValueError("write_fraction outside [0, 1]")
        if not 0.0 <= self.theta < 1.0:
            raise ValueError("theta outside [0, 1)")


def ycsb_value(key: int, col: int, seq: int, seed: int) -> str:
    """Deterministic cell content; audits recompute it from the same args."""
    h = (key * 0x9E3779B97F4A7C15 ^ col * 0xC2B2AE3D27D4EB4F
         ^ seq * 0x165667B19E3779F9 ^ seed * 0x27220A95) & _MASK
    return f"{h % 10 ** 10:010d}"


def _fnv64(x: int) -> int:
    h = 0xCBF29CE484222325
    for _ in range(8):
        h = ((h ^ (x & 0xFF)) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        x >>= 8
    return h


def key_for(rank: int, config: YcsbConfig) -> int:
    if config.scramble:
        return _fnv64(rank) % config.num_keys
    return rank - 1


def ycsb_schema(config: YcsbConfig, policy: PolicyId) -> TableSchema:
    names = tuple(f"c{i}" for i in range(config.columns))
    if config.layout is YcsbLayout.FINE_EVEN_ODD:
        layout = GroupLayout.even_odd(config.columns)
    else:
        layout = GroupLayout.coarse(config.columns)
    widths = {n: config.column_width for n in names}
    return TableSchema(TABLE, names, layout, policy, widths=widths)


def ycsb_load(engine, config: YcsbConfig, policy: PolicyId = PolicyId.OCC):
    table = engine.create_table(ycsb_schema(config, policy))
    ncols = config.columns
    seed = config.seed
    for k in range(config.num_keys):
        table.load_insert(
            pack_key(k), [ycsb_value(k, c, 0, seed) for c in range(ncols)])
    return table


class YcsbGen:
    """Per-worker draw state: Zipfian ranks plus a write-sequence counter."""

    __slots__ = ("zipf", "rng", "seq")

    def __init__(self, config: YcsbConfig, worker_id: int = 0):
        self.zipf = ZipfianGen(config.num_keys, config.theta,
                               seed=f"{config.seed}:ycsb:{worker_id}")
        self.rng = self.zipf.rng  # one stream drives keys, columns, coins
        self.seq = 0


def ycsb_txn(ctx, gen: YcsbGen, config: YcsbConfig):
    table = ctx.engine.table(TABLE)
    for _ in range(config.ops_per_txn):
        kint = key_for(gen.zipf.next(), config)
        col = gen.rng.randrange(config.columns)
        if gen.rng.random() < config.write_fraction:
            gen.seq += 1
            ctx.update(table, pack_key(kint), {
                col: ycsb_value(kint, col, gen.seq, config.seed)})
        else:
            ctx.get(table, pack_key(kint), cols=(col,))
