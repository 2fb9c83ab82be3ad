"""Contention-calibrated blockchain workload generators.

Each workload is described by frequency tables: rows of (accesses per
analysis window, share of accesses). A window of ``window_txns``
transactions stands in for the 1000-block observation window of the
original measurements. Group membership is drawn with an alias sampler;
within a group, resources are dealt from a shuffled deck so that each one
appears ``bucket`` times per window (bucket 1 means a never-reused resource).
"""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import Block, StepKind, Transaction, TxnStep, SignatureStamp
from .vm import VmConfig


class WorkloadError(ValueError):
    pass


class CalibrationError(RuntimeError):
    def __init__(self, message: str, last_fraction: float):
        super().__init__(f"{message} (last measured critical path fraction {last_fraction:.4f})")
        self.last_fraction = last_fraction


class WorkloadKind(enum.Enum):
    P2P = "p2p"
    NFT = "nft"
    DEX_AVG = "dex-avg"
    DEX_BURSTY = "dex-bursty"
    MIXED = "mixed"

    @classmethod
    def parse(cls, value: "str | WorkloadKind") -> "WorkloadKind":
        if isinstance(value, WorkloadKind):
            return value
        norm = value.strip().lower().replace("_", "-")
        norm = {"dexavg": "dex-avg", "dexbursty": "dex-bursty", "bursty": "dex-bursty", "dex": "dex-avg"}.get(norm, norm)
        try:
            return cls(norm)
        except ValueError:
            raise WorkloadError(f"field 'kind': unknown workload {value!r}") from None


ROLES = {
    WorkloadKind.P2P: ("sender", "receiver"),
    WorkloadKind.NFT: ("contract", "minter"),
    WorkloadKind.DEX_AVG: ("pair", "trader"),
    WorkloadKind.DEX_BURSTY: ("pair", "trader"),
    WorkloadKind.MIXED: ("resource",),
}

NAMESPACE = {"sender": "acct", "receiver": "acct", "minter": "acct", "trader": "acct",
             "contract": "nft", "pair": "pair", "resource": "res"}


@dataclass(frozen=True)
class FrequencyTable:
    rows: tuple[tuple[int, float], ...]

    def __post_init__(self):
        rows = tuple((int(b), float(s)) for b, s in self.rows)
        object.__setattr__(self, "rows", rows)
        if not rows:
            raise WorkloadError("frequency table has no rows")
        buckets = [b for b, _ in rows]
        if buckets[0] < 1 or any(b2 <= b1 for b1, b2 in zip(buckets, buckets[1:])):
            raise WorkloadError(f"frequency table buckets must be >= 1 and strictly increasing, got {buckets}")
        if any(s < 0 for _, s in rows):
            raise WorkloadError("frequency table shares must be non-negative")
        total = sum(s for _, s in rows)
        if abs(total - 1.0) > 1e-9:
            raise WorkloadError(f"frequency table shares sum to {total!r}, expected 1")

    @property
    def buckets(self) -> list[int]:
        return [b for b, _ in self.rows]

    @property
    def shares(self) -> list[float]:
        return [s for _, s in self.rows]


P2P_SENDERS = FrequencyTable(((1, 0.40), (2, 0.14), (5, 0.12), (20, 0.12), (100, 0.12), (1000, 0.10)))
P2P_RECEIVERS = FrequencyTable(((1, 0.40), (2, 0.12), (5, 0.10), (20, 0.12), (100, 0.14), (1200, 0.12)))
NFT_CONTRACTS = FrequencyTable(((1, 0.05), (10, 0.12), (50, 0.15), (200, 0.30), (1900, 0.38)))
NFT_MINTERS = FrequencyTable(((1, 0.55), (2, 0.20), (5, 0.15), (20, 0.10)))
DEX_AVG_PAIRS = FrequencyTable(((1, 0.05), (10, 0.15), (100, 0.25), (1250, 0.25), (3000, 0.30)))
DEX_BURSTY_PAIRS = FrequencyTable(((1, 0.05), (10, 0.10), (100, 0.20), (1000, 0.20), (4500, 0.45)))
# Hot head pre-calibrated for a ~30% critical path (scripts/calibrate_mixed.py).
MIXED_RESOURCES = FrequencyTable(((1, 0.386), (4, 0.154), (40, 0.116), (917, 0.229), (9169, 0.115)))


@dataclass(frozen=True)
class WorkloadSpec:
    kind: WorkloadKind
    tables: Mapping[str, FrequencyTable]
    txns_per_block: int = 1000
    n_blocks: int = 10
    seed: int = 1
    window_txns: int = 10_000
    invalid_sig_share: float = 0.0
    # mixed only
    write_len_mean: float = 4.0
    write_len_max: int = 16
    read_prob: float = 0.9
    gas_min: int = 10
    gas_max: int = 1000
    target_critical_path: float = 0.30

    def __post_init__(self):
        object.__setattr__(self, "kind", WorkloadKind.parse(self.kind))
        tables = {}
        for role, table in dict(self.tables).items():
            tables[role] = table if isinstance(table, FrequencyTable) else FrequencyTable(tuple(map(tuple, table)))
        object.__setattr__(self, "tables", tables)
        missing = [r for r in ROLES[self.kind] if r not in tables]
        if missing:
            raise WorkloadError(f"field 'tables': {self.kind.value} workload needs tables for {missing}")
        if self.txns_per_block < 1 or self.n_blocks < 0 or self.window_txns < 1:
            raise WorkloadError("fields 'txns_per_block', 'n_blocks', 'window_txns' must be positive")
        if not 0.0 <= self.invalid_sig_share <= 1.0:
            raise WorkloadError("field 'invalid_sig_share' must be in [0, 1]")
        if not 0.0 <= self.target_critical_path < 1.0:
            raise WorkloadError("field 'target_critical_path' must be in [0, 1)")
        if not (1 <= self.gas_min <= self.gas_max):
            raise WorkloadError("fields 'gas_min'/'gas_max' must satisfy 1 <= gas_min <= gas_max")
        if self.write_len_mean < 1 or self.write_len_max < 1:
            raise WorkloadError("fields 'write_len_mean'/'write_len_max' must be >= 1")
        if not 0.0 <= self.read_prob <= 1.0:
            raise WorkloadError("field 'read_prob' must be in [0, 1]")

    def to_json(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["tables"] = {role: [list(r) for r in t.rows] for role, t in self.tables.items()}
        return d

    def accesses_per_txn(self) -> float:
        if self.kind is WorkloadKind.MIXED:
            return _truncated_geometric_mean(self.write_len_mean, self.write_len_max)
        return 1.0


def _truncated_geometric_mean(mean: float, cap: int) -> float:
    p = 1.0 / mean
    ks = np.arange(1, cap + 1)
    pmf = p * (1 - p) ** (ks - 1)
    tail = (1 - p) ** cap
    return float((ks * pmf).sum() + cap * tail)


def default_spec(kind: "str | WorkloadKind", **overrides) -> WorkloadSpec:
    kind = WorkloadKind.parse(kind)
    tables = {
        WorkloadKind.P2P: {"sender": P2P_SENDERS, "receiver": P2P_RECEIVERS},
        WorkloadKind.NFT: {"contract": NFT_CONTRACTS, "minter": NFT_MINTERS},
        WorkloadKind.DEX_AVG: {"pair": DEX_AVG_PAIRS, "trader": P2P_SENDERS},
        WorkloadKind.DEX_BURSTY: {"pair": DEX_BURSTY_PAIRS, "trader": P2P_SENDERS},
        WorkloadKind.MIXED: {"resource": MIXED_RESOURCES},
    }[kind]
    return WorkloadSpec(kind=kind, tables=overrides.pop("tables", tables), **overrides)


def spec_from_json(doc: Mapping) -> WorkloadSpec:
    if not isinstance(doc, Mapping):
        raise WorkloadError("workload spec must be a JSON object")
    if "kind" not in doc:
        raise WorkloadError("field 'kind' is required")
    doc = dict(doc)
    kind = WorkloadKind.parse(doc.pop("kind"))
    known = set(WorkloadSpec.__dataclass_fields__) - {"kind"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise WorkloadError(f"field {unknown[0]!r} is not a workload spec field")
    if "tables" in doc:
        if not isinstance(doc["tables"], Mapping):
            raise WorkloadError("field 'tables' must map role names to [[bucket, share], ...] rows")
        merged = dict(default_spec(kind).tables)
        for role, rows in doc["tables"].items():
            try:
                merged[role] = FrequencyTable(tuple(tuple(r) for r in rows))
            except (TypeError, ValueError) as e:
                raise WorkloadError(f"field 'tables.{role}': {e}") from None
        doc["tables"] = merged
    for name in ("txns_per_block", "n_blocks", "seed", "window_txns", "write_len_max", "gas_min", "gas_max"):
        if name in doc and (not isinstance(doc[name], int) or isinstance(doc[name], bool)):
            raise WorkloadError(f"field {name!r} must be an integer")
    for name in ("invalid_sig_share", "write_len_mean", "read_prob", "target_critical_path"):
        if name in doc and not isinstance(doc[name], (int, float)):
            raise WorkloadError(f"field {name!r} must be a number")
    return default_spec(kind, **doc)


def load_spec(path) -> WorkloadSpec:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise WorkloadError(f"spec file is not valid JSON: {e.msg} at line {e.lineno}") from None
    return spec_from_json(doc)


# -- sampling ------------------------------------------------------------------


class AliasSampler:
    """Vose's alias method over a fixed categorical distribution."""

    def __init__(self, probs: Sequence[float]):
        n = len(probs)
        total = float(sum(probs))
        scaled = [p * n / total for p in probs]
        self.prob = [0.0] * n
        self.alias = [0] * n
        small = [i for i, p in enumerate(scaled) if p < 1.0]
        large = [i for i, p in enumerate(scaled) if p >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] = scaled[l] + scaled[s] - 1.0
            (small if scaled[l] < 1.0 else large).append(l)
        for i in large + small:
            self.prob[i] = 1.0
        self.n = n

    def sample(self, u1: float, u2: float) -> int:
        i = min(int(u1 * self.n), self.n - 1)
        return i if u2 < self.prob[i] else self.alias[i]


class _Ids:
    def __init__(self):
        self.next: Counter = Counter()

    def fresh(self, namespace: str) -> str:
        n = self.next[namespace]
        self.next[namespace] += 1
        return f"{namespace}:{n}"


class _RoleSampler:
    def __init__(self, table: FrequencyTable, namespace: str, accesses_per_window: float,
                 rng: np.random.Generator, ids: _Ids):
        self.rng = rng
        self.ids = ids
        self.namespace = namespace
        self.alias = AliasSampler(table.shares)
        self.buckets = table.buckets
        self.pools: list[list[str] | None] = []
        for bucket, share in table.rows:
            if bucket == 1:
                self.pools.append(None)
            else:
                m = max(1, round(share * accesses_per_window / bucket))
                self.pools.append([ids.fresh(namespace) for _ in range(m)])
        self.decks: list[list[str]] = [[] for _ in table.rows]

    def draw(self) -> str:
        u1, u2 = self.rng.random(2)
        g = self.alias.sample(float(u1), float(u2))
        pool = self.pools[g]
        if pool is None:
            return self.ids.fresh(self.namespace)
        deck = self.decks[g]
        if not deck:
            deck.extend(pool[i] for i in self.rng.permutation(len(pool) * self.buckets[g]) % len(pool))
        return deck.pop()


def _make_txn(index: int, steps: list[TxnStep], rng: np.random.Generator, invalid_share: float) -> Transaction:
    payload = rng.bytes(32)
    valid = not (invalid_share > 0 and float(rng.random()) < invalid_share)
    return Transaction(index, tuple(steps), payload, SignatureStamp.for_payload(payload, valid))


def generate(spec: WorkloadSpec) -> list[Block]:
    rng = np.random.Generator(np.random.Philox(spec.seed))
    ids = _Ids()
    per_window = spec.window_txns * spec.accesses_per_txn()
    samplers = {role: _RoleSampler(spec.tables[role], NAMESPACE[role], per_window, rng, ids)
                for role in ROLES[spec.kind]}
    kind = spec.kind
    log_lo, log_hi = math.log(spec.gas_min), math.log(spec.gas_max)
    blocks = []
    for height in range(spec.n_blocks):
        txns = []
        for i in range(spec.txns_per_block):
            if kind is WorkloadKind.P2P:
                s, r = samplers["sender"].draw(), samplers["receiver"].draw()
                while r == s:
                    r = samplers["receiver"].draw()
                steps = [TxnStep.read(s), TxnStep.read(r), TxnStep.write(s), TxnStep.write(r)]
            elif kind is WorkloadKind.NFT:
                c, m = samplers["contract"].draw(), samplers["minter"].draw()
                steps = [TxnStep.read(c), TxnStep.write(c), TxnStep.write(m)]
            elif kind in (WorkloadKind.DEX_AVG, WorkloadKind.DEX_BURSTY):
                p, t = samplers["pair"].draw(), samplers["trader"].draw()
                steps = [TxnStep.read(p), TxnStep.write(p), TxnStep.write(t)]
            else:
                k = min(int(rng.geometric(1.0 / spec.write_len_mean)), spec.write_len_max)
                keys = list(dict.fromkeys(samplers["resource"].draw() for _ in range(k)))
                reads = [TxnStep.read(key) for key in keys if float(rng.random()) < spec.read_prob]
                gas = int(round(math.exp(float(rng.uniform(log_lo, log_hi)))))
                steps = reads + [TxnStep.compute(max(gas, 1))] + [TxnStep.write(key) for key in keys]
            txns.append(_make_txn(i, steps, rng, spec.invalid_sig_share))
        blocks.append(Block(height, tuple(txns)))
    return blocks


# -- static analysis -------------------------------------------------------------


def static_edges(block: Block) -> set[tuple[int, int]]:
    """Last-writer -> reader edges implied by the step lists (no-op txns ignored)."""
    last_writer: dict[str, int] = {}
    edges = set()
    for txn in block.txns:
        if not txn.signature.valid:
            continue
        own = set()
        for step in txn.steps:
            if step.kind is StepKind.READ and step.key not in own:
                w = last_writer.get(step.key)
                if w is not None:
                    edges.add((w, txn.index))
            elif step.kind is StepKind.WRITE:
                own.add(step.key)
        for key in own:
            last_writer[key] = txn.index
    return edges


def static_gas(block: Block, vm: VmConfig = VmConfig()) -> list[int]:
    return [vm.txn_gas(t) if t.signature.valid else 0 for t in block.txns]


def critical_path_fraction(block: Block, vm: VmConfig = VmConfig()) -> float:
    gas = static_gas(block, vm)
    total = sum(gas)
    if total == 0:
        return 0.0
    n = len(block.txns)
    parents: list[list[int]] = [[] for _ in range(n)]
    for p, c in static_edges(block):
        parents[c].append(p)
    path = [0] * n
    for i in range(n):
        path[i] = gas[i] + max((path[p] for p in parents[i]), default=0)
    return max(path) / total


@dataclass
class RoleStats:
    counts: Counter
    n_txns: int
    singleton_share: float

    @property
    def hottest_share(self) -> float:
        return self.topk_share(1)

    def topk_share(self, k: int) -> float:
        if not self.n_txns:
            return 0.0
        return sum(c for _, c in self.counts.most_common(k)) / self.n_txns


@dataclass
class WorkloadStats:
    roles: dict[str, RoleStats]
    critical_path_fractions: list[float] = field(default_factory=list)
    mean_write_set_len: float = 0.0

    def __getitem__(self, role: str) -> RoleStats:
        return self.roles[role]

    @property
    def critical_path_fraction(self) -> float:
        f = self.critical_path_fractions
        return sum(f) / len(f) if f else 0.0

    @property
    def hottest_share(self) -> float:
        return max((r.hottest_share for r in self.roles.values()), default=0.0)

    @property
    def singleton_share(self) -> float:
        vals = [r.singleton_share for r in self.roles.values()]
        return sum(vals) / len(vals) if vals else 0.0

    def summary(self) -> dict:
        out = {
            "critical_path_fraction": round(self.critical_path_fraction, 4),
            "mean_write_set_len": round(self.mean_write_set_len, 4),
        }
        for role, r in self.roles.items():
            out[role] = {"hottest_share": round(r.hottest_share, 4), "top2_share": round(r.topk_share(2), 4),
                         "singleton_share": round(r.singleton_share, 4)}
        return out


def _role_keys(txn: Transaction, kind: WorkloadKind | None) -> dict[str, list[str]]:
    steps = txn.steps
    if kind is WorkloadKind.P2P:
        return {"sender": [steps[0].key], "receiver": [steps[1].key]}
    if kind is WorkloadKind.NFT:
        return {"contract": [steps[0].key], "minter": [steps[2].key]}
    if kind in (WorkloadKind.DEX_AVG, WorkloadKind.DEX_BURSTY):
        return {"pair": [steps[0].key], "trader": [steps[2].key]}
    keys = list(dict.fromkeys(s.key for s in steps if s.kind is not StepKind.COMPUTE))
    return {"resource": keys}


def measure_stats(blocks: Sequence[Block], kind: "str | WorkloadKind | None" = None,
                  window_txns: int = 10_000, vm: VmConfig = VmConfig()) -> WorkloadStats:
    """Empirical access statistics.

    Shares count transactions touching a resource in a role. A singleton is a
    resource that occurs once within its window of ``window_txns``
    consecutive transactions.
    """
    kind = WorkloadKind.parse(kind) if kind is not None else None
    per_txn: list[dict[str, list[str]]] = []
    write_lens = []
    for b in blocks:
        for t in b.txns:
            per_txn.append(_role_keys(t, kind))
            write_lens.append(len(t.write_keys()))
    roles = sorted({r for d in per_txn for r in d}) if kind is None else list(ROLES[kind])
    out = {}
    for role in roles:
        counts: Counter = Counter()
        singles = 0
        accesses = 0
        for start in range(0, len(per_txn), window_txns):
            window = Counter()
            for d in per_txn[start:start + window_txns]:
                window.update(d.get(role, ()))
            singles += sum(1 for c in window.values() if c == 1)
            accesses += sum(window.values())
        for d in per_txn:
            counts.update(set(d.get(role, ())))
        out[role] = RoleStats(counts, len(per_txn), singles / accesses if accesses else 0.0)
    return WorkloadStats(
        out,
        [critical_path_fraction(b, vm) for b in blocks],
        sum(write_lens) / len(write_lens) if write_lens else 0.0,
    )


# -- calibration ---------------------------------------------------------------


def _scaled_table(table: FrequencyTable, hot_rows: int, factor: float) -> FrequencyTable:
    rows = list(table.rows)
    hot = rows[-hot_rows:]
    cold = rows[:-hot_rows]
    hot_total = sum(s for _, s in hot) * factor
    cold_total = sum(s for _, s in cold)
    if hot_total >= 1.0 or (cold and cold_total <= 0):
        raise WorkloadError("infeasible scaling of hot rows")
    new_hot = [(max(1, round(b * factor)), s * factor) for b, s in hot]
    new_cold = [(b, s * (1.0 - hot_total) / cold_total) for b, s in cold] if cold else []
    rows = new_cold + new_hot
    # keep exact unit sum
    drift = 1.0 - sum(s for _, s in rows)
    b0, s0 = rows[0]
    rows[0] = (b0, s0 + drift)
    return FrequencyTable(tuple(rows))


def mean_critical_path(spec: WorkloadSpec, vm: VmConfig = VmConfig()) -> float:
    blocks = generate(spec)
    return sum(critical_path_fraction(b, vm) for b in blocks) / len(blocks)


def calibrate_mixed(spec: WorkloadSpec, tol: float = 0.05, max_iter: int = 50, hot_rows: int = 2,
                    vm: VmConfig = VmConfig()) -> WorkloadSpec:
    """Scale the hottest rows of the resource table until the mean critical path hits the target."""
    if spec.kind is not WorkloadKind.MIXED:
        raise WorkloadError("calibrate_mixed needs a mixed workload spec")
    if spec.n_blocks < 1:
        raise WorkloadError("calibration needs n_blocks >= 1")
    target = spec.target_critical_path
    base = spec.tables["resource"]
    hot_rows = min(hot_rows, len(base.rows) - 1) if len(base.rows) > 1 else 1

    def measure(factor: float) -> tuple[WorkloadSpec, float]:
        table = base if factor == 1.0 else _scaled_table(base, hot_rows, factor)
        s = replace(spec, tables={**spec.tables, "resource": table})
        return s, mean_critical_path(s, vm)

    current, frac = measure(1.0)
    if abs(frac - target) <= tol:
        return current
    if len(base.rows) < 2:
        raise CalibrationError("single-row table cannot be rebalanced", frac)

    hot_share = sum(s for _, s in base.rows[-hot_rows:])
    if hot_share <= 0:
        raise CalibrationError("hot rows have zero share", frac)
    prev_bucket = base.rows[-hot_rows - 1][0] if len(base.rows) > hot_rows else 0
    lo = max(1e-3, (prev_bucket + 1) / base.rows[-hot_rows][0])
    hi = 0.999 / hot_share
    # log-space bisection on the scale factor; critical path grows with hot-row weight
    lo_f, hi_f = (lo, 1.0) if frac > target else (1.0, hi)
    for _ in range(max_iter):
        mid = math.sqrt(lo_f * hi_f)
        current, frac = measure(mid)
        if abs(frac - target) <= tol:
            return current
        if frac > target:
            hi_f = mid
        else:
            lo_f = mid
    raise CalibrationError(f"no convergence to target {target} within {max_iter} iterations", frac)


def independent_block(n: int, height: int = 0, gas: int | None = None) -> Block:
    """Block whose transactions touch pairwise-disjoint keys."""
    txns = []
    for i in range(n):
        steps = [TxnStep.read(f"iso:{i}:a"), TxnStep.write(f"iso:{i}:a"), TxnStep.write(f"iso:{i}:b")]
        if gas:
            steps.insert(1, TxnStep.compute(gas))
        payload = i.to_bytes(8, "little")
        txns.append(Transaction(i, tuple(steps), payload))
    return Block(height, tuple(txns))


def chain_block(n: int, height: int = 0, key: str = "chain:0", gas: int | None = None) -> Block:
    """Block where every transaction reads and rewrites one key: a single dependency chain."""
    txns = []
    for i in range(n):
        steps = [TxnStep.read(key), TxnStep.write(key)]
        if gas:
            steps.insert(1, TxnStep.compute(gas))
        payload = i.to_bytes(8, "little")
        txns.append(Transaction(i, tuple(steps), payload))
    return Block(height, tuple(txns))
