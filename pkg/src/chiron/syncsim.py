"""Discrete-event simulation of straggler catch-up with execution hints.

Active nodes execute every block ``alpha`` seconds after the head produces
it and serve hints for what they executed. A straggler requests hints from
one provider at a time (a batch for everything already executed, then one
block at a time as new blocks appear); each hint arrives ``delta`` seconds
after it is both requested and available. Hinted blocks run at the guided
speed; a corrupted hint costs one guided attempt before it is detected, after
which the provider is untrusted for the rest of the run and the block is
re-executed unguided.

In integration mode every block is also executed for real: providers run
the optimistic engine and extract hints, adversaries corrupt them, the
straggler runs the guided engine, and each result is checked against the
sequential oracle. Detection then comes from the guided engine's fallback.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .hints import Hint


class CorruptMode(enum.Enum):
    DROP_EDGES = "drop_edges"
    ADD_EDGES = "add_edges"
    PERTURB_GAS = "perturb_gas"


def corrupt_hint(hint: Hint, mode: "CorruptMode | str", p: float, seed: int = 0) -> Hint:
    """Deterministically damage a hint while keeping it shape-valid."""
    mode = CorruptMode(mode) if not isinstance(mode, CorruptMode) else mode
    if not 0.0 < p <= 1.0:
        raise ValueError("corruption fraction must be in (0, 1]")
    rng = np.random.Generator(np.random.Philox(seed))
    n = hint.n
    edges = list(hint.edges)
    gas = list(hint.gas)
    if mode is CorruptMode.DROP_EDGES:
        k = math.ceil(p * len(edges))
        drop = set(int(i) for i in rng.permutation(len(edges))[:k])
        edges = [e for i, e in enumerate(edges) if i not in drop]
    elif mode is CorruptMode.ADD_EDGES:
        existing = set(edges)
        k = math.ceil(p * max(len(edges), n))
        max_new = n * (n - 1) // 2 - len(existing)
        k = min(k, max_new)
        added = 0
        while added < k:
            a, b = (int(x) for x in rng.integers(0, n, size=2))
            if a == b:
                continue
            e = (min(a, b), max(a, b))
            if e not in existing:
                existing.add(e)
                added += 1
        edges = sorted(existing)
    else:
        k = math.ceil(p * n)
        for i in rng.permutation(n)[:k]:
            gas[int(i)] = int(gas[int(i)] * float(rng.uniform(0.1, 10.0))) + 1
    return Hint.build(hint.block_height, edges, gas, hint.provider)


@dataclass(frozen=True)
class SimConfig:
    n_nodes: int = 4
    block_period: float = 0.1
    alpha: float = 0.2
    delta: float = 0.05
    initial_lag_blocks: int = 10
    speed_factor_unguided: float = 1.0
    speed_factor_guided: float = 4.0
    adversary: tuple[int, ...] = ()
    adversaries_first: bool = True
    stragglers: tuple[int, ...] = ()
    horizon: float = 10.0
    # integration mode
    integration: bool = False
    workload: str = "dex-bursty"
    txns_per_block: int = 50
    threads: int = 2
    corrupt_mode: str = "drop_edges"
    corrupt_p: float = 0.5
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "adversary", tuple(sorted(set(self.adversary))))
        stragglers = tuple(self.stragglers) or (self.n_nodes - 1,)
        object.__setattr__(self, "stragglers", stragglers)
        if self.n_nodes < 1 or (self.n_nodes - 1) % 3:
            raise ValueError(f"n_nodes={self.n_nodes} is not of the form 3f+1")
        if min(self.block_period, self.alpha, self.delta, self.horizon) <= 0:
            raise ValueError("block_period, alpha, delta and horizon must be positive")
        if min(self.speed_factor_guided, self.speed_factor_unguided) <= 0:
            raise ValueError("speed factors must be positive")
        if self.initial_lag_blocks < 0:
            raise ValueError("initial_lag_blocks must be non-negative")
        nodes = set(range(self.n_nodes))
        if not set(self.adversary) <= nodes or not set(stragglers) <= nodes:
            raise ValueError("adversary and straggler ids must be node indices")
        if set(self.adversary) & set(stragglers):
            raise ValueError("a straggler cannot also be a hint provider")
        if len(self.adversary) > self.f:
            raise ValueError(f"{len(self.adversary)} adversaries exceed the fault bound f={self.f}")

    @property
    def f(self) -> int:
        return (self.n_nodes - 1) // 3

    @property
    def floor(self) -> float:
        return self.alpha + self.delta

    def providers(self) -> list[int]:
        rest = [i for i in range(self.n_nodes) if i not in self.stragglers]
        if self.adversaries_first:
            return [i for i in rest if i in self.adversary] + [i for i in rest if i not in self.adversary]
        return rest

    @classmethod
    def from_json(cls, doc: Mapping) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"field {unknown[0]!r} is not a sim config field")
        doc = dict(doc)
        for name in ("adversary", "stragglers"):
            if name in doc:
                doc[name] = tuple(doc[name])
        return cls(**doc)

    def to_json(self) -> dict:
        d = asdict(self)
        d["adversary"] = list(self.adversary)
        d["stragglers"] = list(self.stragglers)
        return d


HEAD_NODE = -1


@dataclass
class SimTrace:
    cfg: SimConfig
    rows: list[tuple[float, int, int, str]] = field(default_factory=list)
    untrust: list[tuple[float, int, int]] = field(default_factory=list)
    # per straggler: block height -> (start time, finish time, guided?)
    executions: dict[int, dict[int, tuple[float, float, bool]]] = field(default_factory=dict)
    oracle_mismatches: list[tuple[int, int]] = field(default_factory=list)
    checked_blocks: int = 0

    def arrival(self, height: int) -> float:
        return height * self.cfg.block_period

    def heights(self, node: int) -> list[tuple[float, int]]:
        return [(t, h) for t, n, h, ev in self.rows if n == node and ev in ("exec", "guided", "unguided", "join")]

    def start_lags(self, node: int) -> list[tuple[int, float]]:
        """(height, start of straggler execution - head production) per executed block."""
        ex = self.executions.get(node, {})
        return [(h, ex[h][0] - self.arrival(h)) for h in sorted(ex)]

    def finish_lags(self, node: int) -> list[tuple[int, float]]:
        ex = self.executions.get(node, {})
        return [(h, ex[h][1] - self.arrival(h)) for h in sorted(ex)]

    def block_lag_at_start(self, node: int) -> list[tuple[int, int]]:
        """Blocks produced by the head but not yet executed, when the straggler starts each block."""
        P = self.cfg.block_period
        out = []
        for h, (start, _, _) in sorted(self.executions.get(node, {}).items()):
            head = math.floor(start / P + 1e-9)
            out.append((h, head - (h - 1)))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "node_id", "executed_height", "event"])
        for t, node, h, ev in self.rows:
            w.writerow([f"{t:.6f}", node, h, ev])
        return buf.getvalue()


class _Integration:
    """Real execution of small blocks for the integration mode."""

    def __init__(self, cfg: SimConfig, n_blocks: int):
        from .workloads import default_spec, generate

        spec = default_spec(cfg.workload, txns_per_block=cfg.txns_per_block, n_blocks=n_blocks, seed=cfg.seed,
                            window_txns=max(cfg.txns_per_block * n_blocks, 1))
        self.cfg = cfg
        self.blocks = generate(spec)
        self._hints: dict[int, Hint] = {}
        self.states: list[dict] = [{}]
        self.oracle: list[int] = []
        from .blockstm import sequential_execute
        from .model import state_digest
        from .vm import LOGIC_ONLY

        self.vm = LOGIC_ONLY
        for b in self.blocks:
            res = sequential_execute(b, self.states[-1], self.vm)
            self.states.append(res.final_state)
            self.oracle.append(state_digest(res.final_state))

    def hint(self, height: int, provider: int, adversarial: bool) -> Hint:
        from .blockstm import EngineConfig, execute_block_optimistic
        from .hints import extract_hints

        base = self._hints.get(height)
        if base is None:
            b = self.blocks[height - 1]
            res = execute_block_optimistic(b, self.states[height - 1], EngineConfig(self.cfg.threads, vm=self.vm))
            base = extract_hints(res, height)
            self._hints[height] = base
        hint = Hint(base.block_height, base.edges, base.gas, base.path_cost, f"node{provider}")
        if adversarial:
            hint = corrupt_hint(hint, self.cfg.corrupt_mode, self.cfg.corrupt_p, seed=self.cfg.seed * 7919 + height)
        return hint

    def run_guided(self, height: int, hint: Hint | None):
        from .blockstm import EngineConfig, execute_block_optimistic
        from .guided import run_guided
        from .model import state_digest

        b = self.blocks[height - 1]
        cfg = EngineConfig(self.cfg.threads, vm=self.vm)
        if hint is None:
            res = execute_block_optimistic(b, self.states[height - 1], cfg)
        else:
            res = run_guided(b, self.states[height - 1], hint, cfg)
        return res.metrics.fallback, state_digest(res.final_state) == self.oracle[height - 1]


class _Straggler:
    def __init__(self, node: int, providers: list[int]):
        self.node = node
        self.order = providers
        self.untrusted: set[int] = set()
        self.provider_pos = 0
        self.height = 0
        self.busy = False
        self.hints: dict[int, int] = {}  # height -> provider that delivered it
        self.requested: set[int] = set()
        self.online = False

    @property
    def provider(self) -> int | None:
        while self.provider_pos < len(self.order) and self.order[self.provider_pos] in self.untrusted:
            self.provider_pos += 1
        if self.provider_pos >= len(self.order):
            return None
        return self.order[self.provider_pos]


def simulate(cfg: SimConfig) -> SimTrace:
    P, alpha, delta = cfg.block_period, cfg.alpha, cfg.delta
    trace = SimTrace(cfg)
    events: list = []
    seq = 0

    def push(t, kind, *data):
        nonlocal seq
        heapq.heappush(events, (t, seq, kind, data))
        seq += 1

    providers = cfg.providers()
    stragglers = {s: _Straggler(s, providers) for s in cfg.stragglers}
    head = 0
    # provider -> height -> time its execution finished
    executed: dict[int, dict[int, float]] = {p: {} for p in providers}
    last_block = int(math.floor(cfg.horizon / P))
    join_time = cfg.initial_lag_blocks * P + alpha + 1e-9
    integ = _Integration(cfg, last_block) if cfg.integration else None

    for h in range(1, last_block + 1):
        push(h * P, "head", h)
    for s in stragglers.values():
        if cfg.initial_lag_blocks == 0:
            s.online = True
        else:
            push(join_time, "join", s.node)

    def hint_ready_time(p: int, h: int, t_req: float) -> float | None:
        done = executed[p].get(h)
        if done is None:
            return None
        return max(t_req, done) + delta

    def request(s: _Straggler, t: float, heights: Sequence[int]):
        p = s.provider
        if p is None:
            return
        batch = []
        for h in heights:
            if h in s.hints or h in s.requested:
                continue
            s.requested.add(h)
            ready = hint_ready_time(p, h, t)
            if ready is not None:
                batch.append(h)
                push(ready, "hint", s.node, p, h)
        if batch:
            trace.rows.append((t, s.node, s.height, f"hint_request:{p}:{batch[0]}-{batch[-1]}"))

    def try_start(s: _Straggler, t: float):
        if s.busy or not s.online:
            return
        h = s.height + 1
        if h > head or h not in s.hints:
            return
        p = s.hints[h]
        s.busy = True
        guided_time = alpha / cfg.speed_factor_guided
        adversarial = p in cfg.adversary
        if integ is not None:
            hint = integ.hint(h, p, adversarial)
            detected, ok = integ.run_guided(h, hint)
            trace.checked_blocks += 1
            if not ok:
                trace.oracle_mismatches.append((s.node, h))
        else:
            detected = adversarial
        if detected:
            push(t + guided_time, "detect", s.node, p, h, t)
        else:
            push(t + guided_time, "done", s.node, h, t, True)

    while events:
        t, _, kind, data = heapq.heappop(events)
        if t > cfg.horizon + 1e-9:
            break
        if kind == "head":
            (h,) = data
            head = h
            trace.rows.append((t, HEAD_NODE, h, "head"))
            for p in providers:
                push(t + alpha, "pexec", p, h)
        elif kind == "pexec":
            p, h = data
            executed[p][h] = t
            trace.rows.append((t, p, h, "exec"))
            for s in stragglers.values():
                if s.online and s.provider == p and h in s.requested and h not in s.hints:
                    push(t + delta, "hint", s.node, p, h)
        elif kind == "join":
            (node,) = data
            s = stragglers[node]
            s.online = True
            trace.rows.append((t, node, s.height, "join"))
            request(s, t, range(s.height + 1, head + 1))
        elif kind == "hint":
            node, p, h = data
            s = stragglers[node]
            if p in s.untrusted or s.provider != p or h in s.hints:
                continue
            s.hints[h] = p
            trace.rows.append((t, node, s.height, f"hint_arrival:{p}:{h}"))
            try_start(s, t)
        elif kind == "detect":
            node, p, h, started = data
            s = stragglers[node]
            s.untrusted.add(p)
            trace.untrust.append((t, node, p))
            trace.rows.append((t, node, s.height, f"untrust:{p}"))
            # discard everything the untrusted provider delivered or owes
            s.hints = {k: v for k, v in s.hints.items() if v != p}
            s.requested = set(s.hints)
            if integ is not None:
                _, ok = integ.run_guided(h, None)
                trace.checked_blocks += 1
                if not ok:
                    trace.oracle_mismatches.append((node, h))
            push(t + alpha / cfg.speed_factor_unguided, "done", node, h, started, False)
            request(s, t, range(h + 1, head + 1))
        elif kind == "done":
            node, h, started, guided = data
            s = stragglers[node]
            s.height = h
            s.busy = False
            s.hints.pop(h, None)
            trace.executions.setdefault(node, {})[h] = (started, t, guided)
            trace.rows.append((t, node, h, "guided" if guided else "unguided"))
            try_start(s, t)

        if kind == "head":
            for s in stragglers.values():
                if s.online:
                    request(s, t, range(s.height + 1, head + 1))
                    try_start(s, t)
    return trace


def load_config(path) -> SimConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"sim config is not valid JSON: {e.msg} at line {e.lineno}") from None
    if not isinstance(doc, dict):
        raise ValueError("sim config must be a JSON object")
    try:
        return SimConfig.from_json(doc)
    except TypeError as e:
        raise ValueError(f"sim config: {e}") from None
