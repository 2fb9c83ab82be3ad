"""Hint-guided parallel execution.

Transactions are dispatched from two FIFO queues built from a dependency
hint: roots with dependants go to the priority queue (long chains first),
isolated roots to the plain queue, and every other transaction waits on its
critical parent (the parent with the largest path cost). Completing a
transaction releases its registered children.

Hints are never trusted for safety. After each execution the read set is
validated against the multi-version store, and writes re-check any later
reader that already ran. The first failure switches the rest of the block to
the optimistic engine, keeping the guided results that are already recorded
(they are re-validated there).
"""

from __future__ import annotations

import threading
import time
from bisect import bisect_right, insort
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from .blockstm import EngineConfig, OptimisticExecutor
from .hints import DepGraph, Hint, verify_hint_shape
from .model import Block, BlockResult, ExecutionOutput, Metrics, ResourceKey, Version
from .mvstore import MultiVersionStore
from .sigpool import SignaturePool
from .vm import Blocked, execute

PENDING, EXECUTING, COMPLETED = "pending", "executing", "completed"


@dataclass
class GuidedState:
    graph: DepGraph
    path_cost: tuple[int, ...]
    queue: deque = field(default_factory=deque)
    priorityqueue: deque = field(default_factory=deque)
    status: list = field(default_factory=list)
    primarychildren: list = field(default_factory=list)
    fallback: bool = False

    def __post_init__(self):
        n = self.graph.n
        self.status = [PENDING] * n
        self.primarychildren = [[] for _ in range(n)]
        self.locks = [threading.Lock() for _ in range(n)]

    def is_leaf(self, i: int) -> bool:
        return not self.graph.children[i]

    def critical_parent(self, i: int) -> int | None:
        crit = None
        for p in self.graph.parents[i]:
            if crit is None or self.path_cost[p] > self.path_cost[crit]:
                crit = p
        return crit


def schedule(n: int, hint: Hint) -> GuidedState:
    state = GuidedState(hint.depgraph(), tuple(hint.path_cost))
    graph = state.graph
    for tx in range(n):
        if not graph.parents[tx]:
            if not graph.children[tx]:
                state.queue.append(tx)
            else:
                state.priorityqueue.append(tx)
        else:
            crit = state.critical_parent(tx)
            state.primarychildren[crit].append(tx)
    return state


_SIG = object()


class GuidedExecutor:
    def __init__(self, block: Block, state: Mapping[ResourceKey, int], hint: Hint | None, cfg: EngineConfig):
        self.block = block
        self.base = state
        self.hint = hint
        self.cfg = cfg
        n = len(block.txns)
        self.n = n
        self.store = MultiVersionStore(state)
        self.outputs: list[ExecutionOutput | None] = [None] * n
        self.sigs = SignaturePool(block.txns, cfg.sig_verify, cfg.sig_rounds)
        self.metrics = Metrics()
        self.gstate: GuidedState | None = None
        self.completed = 0
        self.completed_at = [0.0] * n
        # (txn, popped from priority queue?) in dispatch order
        self.dispatch_log: list[tuple[int, bool]] = []
        self.cv = threading.Condition()
        self._mlock = threading.Lock()
        self._readers: dict[ResourceKey, list[int]] = {}
        self._readers_lock = threading.Lock()
        self.error: BaseException | None = None

    def _count(self, **kw):
        with self._mlock:
            for k, v in kw.items():
                setattr(self.metrics, k, getattr(self.metrics, k) + v)

    # -- dispatch -----------------------------------------------------------

    def _next(self):
        g = self.gstate
        with self.cv:
            while True:
                if g.fallback or self.completed == self.n or self.error is not None:
                    return None
                if g.priorityqueue:
                    tx = g.priorityqueue.popleft()
                    self.dispatch_log.append((tx, True))
                    return tx
                if g.queue:
                    tx = g.queue.popleft()
                    if g.priorityqueue:
                        self.metrics.priority_violations += 1
                    self.dispatch_log.append((tx, False))
                    return tx
                if self.sigs.has_idle_work():
                    return _SIG
                self.cv.wait()

    def _release(self, children):
        g = self.gstate
        with self.cv:
            for c in children:
                if g.is_leaf(c):
                    g.queue.append(c)
                else:
                    g.priorityqueue.append(c)
            self.completed += 1
            if self.completed == self.n:
                self.cv.notify_all()
            else:
                for _ in range(len(children)):
                    self.cv.notify()

    def _trigger_fallback(self):
        with self.cv:
            self.gstate.fallback = True
            self.cv.notify_all()

    # -- execution ----------------------------------------------------------

    def _register_reads(self, i: int, out: ExecutionOutput):
        with self._readers_lock:
            for key, _ in out.read_set:
                lst = self._readers.get(key)
                if lst is None:
                    self._readers[key] = [i]
                else:
                    insort(lst, i)

    def _later_readers(self, key: ResourceKey, i: int) -> list[int]:
        with self._readers_lock:
            lst = self._readers.get(key)
            if not lst:
                return []
            return lst[bisect_right(lst, i):]

    def _validate(self, i: int, out: ExecutionOutput) -> bool:
        self._register_reads(i, out)
        self._count(validations=1)
        if not self.store.validate_read_set(i, out.read_set):
            return False
        checked = set()
        for key, _ in out.write_set:
            for j in self._later_readers(key, i):
                if j in checked:
                    continue
                checked.add(j)
                later = self.outputs[j]
                self._count(validations=1)
                if later is not None and not self.store.validate_read_set(j, later.read_set):
                    return False
        return True

    def _execute(self, i: int):
        g = self.gstate
        for p in g.graph.parents[i]:
            with g.locks[p]:
                if g.status[p] != COMPLETED:
                    # Parent not done: wait for it instead (it wakes us on completion).
                    g.primarychildren[p].append(i)
                    self._count(dependency_waits=1)
                    return
        with g.locks[i]:
            if g.status[i] != PENDING:
                return
            g.status[i] = EXECUTING
        ok = self.sigs.ensure(i)
        store = self.store
        out = execute(self.block.txns[i], lambda k: store.read(k, i), self.cfg.vm, 0, ok)
        if isinstance(out, Blocked):
            self._trigger_fallback()
            return
        self._count(executions=1)
        store.record(Version(i, 0), out.write_set)
        self.outputs[i] = out
        if not self._validate(i, out):
            self._trigger_fallback()
            return
        with g.locks[i]:
            g.status[i] = COMPLETED
            children, g.primarychildren[i] = g.primarychildren[i], []
        self.completed_at[i] = time.perf_counter()
        self._release(children)

    def _worker(self, gate: threading.Barrier | None = None):
        try:
            if gate is not None:
                gate.wait()
            while True:
                item = self._next()
                if item is None:
                    return
                if item is _SIG:
                    self.sigs.verify_next_idle()
                else:
                    self._execute(item)
        except BaseException as e:
            self.error = e
            with self.cv:
                self.cv.notify_all()

    def _run_threads(self):
        if self.cfg.threads == 1:
            self._worker()
            return
        gate = threading.Barrier(self.cfg.threads)
        workers = [threading.Thread(target=self._worker, args=(gate,), daemon=True) for _ in range(self.cfg.threads)]
        for w in workers:
            w.start()
        for w in workers:
            w.join()

    def run(self) -> BlockResult:
        start = time.perf_counter()
        if self.hint is None or not verify_hint_shape(self.hint, self.block):
            res = OptimisticExecutor(self.block, self.base, self.cfg, sigs=self.sigs).run()
            res.metrics.fallback = True
            res.metrics.provider_trusted = False
            res.metrics.wall_time = time.perf_counter() - start
            return res

        self.gstate = schedule(self.n, self.hint)
        self._run_threads()
        if self.error is not None:
            raise self.error

        m = self.metrics
        if self.gstate.fallback:
            rest = OptimisticExecutor(self.block, self.base, self.cfg, store=self.store,
                                      outputs=self.outputs, sigs=self.sigs).run()
            m.executions += rest.metrics.executions
            m.aborts += rest.metrics.aborts
            m.validations += rest.metrics.validations
            m.dependency_waits += rest.metrics.dependency_waits
            m.fallback = True
            m.provider_trusted = False
            final_state, outputs = rest.final_state, rest.outputs
        else:
            self.sigs.drain()
            final_state = self.store.finalize()
            outputs = list(self.outputs)
            m.provider_trusted = True
        m.sig_verifications = self.sigs.verified
        m.idle_sig_verifications = self.sigs.idle_verified
        m.wall_time = time.perf_counter() - start
        return BlockResult(final_state, outputs, m)  # type: ignore[arg-type]


def run_guided(block: Block, state: Mapping[ResourceKey, int], hint: Hint | None,
               cfg: EngineConfig = EngineConfig()) -> BlockResult:
    return GuidedExecutor(block, state, hint, cfg).run()
