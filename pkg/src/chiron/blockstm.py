"""Optimistic parallel block execution (collaborative scheduler over multi-version memory).

The scheduler follows the published BlockSTM design: two shared indices
(next to execute, next to validate) that only move backwards on aborts or on
writes to new locations, per-transaction incarnation status, and dependency
lists for executions that hit an estimate.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .model import (
    Block,
    BlockResult,
    ExecutionOutput,
    Metrics,
    STORAGE,
    ResourceKey,
    Version,
    replay_writes,
)
from .mvstore import MultiVersionStore
from .sigpool import SignaturePool, SigMode
from .vm import Blocked, VmConfig, execute

READY, EXECUTING, EXECUTED, ABORTING = range(4)


class LivelockError(RuntimeError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    threads: int = 1
    sig_verify: SigMode = SigMode.OFF
    vm: VmConfig = field(default_factory=VmConfig)
    sig_rounds: int = 100

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        object.__setattr__(self, "sig_verify", SigMode.parse(self.sig_verify))


def sequential_execute(block: Block, state: Mapping[ResourceKey, int], vm: VmConfig = VmConfig(),
                       sig_verify: SigMode = SigMode.OFF, sig_rounds: int = 100) -> BlockResult:
    """In-order single-threaded execution; the correctness oracle."""
    start = time.perf_counter()
    sigs = SignaturePool(block.txns, SigMode.parse(sig_verify), sig_rounds)
    current = dict(state)
    last_writer: dict[ResourceKey, int] = {}
    outputs = []

    def reader(key):
        w = last_writer.get(key)
        return current.get(key, 0), (STORAGE if w is None else Version(w, 0))

    for txn in block.txns:
        ok = sigs.ensure(txn.index)
        out = execute(txn, reader, vm, 0, ok)
        assert not isinstance(out, Blocked)
        for key, value in out.write_set:
            current[key] = value
            last_writer[key] = txn.index
        outputs.append(out)
    metrics = Metrics(executions=len(block.txns), sig_verifications=sigs.verified,
                      wall_time=time.perf_counter() - start)
    return BlockResult(current, outputs, metrics)


class _Scheduler:
    def __init__(self, n: int, executed: Iterable[int] = ()):
        self.n = n
        self.lock = threading.Lock()
        self.idle = threading.Condition(self.lock)
        self.execution_idx = 0
        self.validation_idx = 0
        self.num_active = 0
        self.done = n == 0
        self.incarnation = [0] * n
        self.status = [READY] * n
        self.status_locks = [threading.Lock() for _ in range(n)]
        self.deps: list[list[int]] = [[] for _ in range(n)]
        self.dep_locks = [threading.Lock() for _ in range(n)]
        for i in executed:
            self.status[i] = EXECUTED

    # counters -------------------------------------------------------------

    def _check_done_locked(self):
        if min(self.execution_idx, self.validation_idx) >= self.n and self.num_active == 0:
            self.done = True
            self.idle.notify_all()

    def _deactivate(self):
        with self.lock:
            self.num_active -= 1
            self._check_done_locked()

    def decrease_execution_idx(self, target: int):
        with self.lock:
            if target < self.execution_idx:
                self.execution_idx = target
            self.idle.notify_all()

    def decrease_validation_idx(self, target: int):
        with self.lock:
            if target < self.validation_idx:
                self.validation_idx = target
            self.idle.notify_all()

    def wait_for_work(self, timeout: float = 0.002):
        with self.lock:
            if not self.done and min(self.execution_idx, self.validation_idx) >= self.n:
                self.idle.wait(timeout)

    # task dispatch --------------------------------------------------------

    def try_incarnate(self, i: int) -> Version | None:
        if i < self.n:
            with self.status_locks[i]:
                if self.status[i] == READY:
                    self.status[i] = EXECUTING
                    return Version(i, self.incarnation[i])
        return None

    def next_version_to_execute(self) -> Version | None:
        with self.lock:
            if self.execution_idx >= self.n:
                self._check_done_locked()
                return None
            self.num_active += 1
            idx = self.execution_idx
            self.execution_idx += 1
        v = self.try_incarnate(idx)
        if v is None:
            self._deactivate()
        return v

    def next_version_to_validate(self) -> Version | None:
        with self.lock:
            if self.validation_idx >= self.n:
                self._check_done_locked()
                return None
            self.num_active += 1
            idx = self.validation_idx
            self.validation_idx += 1
        with self.status_locks[idx]:
            if self.status[idx] == EXECUTED:
                return Version(idx, self.incarnation[idx])
        self._deactivate()
        return None

    def next_task(self):
        if self.validation_idx < self.execution_idx:
            v = self.next_version_to_validate()
            if v is not None:
                return ("validate", v)
        else:
            v = self.next_version_to_execute()
            if v is not None:
                return ("execute", v)
        return None

    def add_dependency(self, i: int, blocking: int) -> bool:
        with self.dep_locks[blocking]:
            with self.status_locks[blocking]:
                if self.status[blocking] == EXECUTED:
                    return False
            with self.status_locks[i]:
                self.status[i] = ABORTING
            self.deps[blocking].append(i)
        self._deactivate()
        return True

    def _set_ready(self, i: int):
        with self.status_locks[i]:
            self.incarnation[i] += 1
            self.status[i] = READY

    def finish_execution(self, i: int, incarnation: int, wrote_new: bool):
        with self.status_locks[i]:
            self.status[i] = EXECUTED
        with self.dep_locks[i]:
            deps, self.deps[i] = self.deps[i], []
        for d in deps:
            self._set_ready(d)
        if deps:
            self.decrease_execution_idx(min(deps))
        if self.validation_idx > i:
            if wrote_new:
                self.decrease_validation_idx(i)
            else:
                return ("validate", Version(i, incarnation))
        self._deactivate()
        return None

    def try_validation_abort(self, i: int, incarnation: int) -> bool:
        with self.status_locks[i]:
            if self.incarnation[i] == incarnation and self.status[i] == EXECUTED:
                self.status[i] = ABORTING
                return True
        return False

    def finish_validation(self, i: int, aborted: bool):
        if aborted:
            self._set_ready(i)
            self.decrease_validation_idx(i + 1)
            if self.execution_idx > i:
                v = self.try_incarnate(i)
                if v is not None:
                    return ("execute", v)
        self._deactivate()
        return None


class OptimisticExecutor:
    """Single-use executor for one block.

    ``store``/``outputs``/``executed`` allow resuming from a partially executed
    block whose recorded writes are already in ``store`` (used by the guided
    engine's fallback); every resumed transaction is re-validated.
    """

    def __init__(self, block: Block, state: Mapping[ResourceKey, int], cfg: EngineConfig,
                 store: MultiVersionStore | None = None,
                 outputs: list[ExecutionOutput | None] | None = None,
                 sigs: SignaturePool | None = None):
        n = len(block.txns)
        self.block = block
        self.cfg = cfg
        self.store = store if store is not None else MultiVersionStore(state)
        self.outputs: list[ExecutionOutput | None] = list(outputs) if outputs is not None else [None] * n
        executed = [i for i, o in enumerate(self.outputs) if o is not None]
        self.sched = _Scheduler(n, executed)
        self.sigs = sigs if sigs is not None else SignaturePool(block.txns, cfg.sig_verify, cfg.sig_rounds)
        self.metrics = Metrics()
        self._mlock = threading.Lock()
        self.exec_cap = 10 * max(n, 1)
        self.error: BaseException | None = None

    def _count(self, **kw):
        with self._mlock:
            for k, v in kw.items():
                setattr(self.metrics, k, getattr(self.metrics, k) + v)

    def _try_execute(self, version: Version):
        i = version.txn_index
        txn = self.block.txns[i]
        store = self.store
        while True:
            ok = self.sigs.ensure(i)
            out = execute(txn, lambda k: store.read(k, i), self.cfg.vm, version.incarnation, ok)
            if isinstance(out, Blocked):
                self._count(dependency_waits=1)
                if self.sched.add_dependency(i, out.blocking):
                    return None
                continue
            break
        self._count(executions=1)
        if self.metrics.executions > self.exec_cap:
            raise LivelockError(f"more than {self.exec_cap} executions for a block of {len(self.block.txns)}")
        wrote_new = store.record(version, out.write_set)
        self.outputs[i] = out
        return self.sched.finish_execution(i, version.incarnation, wrote_new)

    def _validate(self, version: Version):
        i = version.txn_index
        out = self.outputs[i]
        self._count(validations=1)
        valid = self.store.validate_read_set(i, out.read_set)
        aborted = not valid and self.sched.try_validation_abort(i, version.incarnation)
        if aborted:
            self._count(aborts=1)
            self.store.mark_estimates(i)
        return self.sched.finish_validation(i, aborted)

    def _worker(self, gate: threading.Barrier | None = None):
        sched = self.sched
        task = None
        try:
            if gate is not None:
                gate.wait()
            while True:
                if task is not None:
                    kind, version = task
                    task = self._try_execute(version) if kind == "execute" else self._validate(version)
                    continue
                if sched.done or self.error is not None:
                    break
                task = sched.next_task()
                if task is None and not sched.done:
                    if not self.sigs.verify_next_idle():
                        sched.wait_for_work()
        except BaseException as e:  # surfaced on the calling thread
            self.error = e
            with sched.lock:
                sched.done = True
                sched.idle.notify_all()

    def run(self) -> BlockResult:
        start = time.perf_counter()
        if self.cfg.threads == 1:
            self._worker()
        else:
            gate = threading.Barrier(self.cfg.threads)
            workers = [threading.Thread(target=self._worker, args=(gate,), daemon=True)
                       for _ in range(self.cfg.threads)]
            for w in workers:
                w.start()
            for w in workers:
                w.join()
        if self.error is not None:
            raise self.error
        self.sigs.drain()
        final_state = self.store.finalize()
        outputs = list(self.outputs)
        assert all(o is not None for o in outputs)
        self.metrics.sig_verifications = self.sigs.verified
        self.metrics.idle_sig_verifications = self.sigs.idle_verified
        self.metrics.wall_time = time.perf_counter() - start
        return BlockResult(final_state, outputs, self.metrics)  # type: ignore[arg-type]


def execute_block_optimistic(block: Block, state: Mapping[ResourceKey, int], cfg: EngineConfig = EngineConfig()) -> BlockResult:
    return OptimisticExecutor(block, state, cfg).run()


def check_sequential_fold(base: Mapping[ResourceKey, int], result: BlockResult) -> bool:
    return replay_writes(base, result.outputs) == result.final_state
