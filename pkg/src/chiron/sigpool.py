"""Exactly-once signature verification shared by both parallel engines."""

from __future__ import annotations

import enum
import threading
from typing import Sequence

from .model import DEFAULT_SIG_ROUNDS, Transaction, verify_signature


class SigMode(enum.Enum):
    OFF = "off"
    INLINE = "inline"
    IDLE = "idle"

    @classmethod
    def parse(cls, value: "str | SigMode") -> "SigMode":
        if isinstance(value, SigMode):
            return value
        aliases = {"idlecore": "idle", "idle_core": "idle"}
        value = aliases.get(value.lower(), value.lower())
        return cls(value)


class SignaturePool:
    """Per-transaction verdict cache.

    ``ensure(i)`` returns the verdict for txn ``i``, verifying it on the
    calling thread unless another thread already claimed it (then it waits).
    ``verify_next_idle()`` lets an otherwise idle worker claim the next
    unverified transaction in index order.
    """

    def __init__(self, txns: Sequence[Transaction], mode: SigMode, cost_rounds: int = DEFAULT_SIG_ROUNDS):
        self.txns = txns
        self.mode = mode
        self.cost_rounds = cost_rounds
        n = len(txns)
        self._lock = threading.Lock()
        self._claimed = [False] * n
        self._verdict: list[bool | None] = [None] * n
        self._events = [threading.Event() for _ in range(n)] if mode is not SigMode.OFF else []
        self._cursor = 0
        self.verified = 0
        self.idle_verified = 0

    def _claim(self, i: int) -> bool:
        with self._lock:
            if self._claimed[i]:
                return False
            self._claimed[i] = True
            return True

    def _run(self, i: int, idle: bool) -> bool:
        ok = verify_signature(self.txns[i], self.cost_rounds)
        self._verdict[i] = ok
        with self._lock:
            self.verified += 1
            if idle:
                self.idle_verified += 1
        self._events[i].set()
        return ok

    def ensure(self, i: int) -> bool:
        if self.mode is SigMode.OFF:
            return self.txns[i].signature.valid
        v = self._verdict[i]
        if v is not None:
            return v
        if self._claim(i):
            return self._run(i, idle=False)
        self._events[i].wait()
        return self._verdict[i]  # type: ignore[return-value]

    def has_idle_work(self) -> bool:
        if self.mode is not SigMode.IDLE:
            return False
        with self._lock:
            while self._cursor < len(self._claimed) and self._claimed[self._cursor]:
                self._cursor += 1
            return self._cursor < len(self._claimed)

    def verify_next_idle(self) -> bool:
        if self.mode is not SigMode.IDLE:
            return False
        with self._lock:
            while self._cursor < len(self._claimed) and self._claimed[self._cursor]:
                self._cursor += 1
            if self._cursor >= len(self._claimed):
                return False
            i = self._cursor
            self._claimed[i] = True
        self._run(i, idle=True)
        return True

    def drain(self) -> None:
        """Verify whatever is left; block completion requires every verdict."""
        if self.mode is SigMode.OFF:
            return
        for i in range(len(self.txns)):
            self.ensure(i)
