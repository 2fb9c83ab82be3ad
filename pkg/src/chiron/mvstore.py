"""Multi-version memory shared by the parallel engines.

Each key keeps one entry per writing transaction index. A read by
transaction ``i`` sees the entry with the highest index below ``i``; aborted
writes stay in place flagged as estimates so that dependents wait instead of
consuming stale values.
"""

from __future__ import annotations

import threading
from bisect import bisect_left, insort
from typing import Iterable, Mapping

from .model import STORAGE, Estimate, ReadOrigin, ResourceKey, Version


class ContractViolation(RuntimeError):
    pass


class _Cell:
    __slots__ = ("lock", "indices", "entries")

    def __init__(self):
        self.lock = threading.Lock()
        self.indices: list[int] = []
        # txn_index -> [incarnation, value, estimate]
        self.entries: dict[int, list] = {}


class MultiVersionStore:
    def __init__(self, base: Mapping[ResourceKey, int] | None = None):
        self.base = dict(base or {})
        self._cells: dict[ResourceKey, _Cell] = {}
        self._written: dict[int, tuple[ResourceKey, ...]] = {}
        self._written_lock = threading.Lock()

    def _cell(self, key: ResourceKey) -> _Cell:
        cell = self._cells.get(key)
        if cell is None:
            cell = self._cells.setdefault(key, _Cell())
        return cell

    def read(self, key: ResourceKey, reader: int) -> tuple[int | None, ReadOrigin]:
        cell = self._cells.get(key)
        if cell is not None:
            with cell.lock:
                pos = bisect_left(cell.indices, reader) - 1
                if pos >= 0:
                    idx = cell.indices[pos]
                    inc, value, estimate = cell.entries[idx]
                    if estimate:
                        return None, Estimate(idx)
                    return value, Version(idx, inc)
        return self.base.get(key, 0), STORAGE

    def write(self, key: ResourceKey, version: Version, value: int) -> bool:
        """Insert or replace the entry of ``version.txn_index``. Returns True if the entry is new."""
        cell = self._cell(key)
        idx = version.txn_index
        with cell.lock:
            entry = cell.entries.get(idx)
            if entry is None:
                cell.entries[idx] = [version.incarnation, value, False]
                insort(cell.indices, idx)
                return True
            if version.incarnation < entry[0]:
                raise ContractViolation(
                    f"write to {key!r} by txn {idx} incarnation {version.incarnation} "
                    f"is older than stored incarnation {entry[0]}"
                )
            entry[0], entry[1], entry[2] = version.incarnation, value, False
            return False

    def _delete(self, key: ResourceKey, txn_index: int) -> None:
        cell = self._cells.get(key)
        if cell is None:
            return
        with cell.lock:
            if cell.entries.pop(txn_index, None) is not None:
                cell.indices.pop(bisect_left(cell.indices, txn_index))

    def record(self, version: Version, write_set: Iterable[tuple[ResourceKey, int]]) -> bool:
        """Apply a whole write set for one incarnation.

        Entries of the previous incarnation for keys no longer written are
        removed. Returns True if some key was written that the previous
        incarnation did not write (a "new location" for validation purposes).
        """
        idx = version.txn_index
        keys = []
        wrote_new = False
        for key, value in write_set:
            if self.write(key, version, value):
                wrote_new = True
            keys.append(key)
        with self._written_lock:
            previous = self._written.get(idx, ())
            self._written[idx] = tuple(keys)
        stale = set(previous).difference(keys)
        for key in stale:
            self._delete(key, idx)
        return wrote_new

    def written_keys(self, txn_index: int) -> tuple[ResourceKey, ...]:
        return self._written.get(txn_index, ())

    def mark_estimates(self, txn_index: int) -> None:
        for key in self._written.get(txn_index, ()):
            cell = self._cells.get(key)
            if cell is None:
                continue
            with cell.lock:
                entry = cell.entries.get(txn_index)
                if entry is not None:
                    entry[2] = True

    def validate_read_set(self, txn_index: int, read_set: Iterable[tuple[ResourceKey, ReadOrigin]]) -> bool:
        for key, origin in read_set:
            _, current = self.read(key, txn_index)
            if isinstance(current, Estimate) or current != origin:
                return False
        return True

    def finalize(self) -> dict[ResourceKey, int]:
        state = dict(self.base)
        for key, cell in self._cells.items():
            with cell.lock:
                for idx, (_, _, estimate) in cell.entries.items():
                    if estimate:
                        raise ContractViolation(f"key {key!r} still carries an estimate from txn {idx}")
                if cell.indices:
                    state[key] = cell.entries[cell.indices[-1]][1]
        return state
