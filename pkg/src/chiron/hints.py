"""Dependency hints: extraction from executed blocks, shape checks and wire format.

A hint carries only scheduling structure (last-writer -> reader edges,
per-transaction gas and longest gas-weighted chain cost). Nothing in it is
trusted for safety; the guided engine still validates every read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import Block, BlockResult, Estimate, Version


class HintFormatError(ValueError):
    pass


def longest_path_costs(n: int, edges: Iterable[tuple[int, int]], gas: Sequence[int]) -> list[int]:
    """path[i] = gas[i] + max(path[p] for parents p), in index order (edges go low -> high)."""
    parents: list[list[int]] = [[] for _ in range(n)]
    for p, c in edges:
        parents[c].append(p)
    path = [0] * n
    for i in range(n):
        best = 0
        for p in parents[i]:
            if path[p] > best:
                best = path[p]
        path[i] = gas[i] + best
    return path


@dataclass(frozen=True)
class DepGraph:
    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        parents: list[list[int]] = [[] for _ in range(self.n)]
        children: list[list[int]] = [[] for _ in range(self.n)]
        for p, c in self.edges:
            if not 0 <= p < c < self.n:
                raise ValueError(f"edge ({p}, {c}) violates parent < child < n={self.n}")
            parents[c].append(p)
            children[p].append(c)
        object.__setattr__(self, "parents", tuple(tuple(x) for x in parents))
        object.__setattr__(self, "children", tuple(tuple(x) for x in children))


@dataclass(frozen=True)
class Hint:
    block_height: int
    edges: tuple[tuple[int, int], ...]
    gas: tuple[int, ...]
    path_cost: tuple[int, ...]
    provider: str = ""

    @property
    def n(self) -> int:
        return len(self.gas)

    def depgraph(self) -> DepGraph:
        return DepGraph(self.n, self.edges)

    @classmethod
    def build(cls, block_height: int, edges: Iterable[tuple[int, int]], gas: Sequence[int], provider: str = "") -> "Hint":
        """Canonicalise edges and recompute path costs from ``gas``."""
        edges = tuple(sorted(set((int(p), int(c)) for p, c in edges)))
        gas = tuple(int(g) for g in gas)
        return cls(block_height, edges, gas, tuple(longest_path_costs(len(gas), edges, gas)), provider)


def extract_hints(result: BlockResult, block_height: int = 0, provider: str = "") -> Hint:
    edges = set()
    gas = []
    for j, out in enumerate(result.outputs):
        if out is None or out.txn_index != j:
            raise ValueError(f"output {j} missing or out of order; result is not a completed execution")
        for _, origin in out.read_set:
            if isinstance(origin, Version):
                edges.add((origin.txn_index, j))
            elif isinstance(origin, Estimate):
                raise ValueError(f"txn {j}: read of an estimate; result is not validated")
        gas.append(out.gas_used)
    return Hint.build(block_height, edges, gas, provider)


def verify_hint_shape(hint: Hint, block: Block) -> bool:
    try:
        n = len(block.txns)
        if len(hint.gas) != n or len(hint.path_cost) != n:
            return False
        if any((not isinstance(g, int)) or g < 0 for g in hint.gas):
            return False
        for edge in hint.edges:
            p, c = edge
            if not (isinstance(p, int) and isinstance(c, int) and 0 <= p < c < n):
                return False
        return list(hint.path_cost) == longest_path_costs(n, hint.edges, hint.gas)
    except (TypeError, ValueError):
        return False


def serialize(hint: Hint) -> bytes:
    doc = {
        "h": hint.block_height,
        "n": hint.n,
        "edges": [list(e) for e in sorted(hint.edges)],
        "gas": list(hint.gas),
        "path": list(hint.path_cost),
        "provider": hint.provider,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def _int_list(doc: dict, name: str) -> list[int]:
    value = doc.get(name)
    if not isinstance(value, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        raise HintFormatError(f"field {name!r} must be a list of integers")
    return value


def parse(data: bytes | str) -> Hint:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise HintFormatError(f"malformed hint document: {e}") from None
    if not isinstance(doc, dict):
        raise HintFormatError("hint document must be a JSON object")
    for name in ("h", "n"):
        if not isinstance(doc.get(name), int) or isinstance(doc.get(name), bool):
            raise HintFormatError(f"field {name!r} must be an integer")
    if not isinstance(doc.get("provider"), str):
        raise HintFormatError("field 'provider' must be a string")
    gas = _int_list(doc, "gas")
    path = _int_list(doc, "path")
    raw_edges = doc.get("edges")
    if not isinstance(raw_edges, list):
        raise HintFormatError("field 'edges' must be a list of [parent, child] pairs")
    edges = []
    for e in raw_edges:
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in e)):
            raise HintFormatError(f"field 'edges' has a malformed entry {e!r}")
        edges.append((e[0], e[1]))
    if len(gas) != doc["n"]:
        raise HintFormatError(f"field 'gas' has {len(gas)} entries, expected n={doc['n']}")
    if len(path) != doc["n"]:
        raise HintFormatError(f"field 'path' has {len(path)} entries, expected n={doc['n']}")
    return Hint(doc["h"], tuple(edges), tuple(gas), tuple(path), doc["provider"])


def dump_hints(hints: Iterable[Hint]) -> bytes:
    return b"".join(serialize(h) + b"\n" for h in hints)


def load_hints(path) -> list[Hint]:
    with open(path, "rb") as fh:
        return [parse(line) for line in fh if line.strip()]
