"""Shared data model: transactions, blocks, execution outputs and results.

Resource values are unsigned 64-bit integers. Every write stores a mix of
the values the transaction read so far, so any mis-ordered read surfaces as
a different final state.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

# One gas-burn round hashes one SHA-256 block.
ROUND_BYTES = 64
_BURN_CHUNK = 1 << 20
_ZEROS = memoryview(bytes(_BURN_CHUNK))

DEFAULT_SIG_ROUNDS = 100

ResourceKey = str


def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def mix_value(inputs: Iterable[int], txn_index: int) -> int:
    """FNV-1a over the little-endian 8-byte encoding of ``inputs`` then ``txn_index``."""
    vals = list(inputs)
    vals.append(txn_index)
    return fnv1a64(struct.pack(f"<{len(vals)}Q", *[v & MASK64 for v in vals]))


def burn_rounds(rounds: int) -> None:
    """Spend CPU proportional to ``rounds`` (one SHA-256 block per round)."""
    remaining = rounds * ROUND_BYTES
    while remaining > 0:
        take = min(remaining, _BURN_CHUNK)
        hashlib.sha256(_ZEROS[:take]).digest()
        remaining -= take


class StepKind(enum.Enum):
    READ = "r"
    WRITE = "w"
    COMPUTE = "c"


@dataclass(frozen=True, slots=True)
class TxnStep:
    kind: StepKind
    key: ResourceKey | None = None
    gas: int = 0

    def __post_init__(self):
        if self.kind is StepKind.COMPUTE:
            if self.key is not None or self.gas < 1:
                raise ValueError("compute step needs gas >= 1 and no key")
        else:
            if not self.key or self.gas != 0:
                raise ValueError(f"{self.kind.name.lower()} step needs a non-empty key and zero gas")

    @staticmethod
    def read(key: ResourceKey) -> "TxnStep":
        return TxnStep(StepKind.READ, key)

    @staticmethod
    def write(key: ResourceKey) -> "TxnStep":
        return TxnStep(StepKind.WRITE, key)

    @staticmethod
    def compute(gas: int) -> "TxnStep":
        return TxnStep(StepKind.COMPUTE, None, gas)


@dataclass(frozen=True, slots=True)
class SignatureStamp:
    tag: int
    valid: bool = True

    @classmethod
    def for_payload(cls, payload: bytes, valid: bool = True) -> "SignatureStamp":
        return cls(fnv1a64(payload), valid)


@dataclass(frozen=True, slots=True)
class Transaction:
    index: int
    steps: tuple[TxnStep, ...]
    payload: bytes = b""
    signature: SignatureStamp = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("transaction index must be non-negative")
        if not isinstance(self.steps, tuple):
            object.__setattr__(self, "steps", tuple(self.steps))
        if self.signature is None:
            object.__setattr__(self, "signature", SignatureStamp.for_payload(self.payload))

    @property
    def declared_gas(self) -> int:
        return sum(s.gas for s in self.steps if s.kind is StepKind.COMPUTE)

    def read_keys(self) -> list[ResourceKey]:
        return [s.key for s in self.steps if s.kind is StepKind.READ]

    def write_keys(self) -> list[ResourceKey]:
        return [s.key for s in self.steps if s.kind is StepKind.WRITE]


def verify_signature(txn: Transaction, cost_rounds: int = DEFAULT_SIG_ROUNDS) -> bool:
    """Simulated signature check: iterate a hash over the payload, then report the planted bit."""
    if cost_rounds < 1:
        raise ValueError("cost_rounds must be >= 1")
    h = txn.payload
    for _ in range(cost_rounds):
        h = hashlib.sha256(h + txn.payload).digest()
    return txn.signature.valid


@dataclass(frozen=True, slots=True)
class Block:
    height: int
    txns: tuple[Transaction, ...]

    def __post_init__(self):
        if not isinstance(self.txns, tuple):
            object.__setattr__(self, "txns", tuple(self.txns))
        for i, t in enumerate(self.txns):
            if t.index != i:
                raise ValueError(f"block {self.height}: txn at position {i} has index {t.index}")

    def __len__(self):
        return len(self.txns)


# -- read provenance ---------------------------------------------------------


class _Storage:
    __slots__ = ()

    def __repr__(self):
        return "Storage"

    def __reduce__(self):
        return (_storage, ())


STORAGE = _Storage()


def _storage():
    return STORAGE


@dataclass(frozen=True, slots=True, order=True)
class Version:
    txn_index: int
    incarnation: int


@dataclass(frozen=True, slots=True)
class Estimate:
    blocking: int


ReadOrigin = Union[_Storage, Version, Estimate]


class Status(enum.Enum):
    SUCCESS = "success"
    INVALID_SIGNATURE = "invalid_signature"
    INVALID_TXN = "invalid_txn"


@dataclass(frozen=True, slots=True)
class ExecutionOutput:
    txn_index: int
    incarnation: int
    read_set: tuple[tuple[ResourceKey, ReadOrigin], ...]
    write_set: tuple[tuple[ResourceKey, int], ...]
    gas_used: int
    status: Status = Status.SUCCESS

    def __post_init__(self):
        if self.status is not Status.SUCCESS and (self.write_set or self.gas_used):
            raise ValueError("non-success output must have an empty write set and zero gas")


@dataclass
class Metrics:
    executions: int = 0
    aborts: int = 0
    validations: int = 0
    sig_verifications: int = 0
    wall_time: float = 0.0
    dependency_waits: int = 0
    idle_sig_verifications: int = 0
    priority_violations: int = 0
    fallback: bool = False
    provider_trusted: bool | None = None


@dataclass
class BlockResult:
    final_state: dict[ResourceKey, int]
    outputs: list[ExecutionOutput]
    metrics: Metrics = field(default_factory=Metrics)

    def statuses(self) -> list[Status]:
        return [o.status for o in self.outputs]


def replay_writes(base: Mapping[ResourceKey, int], outputs: Iterable[ExecutionOutput]) -> dict[ResourceKey, int]:
    state = dict(base)
    for out in sorted(outputs, key=lambda o: o.txn_index):
        for key, value in out.write_set:
            state[key] = value
    return state


def state_digest(state: Mapping[ResourceKey, int]) -> int:
    """Order-independent 64-bit digest of a state map (keys sorted)."""
    h = FNV_OFFSET
    for key in sorted(state):
        h = fnv1a64(key.encode(), h)
        h = fnv1a64(struct.pack("<Q", state[key] & MASK64), h)
    return h


# -- workload file format (JSON Lines) --------------------------------------


class WorkloadFormatError(ValueError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def txn_to_json(txn: Transaction) -> dict:
    steps = []
    for s in txn.steps:
        if s.kind is StepKind.COMPUTE:
            steps.append({"op": "c", "gas": s.gas})
        else:
            steps.append({"op": s.kind.value, "key": s.key})
    return {"index": txn.index, "steps": steps, "payload_hex": txn.payload.hex(), "sig_valid": txn.signature.valid}


def txn_from_json(obj: dict) -> Transaction:
    try:
        index = obj["index"]
        raw_steps = obj["steps"]
        payload = bytes.fromhex(obj["payload_hex"])
        sig_valid = obj["sig_valid"]
    except KeyError as e:
        raise WorkloadFormatError(f"transaction missing field {e.args[0]!r}") from None
    except ValueError:
        raise WorkloadFormatError("field 'payload_hex' is not valid hex") from None
    if not isinstance(index, int) or not isinstance(sig_valid, bool) or not isinstance(raw_steps, list):
        raise WorkloadFormatError(f"transaction {index!r}: bad field types")
    steps = []
    for s in raw_steps:
        op = s.get("op")
        try:
            if op == "r":
                steps.append(TxnStep.read(s["key"]))
            elif op == "w":
                steps.append(TxnStep.write(s["key"]))
            elif op == "c":
                steps.append(TxnStep.compute(s["gas"]))
            else:
                raise WorkloadFormatError(f"transaction {index}: field 'op' has unknown value {op!r}")
        except KeyError as e:
            raise WorkloadFormatError(f"transaction {index}: step missing field {e.args[0]!r}") from None
        except ValueError as e:
            if isinstance(e, WorkloadFormatError):
                raise
            raise WorkloadFormatError(f"transaction {index}: {e}") from None
    return Transaction(index, tuple(steps), payload, SignatureStamp.for_payload(payload, sig_valid))


def dump_blocks(blocks: Iterable[Block]) -> str:
    lines = []
    for b in blocks:
        lines.append(_dump({"block": b.height, "n": len(b.txns)}))
        lines.extend(_dump(txn_to_json(t)) for t in b.txns)
    return "".join(line + "\n" for line in lines)


def iter_blocks(lines: Iterable[str]) -> Iterator[Block]:
    height = None
    expected = 0
    txns: list[Transaction] = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise WorkloadFormatError(f"line {lineno}: {e.msg}") from None
        if "block" in obj:
            if height is not None:
                if len(txns) != expected:
                    raise WorkloadFormatError(f"block {height}: header says n={expected}, found {len(txns)}")
                yield Block(height, tuple(txns))
            height, expected, txns = obj["block"], obj.get("n"), []
            if not isinstance(height, int) or not isinstance(expected, int):
                raise WorkloadFormatError(f"line {lineno}: block header needs integer 'block' and 'n'")
        else:
            if height is None:
                raise WorkloadFormatError(f"line {lineno}: transaction before any block header")
            txns.append(txn_from_json(obj))
    if height is not None:
        if len(txns) != expected:
            raise WorkloadFormatError(f"block {height}: header says n={expected}, found {len(txns)}")
        yield Block(height, tuple(txns))


def load_blocks(path) -> list[Block]:
    with open(path) as fh:
        return list(iter_blocks(fh))


def save_blocks(path, blocks: Iterable[Block]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dump_blocks(blocks))
