"""Synthetic transaction interpreter standing in for a smart-contract VM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .model import (
    Estimate,
    ExecutionOutput,
    ReadOrigin,
    ResourceKey,
    Status,
    StepKind,
    Transaction,
    burn_rounds,
    mix_value,
)

Reader = Callable[[ResourceKey], "tuple[int | None, ReadOrigin]"]


@dataclass(frozen=True)
class VmConfig:
    gas_cost_rounds: int = 25
    prologue_gas: int = 20
    epilogue_gas: int = 20

    def __post_init__(self):
        if min(self.gas_cost_rounds, self.prologue_gas, self.epilogue_gas) < 0:
            raise ValueError("VmConfig fields must be non-negative")

    def txn_gas(self, txn: Transaction) -> int:
        return self.prologue_gas + txn.declared_gas + self.epilogue_gas


LOGIC_ONLY = VmConfig(gas_cost_rounds=0)


@dataclass(frozen=True, slots=True)
class Blocked:
    blocking: int


def execute(
    txn: Transaction,
    reader: Reader,
    cfg: VmConfig = VmConfig(),
    incarnation: int = 0,
    sig_valid: bool = True,
) -> ExecutionOutput | Blocked:
    if not sig_valid:
        return ExecutionOutput(txn.index, incarnation, (), (), 0, Status.INVALID_SIGNATURE)

    rounds = cfg.gas_cost_rounds
    burn_rounds(cfg.prologue_gas * rounds)
    inputs: list[int] = []
    read_set: list[tuple[ResourceKey, ReadOrigin]] = []
    local: dict[ResourceKey, int] = {}
    writes: dict[ResourceKey, int] = {}
    for step in txn.steps:
        kind = step.kind
        if kind is StepKind.READ:
            if step.key in local:
                inputs.append(local[step.key])
                continue
            value, origin = reader(step.key)
            if isinstance(origin, Estimate):
                return Blocked(origin.blocking)
            read_set.append((step.key, origin))
            inputs.append(value)
        elif kind is StepKind.WRITE:
            value = mix_value(inputs, txn.index)
            local[step.key] = value
            writes[step.key] = value
        else:
            burn_rounds(step.gas * rounds)
    burn_rounds(cfg.epilogue_gas * rounds)
    return ExecutionOutput(
        txn.index,
        incarnation,
        tuple(read_set),
        tuple(writes.items()),
        cfg.txn_gas(txn),
    )
