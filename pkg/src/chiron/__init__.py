"""Hint-guided and optimistic parallel block execution over a synthetic VM."""

from .blockstm import EngineConfig, LivelockError, execute_block_optimistic, sequential_execute
from .guided import run_guided
from .hints import Hint, extract_hints, parse, serialize, verify_hint_shape
from .model import Block, BlockResult, Metrics, Status, Transaction, TxnStep, state_digest
from .sigpool import SigMode
from .vm import LOGIC_ONLY, VmConfig
from .workloads import WorkloadKind, WorkloadSpec, default_spec, generate, measure_stats
from .syncsim import SimConfig, SimTrace, corrupt_hint, simulate

__all__ = [
    "Block", "BlockResult", "EngineConfig", "Hint", "LOGIC_ONLY", "LivelockError", "Metrics", "SigMode",
    "SimConfig", "SimTrace", "Status", "Transaction", "TxnStep", "VmConfig", "WorkloadKind", "WorkloadSpec",
    "corrupt_hint", "default_spec", "execute_block_optimistic", "extract_hints", "generate", "measure_stats",
    "parse", "run_guided", "sequential_execute", "serialize", "simulate", "state_digest", "verify_hint_shape",
]
