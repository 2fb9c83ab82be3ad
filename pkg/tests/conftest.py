import struct

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from chiron.model import Block, SignatureStamp, Transaction, TxnStep

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_MASK = (1 << 64) - 1


def ref_fnv(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) % (1 << 64)
    return h


def ref_mix(inputs, idx) -> int:
    return ref_fnv(b"".join(struct.pack("<Q", v & _MASK) for v in list(inputs) + [idx]))


def ref_fold(block: Block, base: dict) -> dict:
    """Interpreter rules re-derived by hand: in order, own writes visible, invalid sigs are no-ops."""
    state = dict(base)
    for txn in block.txns:
        if not txn.signature.valid:
            continue
        inputs, local = [], {}
        for step in txn.steps:
            if step.kind.value == "r":
                inputs.append(local[step.key] if step.key in local else state.get(step.key, 0))
            elif step.kind.value == "w":
                local[step.key] = ref_mix(inputs, txn.index)
        state.update(local)
    return state


def make_block(specs, height=0, invalid=()) -> Block:
    """specs: list of step lists like [("r","a"),("w","a"),("c",5)]."""
    txns = []
    for i, steps in enumerate(specs):
        built = []
        for op, arg in steps:
            built.append({"r": TxnStep.read, "w": TxnStep.write, "c": TxnStep.compute}[op](arg))
        payload = i.to_bytes(4, "little")
        txns.append(Transaction(i, tuple(built), payload, SignatureStamp.for_payload(payload, i not in invalid)))
    return Block(height, tuple(txns))


@st.composite
def random_blocks(draw, max_txns=20, n_keys=6, allow_invalid=True):
    n = draw(st.integers(0, max_txns))
    keys = [f"k{j}" for j in range(n_keys)]
    specs = []
    for _ in range(n):
        steps = draw(st.lists(st.tuples(st.sampled_from("rwc"), st.sampled_from(keys)), min_size=1, max_size=6))
        specs.append([(op, (3 if op == "c" else k)) for op, k in steps])
    invalid = draw(st.sets(st.integers(0, max(n - 1, 0)), max_size=n // 4)) if allow_invalid and n else set()
    return make_block(specs, invalid=invalid)


@pytest.fixture
def tmp_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
