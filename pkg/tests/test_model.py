import random
import statistics
import time

import pytest

from chiron.model import (
    Block,
    ExecutionOutput,
    SignatureStamp,
    Status,
    Transaction,
    TxnStep,
    WorkloadFormatError,
    dump_blocks,
    fnv1a64,
    iter_blocks,
    mix_value,
    replay_writes,
    state_digest,
    verify_signature,
)

from conftest import make_block, ref_fnv, ref_mix


def test_fnv_standard_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_mix_value_golden_empty():
    # 8 zero bytes (the index 0) through FNV-1a 64
    assert mix_value([], 0) == ref_fnv(bytes(8))
    assert mix_value([], 0) == 0xA8C7F832281A39C5


def test_mix_value_matches_reference_and_is_pure():
    rng = random.Random(7)
    for _ in range(200):
        vals = [rng.getrandbits(64) for _ in range(rng.randint(0, 5))]
        i = rng.randint(0, 10_000)
        assert mix_value(vals, i) == ref_mix(vals, i) == mix_value(list(vals), i)


def test_mix_value_order_sensitive_bruteforce():
    rng = random.Random(1)
    for _ in range(1000):
        a, b, i = rng.getrandbits(64), rng.getrandbits(64), rng.randint(0, 1 << 20)
        if a == b:
            assert mix_value([a, b], i) == mix_value([b, a], i)
        else:
            assert mix_value([a, b], i) != mix_value([b, a], i)


def test_verify_signature_bits():
    good = Transaction(0, (TxnStep.write("k"),), b"p")
    bad = Transaction(0, (TxnStep.write("k"),), b"p", SignatureStamp.for_payload(b"p", False))
    assert verify_signature(good, 5) is True
    assert verify_signature(bad, 5) is False
    with pytest.raises(ValueError):
        verify_signature(good, 0)


def test_verify_signature_cost_scales_linearly():
    txn = Transaction(0, (TxnStep.write("k"),), bytes(32))

    def timed(r):
        samples = []
        for _ in range(7):
            t0 = time.perf_counter()
            verify_signature(txn, r)
            samples.append(time.perf_counter() - t0)
        return statistics.median(samples)

    timed(200)
    ratio = timed(2000) / timed(200)
    assert 7.0 <= ratio <= 13.0


def test_step_validation():
    with pytest.raises(ValueError):
        TxnStep.compute(0)
    with pytest.raises(ValueError):
        TxnStep.read("")


def test_block_requires_dense_indices():
    t = Transaction(1, (TxnStep.write("k"),))
    with pytest.raises(ValueError):
        Block(0, (t,))


def test_dirty_ledger_output_is_empty():
    with pytest.raises(ValueError):
        ExecutionOutput(0, 0, (), (("k", 1),), 0, Status.INVALID_SIGNATURE)
    ExecutionOutput(0, 0, (), (), 0, Status.INVALID_SIGNATURE)


def test_replay_writes_in_index_order():
    outs = [ExecutionOutput(1, 0, (), (("k", 2),), 1), ExecutionOutput(0, 0, (), (("k", 1), ("j", 5)), 1)]
    assert replay_writes({"z": 9}, outs) == {"z": 9, "k": 2, "j": 5}


def test_state_digest_order_independent():
    assert state_digest({"a": 1, "b": 2}) == state_digest({"b": 2, "a": 1})
    assert state_digest({"a": 1}) != state_digest({"a": 2})


def test_jsonl_round_trip():
    block = make_block([[("r", "a"), ("c", 4), ("w", "a")], [("w", "b")]], height=3, invalid={1})
    text = dump_blocks([block])
    (back,) = iter_blocks(text.splitlines())
    assert back == block
    assert dump_blocks([back]) == text


@pytest.mark.parametrize("lines,needle", [
    (['{"index":0,"steps":[],"payload_hex":"","sig_valid":true}'], "before any block header"),
    (['{"block":0,"n":2}', '{"index":0,"steps":[],"payload_hex":"","sig_valid":true}'], "n=2"),
    (['{"block":0,"n":1}', '{"index":0,"steps":[],"sig_valid":true}'], "payload_hex"),
    (['{"block":0,"n":1}', '{"index":0,"steps":[{"op":"x"}],"payload_hex":"","sig_valid":true}'], "'op'"),
    (['{"block":0,'], "line 1"),
])
def test_jsonl_errors_name_the_problem(lines, needle):
    with pytest.raises(WorkloadFormatError, match=needle):
        list(iter_blocks(lines))
