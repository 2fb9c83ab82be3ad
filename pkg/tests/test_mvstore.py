import pytest
from hypothesis import given
from hypothesis import strategies as st

from chiron.blockstm import sequential_execute
from chiron.model import STORAGE, Estimate, Version
from chiron.mvstore import ContractViolation, MultiVersionStore
from chiron.vm import LOGIC_ONLY, execute

from conftest import random_blocks


def test_empty_read_is_storage_zero():
    assert MultiVersionStore().read("k", 5) == (0, STORAGE)
    assert MultiVersionStore({"k": 9}).read("k", 5) == (9, STORAGE)


def test_lower_writer_visible_higher_invisible():
    s = MultiVersionStore()
    s.write("k", Version(2, 0), 11)
    assert s.read("k", 5) == (11, Version(2, 0))
    s2 = MultiVersionStore()
    s2.write("k", Version(7, 0), 11)
    assert s2.read("k", 5) == (0, STORAGE)
    assert s.read("k", 2) == (0, STORAGE)


def test_incarnation_replaces_and_older_is_rejected():
    s = MultiVersionStore()
    assert s.write("k", Version(2, 0), 1) is True
    assert s.write("k", Version(2, 1), 2) is False
    assert s.read("k", 3) == (2, Version(2, 1))
    with pytest.raises(ContractViolation):
        s.write("k", Version(2, 0), 3)


def test_multiple_writers_selected_by_reader():
    s = MultiVersionStore()
    s.write("k", Version(2, 0), 20)
    s.write("k", Version(7, 0), 70)
    assert s.read("k", 5) == (20, Version(2, 0))
    assert s.read("k", 8) == (70, Version(7, 0))


def test_estimates_mark_and_clear():
    s = MultiVersionStore()
    s.record(Version(2, 0), [("k", 5)])
    s.mark_estimates(2)
    assert s.read("k", 5) == (None, Estimate(2))
    s.record(Version(2, 1), [("k", 6)])
    assert s.read("k", 5) == (6, Version(2, 1))


def test_mark_estimates_without_writes_is_noop():
    s = MultiVersionStore({"a": 1})
    s.record(Version(3, 0), [])
    s.mark_estimates(3)
    s.mark_estimates(4)
    assert s.finalize() == {"a": 1}


def test_record_drops_stale_keys():
    s = MultiVersionStore()
    s.record(Version(1, 0), [("a", 1), ("b", 2)])
    assert s.record(Version(1, 1), [("a", 3)]) is False
    assert s.read("b", 4) == (0, STORAGE)
    assert s.record(Version(1, 2), [("a", 3), ("c", 1)]) is True


def test_validate_read_set_cases():
    s = MultiVersionStore()
    s.write("k", Version(1, 0), 4)
    rs = (("k", Version(1, 0)),)
    assert s.validate_read_set(5, rs)
    s.write("k", Version(8, 0), 4)
    assert s.validate_read_set(5, rs)
    s.write("k", Version(3, 0), 4)
    assert not s.validate_read_set(5, rs)


def test_validate_rejects_estimate():
    s = MultiVersionStore()
    s.record(Version(1, 0), [("k", 4)])
    rs = (("k", Version(1, 0)),)
    s.mark_estimates(1)
    assert not s.validate_read_set(5, rs)


def test_finalize_cases():
    assert MultiVersionStore({"a": 3}).finalize() == {"a": 3}
    s = MultiVersionStore()
    s.write("k", Version(2, 0), 20)
    s.write("k", Version(7, 0), 70)
    assert s.finalize() == {"k": 70}
    s.record(Version(7, 0), [("k", 70)])
    s.mark_estimates(7)
    with pytest.raises(ContractViolation):
        s.finalize()


@given(st.lists(st.tuples(st.integers(0, 15), st.sampled_from("abc"), st.integers(0, 99)), max_size=30),
       st.integers(0, 16), st.sampled_from("abc"))
def test_snapshot_isolation_by_index(writes, reader, key):
    s = MultiVersionStore()
    latest = {}
    for idx, k, v in writes:
        s.write(k, Version(idx, 0), v)
        latest[(idx, k)] = v
    value, origin = s.read(key, reader)
    lower = [i for (i, k) in latest if k == key and i < reader]
    if lower:
        assert origin == Version(max(lower), 0)
        assert value == latest[(max(lower), key)]
    else:
        assert (value, origin) == (0, STORAGE)


@given(st.lists(st.tuples(st.integers(0, 9), st.sampled_from("abc")), min_size=1, max_size=20), st.integers(0, 9))
def test_estimate_propagation(writes, marked):
    s = MultiVersionStore()
    by_txn = {}
    for idx, k in writes:
        by_txn.setdefault(idx, set()).add(k)
    for idx, keys in by_txn.items():
        s.record(Version(idx, 0), [(k, idx) for k in sorted(keys)])
    s.mark_estimates(marked)
    for key in "abc":
        writers = sorted(i for i, ks in by_txn.items() if key in ks)
        for reader in range(11):
            below = [w for w in writers if w < reader]
            _, origin = s.read(key, reader)
            if below and below[-1] == marked:
                assert origin == Estimate(marked)
            else:
                assert not isinstance(origin, Estimate)


@given(random_blocks(max_txns=10))
def test_finalize_equals_sequential(block):
    store = MultiVersionStore({"k0": 5})
    for txn in block.txns:
        out = execute(txn, lambda k, i=txn.index: store.read(k, i), LOGIC_ONLY, 0, txn.signature.valid)
        store.record(Version(txn.index, 0), out.write_set)
    assert store.finalize() == sequential_execute(block, {"k0": 5}, LOGIC_ONLY).final_state
