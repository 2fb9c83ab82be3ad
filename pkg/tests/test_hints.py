import functools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chiron.blockstm import EngineConfig, execute_block_optimistic, sequential_execute
from chiron.hints import Hint, HintFormatError, dump_hints, extract_hints, load_hints, longest_path_costs, \
    parse, serialize, verify_hint_shape
from chiron.model import Block
from chiron.vm import LOGIC_ONLY
from chiron.workloads import WorkloadKind, default_spec, generate, independent_block

from conftest import make_block, random_blocks


def bruteforce_edges(block: Block) -> set:
    """For each read that precedes the txn's own write, scan backwards for the nearest
    earlier valid writer of that key."""
    edges = set()
    txns = block.txns
    for j, txn in enumerate(txns):
        if not txn.signature.valid:
            continue
        written_so_far = set()
        for step in txn.steps:
            if step.kind.value == "w":
                written_so_far.add(step.key)
            elif step.kind.value == "r" and step.key not in written_so_far:
                for i in range(j - 1, -1, -1):
                    if txns[i].signature.valid and step.key in txns[i].write_keys():
                        edges.add((i, j))
                        break
    return edges


def bruteforce_paths(n, edges, gas):
    """Longest path ending at each node, by memoised recursion over parents (no index-order assumption)."""
    parents = {c: [p for p, cc in edges if cc == c] for c in range(n)}

    @functools.cache
    def best(i):
        return gas[i] + max((best(p) for p in parents[i]), default=0)
    return [best(i) for i in range(n)]


def test_three_txn_example():
    block = make_block([[("w", "k1")], [("r", "k1"), ("w", "k2")], [("r", "k9"), ("w", "k9")]])
    hint = extract_hints(sequential_execute(block, {}, LOGIC_ONLY))
    assert hint.edges == ((0, 1),)


def test_path_cost_example():
    assert longest_path_costs(3, [(0, 1)], [5, 7, 3]) == [5, 12, 3]
    assert Hint.build(0, [(0, 1)], [5, 7, 3]).path_cost == (5, 12, 3)


def test_disjoint_block_has_no_edges():
    res = sequential_execute(independent_block(30, gas=4), {}, LOGIC_ONLY)
    hint = extract_hints(res)
    assert hint.edges == ()
    assert hint.path_cost == hint.gas


def test_extracted_dag_matches_bruteforce_on_50_blocks():
    rng = random.Random(3)
    kinds = list(WorkloadKind)
    for trial in range(50):
        n = rng.randint(1, 200)
        spec = default_spec(kinds[trial % len(kinds)], txns_per_block=n, n_blocks=1, seed=trial,
                            window_txns=max(n, 50), invalid_sig_share=0.1)
        (block,) = generate(spec)
        res = execute_block_optimistic(block, {}, EngineConfig(4, vm=LOGIC_ONLY))
        hint = extract_hints(res)
        assert set(hint.edges) == bruteforce_edges(block)
        assert list(hint.path_cost) == bruteforce_paths(n, hint.edges, hint.gas)


@given(random_blocks(max_txns=20))
def test_extract_matches_bruteforce_property(block):
    hint = extract_hints(sequential_execute(block, {}, LOGIC_ONLY))
    assert set(hint.edges) == bruteforce_edges(block)
    assert verify_hint_shape(hint, block)


@given(st.integers(1, 25).flatmap(lambda n: st.tuples(
    st.just(n),
    st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] < e[1])),
    st.lists(st.integers(0, 50), min_size=n, max_size=n))))
def test_path_costs_match_bruteforce(case):
    n, edges, gas = case
    assert longest_path_costs(n, edges, gas) == bruteforce_paths(n, edges, gas)


def test_shape_checks():
    block = make_block([[("w", "a")], [("r", "a"), ("w", "a")], [("w", "b")]])
    hint = extract_hints(sequential_execute(block, {}, LOGIC_ONLY))
    assert verify_hint_shape(hint, block)
    assert not verify_hint_shape(Hint(0, ((2, 1),), hint.gas, hint.path_cost), block)
    bumped = list(hint.path_cost)
    bumped[1] += 1
    assert not verify_hint_shape(Hint(0, hint.edges, hint.gas, tuple(bumped)), block)
    assert not verify_hint_shape(Hint(0, (), hint.gas[:2], hint.path_cost[:2]), block)
    assert not verify_hint_shape(Hint(0, (("x", 1),), hint.gas, hint.path_cost), block)


@pytest.mark.parametrize("kind", list(WorkloadKind))
def test_round_trip_all_workloads(kind):
    (block,) = generate(default_spec(kind, txns_per_block=300, n_blocks=1))
    hint = extract_hints(execute_block_optimistic(block, {}, EngineConfig(4, vm=LOGIC_ONLY)), 0, "node1")
    assert parse(serialize(hint)) == hint
    assert serialize(parse(serialize(hint))) == serialize(hint)


def test_truncated_and_malformed_input_rejected():
    data = serialize(Hint.build(0, [(0, 1)], [1, 2]))
    for cut in (1, len(data) // 2, len(data) - 1):
        with pytest.raises(HintFormatError):
            parse(data[:cut])
    with pytest.raises(HintFormatError, match="'gas'"):
        parse(b'{"h":0,"n":2,"edges":[],"gas":[1],"path":[1,1],"provider":""}')
    with pytest.raises(HintFormatError, match="'edges'"):
        parse(b'{"h":0,"n":1,"edges":[[0]],"gas":[1],"path":[1],"provider":""}')
    with pytest.raises(HintFormatError, match="'provider'"):
        parse(b'{"h":0,"n":1,"edges":[],"gas":[1],"path":[1]}')


def test_mixed_hint_size_budget():
    (block,) = generate(default_spec("mixed", n_blocks=1))
    hint = extract_hints(execute_block_optimistic(block, {}, EngineConfig(4, vm=LOGIC_ONLY)))
    assert len(serialize(hint)) < 256 * 1024


def test_extract_rejects_incomplete_result():
    res = sequential_execute(make_block([[("w", "a")]]), {}, LOGIC_ONLY)
    res.outputs[0] = None
    with pytest.raises(ValueError):
        extract_hints(res)


def test_jsonl_file_round_trip(tmp_path):
    hints = [Hint.build(h, [(0, 1)], [3, 4], "p") for h in range(3)]
    path = tmp_path / "h.jsonl"
    path.write_bytes(dump_hints(hints))
    assert load_hints(path) == hints
