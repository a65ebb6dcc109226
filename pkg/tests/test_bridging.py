import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import A, S
from saldae.bridging import (
    EmptyPathError,
    approach_then_swap,
    build_path_nodes,
    edge_kind,
    execute_path_strategy,
    merge_then_split,
    split_then_merge,
)
from saldae.coalition import CoalitionStructure, bottom, random_partition, swap_steps, top
from saldae.engine import SearchAgent, SolverConfig
from saldae.oracle import enumerate_partitions
from saldae.values import TableValueFunction, random_table, structure_value

BUILDERS = [split_then_merge, merge_then_split, approach_then_swap]


def check_path(path, source, target):
    prev = source
    for node, move in zip(path.nodes, path.moves):
        CoalitionStructure(node.masks, node.n)  # validates the partition
        kind = edge_kind(prev, node)
        assert kind is not None
        if move != "swap-step":
            assert kind == move
        prev = node
    assert path.nodes[-1] == target


def same_target_block(target, mask):
    return any(not mask & ~t for t in target.masks)


@st.composite
def pair(draw, max_n=10):
    n = draw(st.integers(2, max_n))
    rng = random.Random(draw(st.integers(0, 2**32)))
    a, b = random_partition(n, rng), random_partition(n, rng)
    if a == b:
        b = top(n) if a != top(n) else bottom(n)
    return a, b


def test_to_top_takes_n_minus_l_splits():
    src = S((1, 2, 3), (4, 5), n=5)
    path = split_then_merge(src, top(5))
    assert len(path) == 5 - 2 and set(path.moves) == {"split"}


def test_split_then_merge_six_agents_levels_2_to_4():
    src = S((1, 2, 3), (4, 5, 6), n=6)
    dst = S((1, 4), (2,), (3, 5), (6,), n=6)
    path = split_then_merge(src, dst)
    assert path.edges == (6 - 2) + (6 - 4)
    assert top(6) in path.nodes
    check_path(path, src, dst)


def test_merge_then_split_to_bottom_takes_l_minus_1_merges():
    src = S((1,), (2, 3), (4,), (5,), n=5)
    path = merge_then_split(src, bottom(5))
    assert len(path) == 4 - 1 and set(path.moves) == {"merge"}


def test_merge_then_split_six_agents_levels_2_to_4():
    src = S((1, 2, 3), (4, 5, 6), n=6)
    dst = S((1, 4), (2,), (3, 5), (6,), n=6)
    path = merge_then_split(src, dst)
    assert path.edges == 1 + 3
    assert bottom(6) in path.nodes
    check_path(path, src, dst)


def test_approach_then_swap_single_exchange_is_four_steps():
    src = S((4,), (1, 2), (3, 5), n=5)
    dst = S((4,), (1, 3), (2, 5), n=5)
    path = approach_then_swap(src, dst)
    i, j = src.masks.index(A(1, 2)), src.masks.index(A(3, 5))
    assert path.nodes == swap_steps(src, i, 1, j, 2)
    assert len(path) == 4 and set(path.moves) == {"swap-step"}


def test_approach_then_swap_six_agents_two_splits_first():
    src = S((1, 2, 3), (4, 5, 6), n=6)
    dst = S((1, 4), (2,), (3, 5), (6,), n=6)
    path = approach_then_swap(src, dst)
    assert path.moves[:2] == ["split", "split"]
    assert path.nodes[1].level == 4
    check_path(path, src, dst)


@pytest.mark.parametrize("build", BUILDERS)
def test_same_source_and_target_rejected(build):
    with pytest.raises(EmptyPathError):
        build(top(3), top(3))


@given(pair())
@settings(max_examples=500, deadline=None)
def test_random_pairs_valid_paths(p):
    src, dst = p
    n, l1, l2 = src.n, src.level, dst.level
    up = split_then_merge(src, dst)
    down = merge_then_split(src, dst)
    assert up.edges == (n - l1) + (n - l2)
    assert down.edges == l1 + l2 - 2
    assert min(up.edges, down.edges) <= n - 1
    for build in BUILDERS:
        check_path(build(src, dst), src, dst)


@given(pair())
@settings(max_examples=300, deadline=None)
def test_phase_constraints(p):
    src, dst = p
    up = split_then_merge(src, dst)
    prev = src
    for node, move in zip(up.nodes, up.moves):
        if move == "merge":
            new = set(node.masks) - set(prev.masks)
            assert all(same_target_block(dst, m) for m in new)
        prev = node


def _within(t, node):
    return any(not t & ~c for c in node.masks)


def test_merge_then_split_splits_never_separate_target_mates():
    rng = random.Random(3)
    for _ in range(300):
        n = rng.randint(2, 10)
        src, dst = random_partition(n, rng), random_partition(n, rng)
        if src == dst:
            continue
        path = merge_then_split(src, dst)
        for node, move in zip(path.nodes, path.moves):
            if move == "split":
                assert all(_within(t, node) for t in dst.masks)


def test_exhaustive_small_n():
    for n in range(1, 5):
        parts = list(enumerate_partitions(n))
        for a in parts:
            for b in parts:
                if a == b:
                    continue
                for build in BUILDERS:
                    check_path(build(a, b), a, b)


def test_all_three_dedupes():
    src = S((1, 2, 3), (4, 5, 6), n=6)
    dst = S((1, 4), (2,), (3, 5), (6,), n=6)
    nodes = build_path_nodes("all-three", src, dst)
    assert len(nodes) == len(set(nodes))
    assert src not in nodes and dst not in nodes
    singles = set()
    for name in ("split-then-merge", "merge-then-split", "approach-then-swap"):
        singles |= set(build_path_nodes(name, src, dst))
    assert set(nodes) == singles


def test_dump_lists_source_first():
    path = split_then_merge(bottom(3), top(3))
    assert path.dump().splitlines()[0] == "{{0,1,2}}"
    assert path.dump().splitlines()[-1] == "{{0},{1},{2}}"


# -- execution inside an agent ---------------------------------------------


def _agent(vf, strategy="split-then-merge"):
    agent = SearchAgent(vf, SolverConfig(bridge_strategy=strategy, seed=1))
    agent.initialize()
    return agent


def test_adjacent_structures_add_nothing():
    vf = random_table(4, 1)
    agent = _agent(vf)
    before = len(agent.substitute)
    src = S((1, 2), (3, 4), n=4)
    assert execute_path_strategy(agent, src, S((1,), (2,), (3, 4), n=4)) == 0
    assert len(agent.substitute) == before


@pytest.mark.parametrize("strategy", ["split-then-merge", "approach-then-swap", "all-three"])
def test_eight_agent_path_passes_through_split(strategy):
    src = S((2, 7), (1, 4), (3, 5, 6, 8), n=8)
    dst = S((2,), (3,), (7,), (1, 4), (5, 6, 8), n=8)
    assert S((2,), (7,), (1, 4), (3, 5, 6, 8), n=8) in build_path_nodes(strategy, src, dst)


def test_intermediate_above_incumbent_updates_it():
    n = 4
    vals = [0.0] + [1.0] * ((1 << n) - 1)
    vals[A(2, 3, 4)] = 10.0
    mid = S((1,), (2, 3, 4), n=n)
    vf = TableValueFunction(vals, n)
    agent = SearchAgent(vf, SolverConfig(seed=0), start=bottom(n))
    agent.initialize()
    assert agent.incumbent.value == 1.0
    before = len(agent.trace)
    execute_path_strategy(agent, bottom(n), top(n))
    assert agent.incumbent.structure == mid
    assert agent.incumbent.value == structure_value(vf, mid) == 11.0
    assert len(agent.trace) == before + 1
    assert agent.location(mid.masks) == "open"
