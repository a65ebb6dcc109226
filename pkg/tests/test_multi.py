import random
import threading

import pytest

from saldae.coalition import bottom, parse_structure, top
from saldae.engine import Incumbent, SolverConfig, run
from saldae.multi import (
    Conflict,
    ConflictRegistry,
    Owner,
    Registered,
    assign_start_nodes,
    audit_expansions,
    audit_storage,
    resolve_bypass,
    resolve_manage,
    run_multi,
)
from saldae.oracle import optimal_dp
from saldae.values import random_table, structure_value


def test_start_nodes_m1():
    assert assign_start_nodes(1, 5, random.Random(0)) == [bottom(5)]


def test_start_nodes_m2_n3():
    assert assign_start_nodes(2, 3, random.Random(0)) == [
        parse_structure("{{0,1,2}}"),
        parse_structure("{{0},{1},{2}}"),
    ]


def test_start_nodes_deterministic():
    a = assign_start_nodes(5, 9, random.Random(7))
    b = assign_start_nodes(5, 9, random.Random(7))
    assert a == b and len(a) == 5 and a[:2] == [bottom(9), top(9)]


def test_start_nodes_need_an_agent():
    with pytest.raises(ValueError):
        assign_start_nodes(0, 3, random.Random(0))


# -- registry ----------------------------------------------------------------


def test_register_and_conflict():
    reg = ConflictRegistry()
    assert reg.try_register((1, 2), agent=0, rank=5) == Registered((1, 2))
    res = reg.try_register((1, 2), agent=1, rank=3)
    assert res == Conflict((1, 2), Owner(0, "open", 5))
    assert len(reg) == 1


def test_bypass_drops_challenger():
    reg = ConflictRegistry()
    reg.try_register((3,), agent=1, rank=0)
    res = reg.try_register((3,), agent=2, rank=0)
    assert isinstance(res, Conflict) and resolve_bypass(res) == "drop"
    assert reg.owner((3,)).agent == 1 and len(reg) == 1


def test_manage_rules():
    assert resolve_manage(5, 2) == "transfer"
    assert resolve_manage(2, 5) == "drop"
    assert resolve_manage(4, 4) == "drop"


def test_transfer_requires_expected_owner():
    reg = ConflictRegistry()
    reg.try_register((7,), 0, 5)
    stale = Owner(0, "open", 9)
    assert not reg.transfer((7,), stale, 1, 1, "open")
    assert reg.transfer((7,), reg.owner((7,)), 1, 1, "open")
    assert reg.owner((7,)).agent == 1


def test_expanded_tombstone_is_permanent():
    reg = ConflictRegistry()
    reg.try_register((1,), 0, 0)
    assert not reg.claim_expansion((1,), 1)
    assert reg.claim_expansion((1,), 0)
    assert not reg.claim_expansion((1,), 0)
    assert isinstance(reg.try_register((1,), 0, 0), Conflict)
    assert reg.is_expanded((1,))


def test_concurrent_distinct_registrations():
    reg = ConflictRegistry()
    total, workers = 100_000, 8
    failures = []

    def work(w):
        for k in range(w, total, workers):
            if not isinstance(reg.try_register((k,), w, k), Registered):
                failures.append(k)

    ts = [threading.Thread(target=work, args=(w,)) for w in range(workers)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert not failures and len(reg) == total
    assert all(reg.owner((k,)).agent == k % workers for k in range(total))


def test_concurrent_contested_registrations_single_winner():
    reg = ConflictRegistry()
    wins = [[] for _ in range(4)]
    barrier = threading.Barrier(4)

    def work(w):
        barrier.wait()
        for k in range(5000):
            if isinstance(reg.try_register((k,), w, 0), Registered):
                wins[w].append(k)

    ts = [threading.Thread(target=work, args=(w,)) for w in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    claimed = sorted(k for w in wins for k in w)
    assert claimed == list(range(5000))


def test_shared_incumbent_concurrent_max():
    inc = Incumbent(bottom(3), 0.0)
    values = list(range(1, 2001))
    random.Random(0).shuffle(values)
    chunks = [values[i::4] for i in range(4)]

    def work(vals):
        for v in vals:
            inc.offer(top(3), float(v))

    ts = [threading.Thread(target=work, args=(c,)) for c in chunks]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert inc.value == 2000.0
    assert inc.trace.is_monotone()


# -- full runs -----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(50))
def test_single_agent_equivalence(seed):
    n = 4 + seed % 7
    vf = random_table(n, 900 + seed)
    start = ("bottom", "top", "random")[seed % 3]
    cfg = SolverConfig(seed=seed, max_expansions=150, start=start)
    a = run(cfg, vf)
    b = run_multi(cfg, vf, m=1)
    assert a.trace.untimed() == b.trace.untimed()
    assert a.structure == b.structure and a.value == b.value
    assert a.expansions == b.expansions and a.evaluations == b.evaluations


@pytest.mark.parametrize("conflict", ["bypass", "manage"])
@pytest.mark.parametrize("mode", ["sequential", "threads"])
def test_storage_and_expansion_audits(conflict, mode):
    vf = random_table(9, 4)
    res = run_multi(SolverConfig(seed=1, max_expansions=600), vf, m=4, conflict=conflict, mode=mode)
    assert audit_storage(res.agents) == []
    assert audit_expansions(res.registry, res.agents) == []
    for a in res.agents:
        for k in a.stored_nodes():
            owner = res.registry.owner(k)
            assert owner.agent == a.id and owner.tag == a.location(k)
    assert res.value == structure_value(vf, res.structure)
    assert res.trace.is_monotone()


def test_conflicts_are_counted():
    vf = random_table(8, 2)
    res = run_multi(SolverConfig(seed=3, max_expansions=800), vf, m=4, conflict="manage")
    c = res.conflicts
    assert c["detected"] > 0
    assert c["detected"] >= c["transferred"]
    assert sum(res.agent_expansions) == res.expansions


def test_sequential_mode_deterministic():
    vf = random_table(10, 5)
    cfg = SolverConfig(seed=9, max_expansions=400)
    a, b = run_multi(cfg, vf, m=3), run_multi(cfg, vf, m=3)
    assert a.trace.untimed() == b.trace.untimed()
    assert [t.untimed() for t in a.agent_traces] == [t.untimed() for t in b.agent_traces]


def test_four_agents_versus_one_small_tables():
    wins = 0
    instances = 20
    for seed in range(instances):
        n = 4 + seed % 5
        vf = random_table(n, 300 + seed)
        best = optimal_dp(vf).value
        one = run(SolverConfig(seed=seed, time_limit=0.15), vf)
        four = run_multi(SolverConfig(seed=seed, time_limit=0.15), vf, m=4)
        assert four.value <= best + 1e-9
        wins += four.value >= one.value
    assert wins >= 0.8 * instances


def test_unknown_modes_rejected():
    vf = random_table(3, 0)
    with pytest.raises(ValueError):
        run_multi(SolverConfig(max_expansions=2), vf, conflict="ignore")
    with pytest.raises(ValueError):
        run_multi(SolverConfig(max_expansions=2), vf, mode="processes")
