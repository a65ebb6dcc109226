"""Several search agents sharing one incumbent and a node-ownership registry.

Every node an agent stores (in any of its three lists) is registered here.
When a second agent wants the same node the conflict is settled either by
*bypassing* (the first owner keeps it) or by *managing* (whichever agent would
expand it sooner keeps it). Expanded nodes become permanent tombstones, so no
node is ever expanded twice.

Agents run in a deterministic round-robin loop by default. ``mode="threads"``
runs one thread per agent with each step serialized by a global lock; this
exercises the shared structures under real interleavings but gives no speedup.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .coalition import CoalitionStructure, bottom, random_partition, top
from .engine import AnytimeTrace, Counter, Incumbent, SearchAgent, SolverConfig, StepOutcome, _budget_left
from .values import ValueFunction, structure_value

__all__ = [
    "CONFLICT_MODES",
    "Owner",
    "Registered",
    "Conflict",
    "ConflictRegistry",
    "ConflictStats",
    "assign_start_nodes",
    "resolve_bypass",
    "resolve_manage",
    "MultiResult",
    "run_multi",
    "agent_seed",
    "audit_storage",
    "audit_expansions",
]

CONFLICT_MODES = ("bypass", "manage")
EXPANDED = "expanded"


class Owner(NamedTuple):
    agent: int
    tag: str
    rank: int


class Registered(NamedTuple):
    key: tuple


class Conflict(NamedTuple):
    key: tuple
    owner: Owner


def assign_start_nodes(m: int, n: int, rng: random.Random) -> list[CoalitionStructure]:
    """Bottom for agent 0, top for agent 1, random partitions for the rest."""
    if m < 1:
        raise ValueError("need at least one agent")
    starts = [bottom(n)]
    if m >= 2:
        starts.append(top(n))
    for _ in range(m - 2):
        starts.append(random_partition(n, rng))
    return starts


def agent_seed(seed: int, agent: int) -> int:
    # agent 0 keeps the run seed so a one-agent run matches the single engine
    if agent == 0:
        return seed
    return (seed * 0x9E3779B97F4A7C15 + agent * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF


def resolve_bypass(conflict: Conflict) -> str:
    """The later agent always gives the node up."""
    return "drop"


def resolve_manage(owner_rank: int | None, challenger_rank: int) -> str:
    """``"transfer"`` iff the challenger would expand the node strictly sooner."""
    if owner_rank is None or not challenger_rank < owner_rank:
        return "drop"
    return "transfer"


@dataclass
class ConflictStats:
    detected: int = 0
    bypassed: int = 0
    transferred: int = 0

    def as_dict(self) -> dict:
        return {"detected": self.detected, "bypassed": self.bypassed, "transferred": self.transferred}


class ConflictRegistry:
    """Key -> current owner, plus tombstones for expanded keys.

    All operations take one lock, so each is atomic.
    """

    def __init__(self) -> None:
        self._owner: dict[tuple, Owner] = {}
        self.expanded_log: list[tuple[tuple, int]] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._owner)

    def owner(self, key: tuple) -> Owner | None:
        return self._owner.get(key)

    def try_register(self, key: tuple, agent: int, rank: int, tag: str = "open") -> Registered | Conflict:
        with self._lock:
            cur = self._owner.get(key)
            if cur is None or (cur.agent == agent and cur.tag != EXPANDED):
                self._owner[key] = Owner(agent, tag, rank)
                return Registered(key)
            return Conflict(key, cur)

    def transfer(self, key: tuple, expected: Owner, agent: int, rank: int, tag: str) -> bool:
        """Hand ``key`` to ``agent`` if ``expected`` still owns it."""
        with self._lock:
            if self._owner.get(key) != expected:
                return False
            self._owner[key] = Owner(agent, tag, rank)
            return True

    def retag(self, key: tuple, agent: int, tag: str) -> None:
        with self._lock:
            cur = self._owner.get(key)
            if cur is not None and cur.agent == agent and cur.tag != EXPANDED:
                self._owner[key] = Owner(agent, tag, cur.rank)

    def claim_expansion(self, key: tuple, agent: int) -> bool:
        """Turn ownership into a tombstone. Fails if another agent owns or
        already expanded the key."""
        with self._lock:
            cur = self._owner.get(key)
            if cur is not None and (cur.tag == EXPANDED or cur.agent != agent):
                return False
            self._owner[key] = Owner(agent, EXPANDED, -1)
            self.expanded_log.append((key, agent))
            return True

    def is_expanded(self, key: tuple) -> bool:
        cur = self._owner.get(key)
        return cur is not None and cur.tag == EXPANDED


class RegistryGate:
    """Connects agents to a registry under one conflict-resolution mode."""

    def __init__(self, registry: ConflictRegistry, mode: str = "bypass"):
        if mode not in CONFLICT_MODES:
            raise ValueError(f"conflict mode must be one of {CONFLICT_MODES}")
        self.registry = registry
        self.mode = mode
        self.agents: dict[int, SearchAgent] = {}
        self.stats = ConflictStats()

    def skip(self, agent: SearchAgent, key: tuple) -> bool:
        # checked before a neighbour is evaluated
        cur = self.registry.owner(key)
        if cur is None or cur.agent == agent.id:
            return False
        if cur.tag == EXPANDED:
            return True
        if self.mode == "bypass":
            self.stats.detected += 1
            self.stats.bypassed += 1
            return True
        return False

    def admit(self, agent: SearchAgent, key: tuple, tag: str, value: float) -> bool:
        rank = agent.prospective_rank(key, value, tag)
        res = self.registry.try_register(key, agent.id, rank, tag)
        if isinstance(res, Registered):
            return True
        self.stats.detected += 1
        owner = res.owner
        if self.mode == "bypass" or owner.tag == EXPANDED:
            self.stats.bypassed += 1
            return False
        holder = self.agents[owner.agent]
        if resolve_manage(holder.rank_of(key), rank) == "transfer" and self.registry.transfer(key, owner, agent.id, rank, tag):
            holder.remove(key)
            self.stats.transferred += 1
            return True
        self.stats.bypassed += 1
        return False

    def expand(self, agent: SearchAgent, key: tuple) -> bool:
        return self.registry.claim_expansion(key, agent.id)

    def moved(self, agent: SearchAgent, key: tuple, tag: str) -> None:
        self.registry.retag(key, agent.id, tag)


@dataclass
class MultiResult:
    structure: CoalitionStructure
    value: float
    trace: AnytimeTrace
    agent_traces: list[AnytimeTrace]
    expansions: int
    agent_expansions: list[int]
    evaluations: int
    elapsed: float
    exhausted: bool
    conflicts: dict
    agents: list[SearchAgent] = field(repr=False, default_factory=list)
    registry: ConflictRegistry | None = field(repr=False, default=None)

    def summary(self) -> dict:
        return {
            "value": self.value,
            "level": self.structure.level,
            "expansions": self.expansions,
            "agent_expansions": self.agent_expansions,
            "evaluations": self.evaluations,
            "elapsed_s": self.elapsed,
            "exhausted": self.exhausted,
            "conflicts": self.conflicts,
            "trace_events": len(self.trace),
        }


def _build_agents(config: SolverConfig, vf: ValueFunction, m: int, conflict: str):
    n = vf.n
    cfg = config.resolved(n)
    starts: list = assign_start_nodes(m, n, random.Random(f"{cfg.seed}:starts"))
    if cfg.start != "bottom":
        starts[0] = None  # agent 0 builds its configured start from its own generator
    registry = ConflictRegistry()
    gate = RegistryGate(registry, conflict)
    counter = Counter()
    agents = []
    for i, start in enumerate(starts):
        sub = replace(cfg, seed=agent_seed(cfg.seed, i))
        a = SearchAgent(vf, sub, start, agent_id=i, counter=counter, gate=gate)
        gate.agents[i] = a
        agents.append(a)
    root = agents[0].start
    incumbent = Incumbent(root, structure_value(vf, root), counter=counter)
    for a in agents:
        a.incumbent = incumbent
    return cfg, agents, incumbent, registry, gate


def run_multi(config: SolverConfig, vf: ValueFunction, m: int = 4, conflict: str = "manage", mode: str = "sequential") -> MultiResult:
    """Run ``m`` agents until the shared budget is spent or all are exhausted."""
    if mode not in ("sequential", "threads"):
        raise ValueError("mode must be 'sequential' or 'threads'")
    t0 = time.monotonic()
    cfg, agents, incumbent, registry, gate = _build_agents(config, vf, m, conflict)
    incumbent.clock_start = t0
    done = [False] * m

    def alive() -> bool:
        return _budget_left(cfg, t0, incumbent.counter.value, incumbent.value)

    if mode == "sequential":
        while not all(done) and alive():
            for i, a in enumerate(agents):
                if done[i]:
                    continue
                if a.step() is StepOutcome.EXHAUSTED:
                    done[i] = True
                if not alive():
                    break
    else:
        lock = threading.Lock()

        def work(i: int) -> None:
            a = agents[i]
            while True:
                with lock:
                    if not alive():
                        return
                    if a.step() is StepOutcome.EXHAUSTED:
                        done[i] = True
                        return

        threads = [threading.Thread(target=work, args=(i,), daemon=True) for i in range(m)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    return MultiResult(
        incumbent.structure,
        incumbent.value,
        incumbent.trace,
        [a.trace for a in agents],
        incumbent.counter.value,
        [a.expansions for a in agents],
        sum(a.evaluations for a in agents),
        time.monotonic() - t0,
        all(done),
        gate.stats.as_dict(),
        agents,
        registry,
    )


def audit_storage(agents: list[SearchAgent]) -> list[tuple]:
    """Keys stored by more than one agent (should be empty)."""
    seen: dict[tuple, int] = {}
    dup = []
    for a in agents:
        for k in a.stored_nodes():
            if k in seen and seen[k] != a.id:
                dup.append(k)
            seen[k] = a.id
    return dup


def audit_expansions(registry: ConflictRegistry, agents: list[SearchAgent] | None = None) -> list[tuple]:
    """Keys expanded more than once, from the registry log and (optionally)
    the agents' own expanded sets."""
    seen: set[tuple] = set()
    dup = []
    for k, _ in registry.expanded_log:
        if k in seen:
            dup.append(k)
        seen.add(k)
    if agents is not None:
        counts: dict[tuple, int] = {}
        for a in agents:
            for k in a.expanded:
                counts[k] = counts.get(k, 0) + 1
        dup.extend(k for k, c in counts.items() if c > 1)
    return dup
