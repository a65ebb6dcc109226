"""Single search agent: generation, selection, comparison, and list management.

A :class:`SearchAgent` owns three sorted lists (OPEN, SUBSTITUTE, RESERVE).
Each :meth:`SearchAgent.step` pops the best OPEN node, expands it through the
configured child-selection heuristic, and, when the node beats the incumbent,
walks a bridging path from the previous incumbent before accepting it.
"""

from __future__ import annotations

import enum
import json
import math
import random
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, NamedTuple, Protocol

from sortedcontainers import SortedList

from .bridging import STRATEGIES, execute_path_strategy
from .coalition import (
    CoalitionStructure,
    bottom,
    parse_structure,
    popcount,
    random_partition,
    top,
)
from .values import ValueFunction, structure_value

__all__ = [
    "SolverConfig",
    "TraceEvent",
    "AnytimeTrace",
    "Incumbent",
    "SearchAgent",
    "StepOutcome",
    "RunResult",
    "Child",
    "initialize",
    "run",
    "classify_child",
    "select_children_quantity",
    "select_children_value",
    "select_children_random",
    "neighbor_stream",
    "split_masks",
    "merge_masks",
]

CHILD_SELECT = ("quantity", "value", "random")


@dataclass(frozen=True)
class SolverConfig:
    """Search hyperparameters.

    ``None`` sizes are filled per instance by :meth:`resolved`:
    ``theta = 2n``, ``n_a = min(theta, 32)``, ``n_c = 2 * n_a``.

    Attributes:
        theta: Max children retained per expansion.
        omega: Fraction of the incumbent's value a node needs to enter OPEN.
        n_c: Children generated per expansion (quantity-based selection).
        n_a: Children admitted per expansion.
        child_select: ``"quantity"``, ``"value"`` or ``"random"``.
        bridge_strategy: One of :data:`saldae.bridging.STRATEGIES`.
        start: ``"bottom"``, ``"top"``, ``"random"`` or an explicit structure
            (object or text form).
        time_limit: Wall-clock budget in seconds.
        max_expansions: Expansion budget (includes the start node's expansion).
        seed: Seed for the agent's random generator.
        value_loop_cap: Iteration cap of the value-based selection loop.
        enumerate_limit: Neighbourhoods up to this size are listed exhaustively
            and shuffled; larger ones are sampled.
        stop_value: Stop as soon as the incumbent reaches this value.
    """

    theta: int | None = None
    omega: float = 0.995
    n_c: int | None = None
    n_a: int | None = None
    child_select: str = "value"
    bridge_strategy: str = "split-then-merge"
    start: str | CoalitionStructure = "bottom"
    time_limit: float | None = None
    max_expansions: int | None = None
    seed: int = 0
    value_loop_cap: int = 64
    enumerate_limit: int = 512
    stop_value: float | None = None

    def resolved(self, n: int) -> "SolverConfig":
        theta = self.theta if self.theta is not None else 2 * n
        n_a = self.n_a if self.n_a is not None else min(theta, 32)
        n_c = self.n_c if self.n_c is not None else 2 * n_a
        cfg = replace(self, theta=theta, n_a=n_a, n_c=n_c)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not 0 < self.omega <= 1:
            raise ValueError(f"omega must lie in (0, 1], got {self.omega}")
        if self.theta is not None and self.theta < 1:
            raise ValueError("theta must be >= 1")
        if self.n_a is not None and self.n_a < 1:
            raise ValueError("n_a must be >= 1")
        if self.n_a is not None and self.n_c is not None and not self.n_a < self.n_c:
            raise ValueError(f"n_a ({self.n_a}) must be smaller than n_c ({self.n_c})")
        if self.child_select not in CHILD_SELECT:
            raise ValueError(f"child_select must be one of {CHILD_SELECT}")
        if self.bridge_strategy not in STRATEGIES:
            raise ValueError(f"bridge_strategy must be one of {STRATEGIES}")
        if self.value_loop_cap < 1:
            raise ValueError("value_loop_cap must be >= 1")

    def start_node(self, n: int, rng: random.Random) -> CoalitionStructure:
        s = self.start
        if isinstance(s, CoalitionStructure):
            return s
        if s == "bottom":
            return bottom(n)
        if s == "top":
            return top(n)
        if s == "random":
            return random_partition(n, rng)
        return parse_structure(s, n)


class TraceEvent(NamedTuple):
    elapsed_ms: float
    best_value: float
    level: int
    expansions: int


class AnytimeTrace:
    """Incumbent improvements, strictly increasing in value."""

    def __init__(self, events: Iterable[TraceEvent] = ()):
        self.events: list[TraceEvent] = list(events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]

    def append(self, event: TraceEvent) -> None:
        if self.events and not event.best_value > self.events[-1].best_value:
            raise ValueError("trace values must strictly increase")
        self.events.append(event)

    def is_monotone(self) -> bool:
        return all(b.best_value > a.best_value for a, b in zip(self.events, self.events[1:]))

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e._asdict()) + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> "AnytimeTrace":
        tr = cls()
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                tr.events.append(TraceEvent(float(d["elapsed_ms"]), float(d["best_value"]), int(d["level"]), int(d["expansions"])))
        return tr

    def untimed(self) -> list[tuple[float, int, int]]:
        return [(e.best_value, e.level, e.expansions) for e in self.events]


class Counter:
    __slots__ = ("value",)

    def __init__(self) -> None:
        self.value = 0


class Incumbent:
    """Best structure seen so far; ``offer`` is an atomic compare-and-keep-max."""

    def __init__(self, cs: CoalitionStructure, value: float, clock_start: float | None = None, counter: Counter | None = None):
        self.structure = cs
        self.value = value
        self.clock_start = time.monotonic() if clock_start is None else clock_start
        self.counter = counter or Counter()
        self.trace = AnytimeTrace()
        self._lock = threading.Lock()
        self.trace.append(self._event())

    def _event(self) -> TraceEvent:
        return TraceEvent((time.monotonic() - self.clock_start) * 1000.0, self.value, self.structure.level, self.counter.value)

    def offer(self, cs: CoalitionStructure, value: float) -> TraceEvent | None:
        if not value > self.value:
            return None
        with self._lock:
            if not value > self.value:
                return None
            self.structure = cs
            self.value = value
            ev = self._event()
            self.trace.append(ev)
            return ev


Node = tuple  # canonical mask tuple of a coalition structure


class Child(NamedTuple):
    value: float
    masks: Node


def _order(c: Child):
    return (-c.value, c.masks)


def classify_child(value: float, incumbent_value: float, omega: float) -> str:
    """``"open"`` iff ``value >= omega * incumbent_value``."""
    return "open" if value >= omega * incumbent_value else "reserve"


def split_masks(node: Node, idx: int, part: int) -> Node:
    """Canonical tuple after splitting ``node[idx]`` into ``part`` and the rest."""
    whole = node[idx]
    if not part & whole & -whole:
        part = whole ^ part
    rest = whole ^ part
    low = rest & -rest
    pos = idx + 1
    k = len(node)
    while pos < k and node[pos] & -node[pos] < low:
        pos += 1
    return node[:idx] + (part,) + node[idx + 1 : pos] + (rest,) + node[pos:]


def merge_masks(node: Node, i: int, j: int) -> Node:
    if i > j:
        i, j = j, i
    return node[:i] + (node[i] | node[j],) + node[i + 1 : j] + node[j + 1 :]


def neighbor_stream(
    node: Node,
    lookup: Callable[[int], float],
    rng: random.Random,
    skip: Callable[[Node], bool] = lambda t: False,
    enumerate_limit: int = 512,
    max_misses: int = 64,
    vals: list[float] | None = None,
) -> Iterator[Child]:
    """Evaluated split and merge neighbours of ``node`` in random order, no repeats.

    Small neighbourhoods are enumerated and shuffled (uniform order). Large
    ones are sampled: split or merge with equal probability when both exist,
    then a uniform coalition (or pair). A split first draws the size of the
    smaller block uniformly, then its members, so lopsided splits are as
    likely as balanced ones.
    Sampling stops after ``max_misses`` consecutive repeats. Skipped nodes are
    never evaluated.
    """
    if vals is None:
        vals = [lookup(m) for m in node]
    fsum = math.fsum
    k = len(node)
    splittable = [i for i, m in enumerate(node) if m & (m - 1)]
    n_split = sum((1 << (popcount(node[i]) - 1)) - 1 for i in splittable) if len(splittable) < 64 else enumerate_limit + 1
    n_merge = k * (k - 1) // 2

    def child_split(idx: int, part: int) -> Child | None:
        t = split_masks(node, idx, part)
        if skip(t):
            return None
        whole = node[idx]
        if not part & whole & -whole:
            part = whole ^ part
        v = fsum(vals[:idx] + vals[idx + 1 :] + [lookup(part), lookup(whole ^ part)])
        return Child(v, t)

    def child_merge(i: int, j: int) -> Child | None:
        t = merge_masks(node, i, j)
        if skip(t):
            return None
        v = fsum(vals[:i] + vals[i + 1 : j] + vals[j + 1 :] + [lookup(node[i] | node[j])])
        return Child(v, t)

    if n_split + n_merge <= enumerate_limit:
        moves: list[tuple[int, int, int]] = []
        for idx in splittable:
            whole = node[idx]
            low = whole & -whole
            rest = whole ^ low
            sub = 0
            while True:
                if sub != rest:
                    moves.append((0, idx, low | sub))
                sub = (sub - rest) & rest
                if not sub:
                    break
        for i in range(k):
            for j in range(i + 1, k):
                moves.append((1, i, j))
        rng.shuffle(moves)
        for kind, a, b in moves:
            c = child_split(a, b) if kind == 0 else child_merge(a, b)
            if c is not None:
                yield c
        return

    seen: set = set()
    misses = 0
    members: dict[int, list[int]] = {}
    while misses < max_misses:
        if n_merge == 0 or (splittable and rng.random() < 0.5):
            idx = splittable[rng.randrange(len(splittable))]
            whole = node[idx]
            bits = members.get(idx)
            if bits is None:
                bits = members[idx] = list(_bits(whole))
            size = rng.randint(1, len(bits) // 2)
            part = 0
            for b in rng.sample(bits, size):
                part |= b
            if not part & whole & -whole:
                part ^= whole
            move = (0, idx, part)
        else:
            i = rng.randrange(k)
            j = rng.randrange(k - 1)
            if j >= i:
                j += 1
            move = (1, min(i, j), max(i, j))
        if move in seen:
            misses += 1
            continue
        misses = 0
        seen.add(move)
        c = child_split(move[1], move[2]) if move[0] == 0 else child_merge(move[1], move[2])
        if c is not None:
            yield c


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low
        mask ^= low


def select_children_quantity(
    children: Iterable[Child],
    threshold: float,
    n_c: int,
    n_a: int,
    scan_limit: int | None = None,
) -> list[Child]:
    """Collect up to ``n_c`` children at or above ``threshold`` (scanning at
    most ``scan_limit`` neighbours); keep the ``n_a`` best of those plus every
    sub-threshold child generated."""
    above: list[Child] = []
    below: list[Child] = []
    for scanned, c in enumerate(children, 1):
        (above if c.value >= threshold else below).append(c)
        if len(above) >= n_c or (scan_limit is not None and scanned >= scan_limit):
            break
    above.sort(key=_order)
    return above[:n_a] + below


def select_children_value(
    children: Iterable[Child],
    incumbent_value: float,
    n_a: int,
    cap: int = 64,
) -> tuple[list[Child], list[float]]:
    """Threshold-lowering selection.

    Starting from ``gamma = incumbent_value``, draw ``n_a`` children per round
    into a pool. Stop when some pooled child exceeds ``gamma``; otherwise move
    ``gamma`` halfway towards the best pooled value. After ``cap`` rounds (or
    an exhausted neighbourhood) stop anyway. Returns the ``n_a`` best of the
    pool and the sequence of thresholds used.
    """
    it = iter(children)
    gamma = incumbent_value
    gammas = [gamma]
    pool: list[Child] = []
    best = float("-inf")
    for _ in range(cap):
        drawn = 0
        for c in it:
            pool.append(c)
            if c.value > best:
                best = c.value
            drawn += 1
            if drawn >= n_a:
                break
        if not drawn or best > gamma:
            break
        gamma = gamma - (gamma - best) / 2
        gammas.append(gamma)
    pool.sort(key=_order)
    return pool[:n_a], gammas


def select_children_random(children: Iterable[Child], n_a: int) -> list[Child]:
    out = []
    for c in children:
        out.append(c)
        if len(out) >= n_a:
            break
    return out


class Gate(Protocol):
    """Hook used by the multi-agent layer to arbitrate node ownership."""

    def skip(self, agent: "SearchAgent", node: Node) -> bool: ...

    def admit(self, agent: "SearchAgent", node: Node, tag: str, value: float) -> bool: ...

    def expand(self, agent: "SearchAgent", node: Node) -> bool: ...

    def moved(self, agent: "SearchAgent", node: Node, tag: str) -> None: ...


class StepOutcome(enum.Enum):
    IMPROVED = "improved"
    CONTINUED = "continued"
    EXHAUSTED = "exhausted"


class _Entry(NamedTuple):
    neg_value: float
    masks: Node
    gen: int


_LISTS = ("open", "substitute", "reserve")


class SearchAgent:
    """One search agent and its OPEN / SUBSTITUTE / RESERVE lists.

    Nodes are identified by their canonical mask tuple. Entries are ordered by
    value (descending) then mask tuple. A popped OPEN entry that has fallen
    below ``omega * incumbent`` since admission is moved to RESERVE instead of
    being expanded, unless it reached OPEN through a list replacement.
    """

    def __init__(
        self,
        vf: ValueFunction,
        config: SolverConfig,
        start: CoalitionStructure | None = None,
        *,
        agent_id: int = 0,
        incumbent: Incumbent | None = None,
        counter: Counter | None = None,
        gate: Gate | None = None,
    ):
        self.vf = vf
        self.n = vf.n
        self.lookup = vf.lookup()
        self.config = config.resolved(vf.n)
        self.id = agent_id
        self.rng = random.Random(self.config.seed)
        self.start = start if start is not None else self.config.start_node(self.n, self.rng)
        if self.start.n != self.n:
            raise ValueError("start structure has the wrong agent count")
        self.counter = counter or Counter()
        self.gate = gate
        self.incumbent = incumbent
        self.lists: dict[str, SortedList] = {name: SortedList() for name in _LISTS}
        self._where: dict[Node, tuple[str, _Entry]] = {}
        self.expanded: set[Node] = set()
        self.expansions = 0
        self.evaluations = 0
        self.demoted = 0
        self.replacements = {"substitute": 0, "reserve": 0}
        self._gen = 0
        self.trace = AnytimeTrace()
        self.initialized = False

    # -- state queries -------------------------------------------------
    @property
    def open(self) -> SortedList:
        return self.lists["open"]

    @property
    def substitute(self) -> SortedList:
        return self.lists["substitute"]

    @property
    def reserve(self) -> SortedList:
        return self.lists["reserve"]

    def items(self, name: str) -> list[tuple[CoalitionStructure, float]]:
        """Snapshot of one list, best first."""
        return [(CoalitionStructure._canonical(self.n, e.masks), -e.neg_value) for e in self.lists[name]]

    def knows(self, node: Node) -> bool:
        return node in self._where or node in self.expanded

    def stored_nodes(self) -> list[Node]:
        return list(self._where)

    def location(self, node: Node) -> str | None:
        hit = self._where.get(node)
        return hit[0] if hit else None

    def rank_of(self, node: Node) -> int | None:
        """Position at which the stored node would be expanded: OPEN first,
        then SUBSTITUTE, then RESERVE."""
        hit = self._where.get(node)
        if hit is None:
            return None
        name, entry = hit
        return self._offset(name) + self.lists[name].index(entry)

    def prospective_rank(self, node: Node, value: float, tag: str) -> int:
        return self._offset(tag) + self.lists[tag].bisect_left((-value, node))

    def _offset(self, name: str) -> int:
        off = 0
        for other in _LISTS:
            if other == name:
                return off
            off += len(self.lists[other])
        raise KeyError(name)

    # -- evaluation and incumbent --------------------------------------
    def evaluate(self, cs: CoalitionStructure) -> float:
        self.evaluations += 1
        return structure_value(self.vf, cs)

    def offer(self, cs: CoalitionStructure | Node, value: float) -> bool:
        if not value > self.incumbent.value:
            return False
        if not isinstance(cs, CoalitionStructure):
            cs = CoalitionStructure._canonical(self.n, cs)
        ev = self.incumbent.offer(cs, value)
        if ev is not None:
            self.trace.append(ev)
            return True
        return False

    # -- list maintenance ----------------------------------------------
    def admit(self, node: CoalitionStructure | Node, value: float, tag: str) -> bool:
        if isinstance(node, CoalitionStructure):
            node = node.masks
        if self.knows(node):
            return False
        if self.gate is not None and not self.gate.admit(self, node, tag, value):
            return False
        self._insert(tag, _Entry(-value, node, self._gen))
        return True

    def _insert(self, tag: str, entry: _Entry) -> None:
        self.lists[tag].add(entry)
        self._where[entry.masks] = (tag, entry)

    def remove(self, node: Node) -> bool:
        """Drop a stored node (used when another agent takes it over)."""
        hit = self._where.pop(node, None)
        if hit is None:
            return False
        name, entry = hit
        self.lists[name].remove(entry)
        return True

    def _replace_open(self) -> bool:
        if self.substitute:
            name = "substitute"
        elif self.reserve:
            name = "reserve"
        else:
            return False
        promoted = self.lists[name]
        self.lists[name] = SortedList()
        self.lists["open"] = promoted
        self._gen += 1  # promoted entries skip the staleness check
        for e in promoted:
            self._where[e.masks] = ("open", e)
            if self.gate is not None:
                self.gate.moved(self, e.masks, "open")
        self.replacements[name] += 1
        return True

    def select_start_node(self) -> Child | None:
        """Pop the best OPEN entry, replacing OPEN when it runs dry."""
        while True:
            if not self.open and not self._replace_open():
                return None
            entry = self.open.pop(0)
            del self._where[entry.masks]
            value = -entry.neg_value
            if entry.gen == self._gen and value < self.config.omega * self.incumbent.value:
                self._insert("reserve", entry)
                self.demoted += 1
                if self.gate is not None:
                    self.gate.moved(self, entry.masks, "reserve")
                continue
            return Child(value, entry.masks)

    # -- expansion -----------------------------------------------------
    def _skip(self, node: Node) -> bool:
        if node in self._where or node in self.expanded:
            return True
        return self.gate is not None and self.gate.skip(self, node)

    def _counted(self, children: Iterable[Child]) -> Iterator[Child]:
        for c in children:
            self.evaluations += 1
            yield c

    def compute_children(self, node: Node) -> list[Child]:
        cfg = self.config
        stream = self._counted(neighbor_stream(node, self.lookup, self.rng, self._skip, cfg.enumerate_limit))
        if cfg.child_select == "quantity":
            threshold = cfg.omega * self.incumbent.value
            return select_children_quantity(stream, threshold, cfg.n_c, cfg.n_a, max(cfg.n_c, cfg.enumerate_limit))
        if cfg.child_select == "value":
            kids, _ = select_children_value(stream, self.incumbent.value, cfg.n_a, cfg.value_loop_cap)
            return kids
        return select_children_random(stream, cfg.n_a)

    def expand(self, node: CoalitionStructure | Node) -> list[tuple[Child, str]]:
        """Generate children of ``node``, keep the best ``theta`` and route each
        to OPEN or RESERVE. Returns the admitted children with their list."""
        if isinstance(node, CoalitionStructure):
            node = node.masks
        self.expansions += 1
        self.counter.value += 1
        kids = self.compute_children(node)
        kids.sort(key=_order)
        admitted = []
        bar = self.config.omega * self.incumbent.value
        for child in kids[: self.config.theta]:
            tag = "open" if child.value >= bar else "reserve"
            if self.admit(child.masks, child.value, tag):
                admitted.append((child, tag))
        return admitted

    def _claim_expansion(self, node: Node) -> bool:
        if self.gate is not None and not self.gate.expand(self, node):
            return False
        self.expanded.add(node)
        return True

    def initialize(self) -> None:
        """Evaluate the start node, offer it as incumbent and expand it."""
        v = self.evaluate(self.start)
        if self.incumbent is None:
            self.incumbent = Incumbent(self.start, v, counter=self.counter)
        else:
            self.offer(self.start, v)
        self.initialized = True
        if self._claim_expansion(self.start.masks):
            self.expand(self.start.masks)

    def step(self) -> StepOutcome:
        if not self.initialized:
            self.initialize()
            return StepOutcome.CONTINUED
        popped = self.select_start_node()
        if popped is None:
            return StepOutcome.EXHAUSTED
        value, node = popped
        if not self._claim_expansion(node):
            return StepOutcome.CONTINUED
        self.expand(node)
        if value > self.incumbent.value:
            cs = CoalitionStructure._canonical(self.n, node)
            execute_path_strategy(self, self.incumbent.structure, cs)
            if self.offer(cs, value):
                return StepOutcome.IMPROVED
        return StepOutcome.CONTINUED


@dataclass
class RunResult:
    structure: CoalitionStructure
    value: float
    trace: AnytimeTrace
    expansions: int
    evaluations: int
    elapsed: float
    exhausted: bool
    stats: dict = field(default_factory=dict)


def initialize(config: SolverConfig, vf: ValueFunction) -> SearchAgent:
    agent = SearchAgent(vf, config)
    agent.initialize()
    return agent


def _budget_left(cfg: SolverConfig, t0: float, expansions: int, best: float) -> bool:
    if cfg.max_expansions is not None and expansions >= cfg.max_expansions:
        return False
    if cfg.time_limit is not None and time.monotonic() - t0 >= cfg.time_limit:
        return False
    if cfg.stop_value is not None and best >= cfg.stop_value:
        return False
    return True


def run(config: SolverConfig, vf: ValueFunction) -> RunResult:
    """Search until the budget is spent or every list is empty."""
    t0 = time.monotonic()
    agent = SearchAgent(vf, config)
    agent.initialize()
    cfg = agent.config
    exhausted = False
    while _budget_left(cfg, t0, agent.expansions, agent.incumbent.value):
        if agent.step() is StepOutcome.EXHAUSTED:
            exhausted = True
            break
    inc = agent.incumbent
    return RunResult(
        inc.structure,
        inc.value,
        inc.trace,
        agent.expansions,
        agent.evaluations,
        time.monotonic() - t0,
        exhausted,
        {"demoted": agent.demoted, "replacements": dict(agent.replacements)},
    )
