"""Bridging paths between two coalition structures.

Each strategy returns a :class:`BridgePath` whose consecutive nodes are one
split or one merge apart. Within a phase the moves are deterministic:
coalitions are processed in canonical order and the block split off (or the
pair merged) is the one that agrees with the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .coalition import (
    CoalitionError,
    CoalitionStructure,
    format_structure,
    members_of,
    popcount,
    swap_steps,
)

if TYPE_CHECKING:  # pragma: no cover
    from .engine import SearchAgent

__all__ = [
    "STRATEGIES",
    "EmptyPathError",
    "BridgePath",
    "split_then_merge",
    "merge_then_split",
    "approach_then_swap",
    "build_path_nodes",
    "execute_path_strategy",
    "edge_kind",
]

STRATEGIES = ("split-then-merge", "merge-then-split", "approach-then-swap", "all-three")


class EmptyPathError(CoalitionError):
    """Source and target coincide."""


@dataclass
class BridgePath:
    source: CoalitionStructure
    nodes: list[CoalitionStructure] = field(default_factory=list)
    moves: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> int:
        return len(self.nodes)

    @property
    def target(self) -> CoalitionStructure:
        return self.nodes[-1]

    def add(self, cs: CoalitionStructure, move: str) -> None:
        self.nodes.append(cs)
        self.moves.append(move)

    def dump(self) -> str:
        """One structure per line, source first."""
        return "\n".join(format_structure(cs) for cs in [self.source, *self.nodes])


def edge_kind(a: CoalitionStructure, b: CoalitionStructure) -> str | None:
    """``"split"`` or ``"merge"`` if ``b`` is one move from ``a``, else None."""
    if a.n != b.n:
        return None
    sa, sb = set(a.masks), set(b.masks)
    only_a, only_b = sa - sb, sb - sa
    if len(only_a) == 1 and len(only_b) == 2:
        (whole,) = only_a
        x, y = only_b
        return "split" if x | y == whole else None
    if len(only_a) == 2 and len(only_b) == 1:
        (whole,) = only_b
        x, y = only_a
        return "merge" if x | y == whole else None
    return None


def _target_lookup(target: CoalitionStructure) -> dict[int, int]:
    # agent -> mask of its target coalition
    out = {}
    for t in target.masks:
        for a in members_of(t):
            out[a] = t
    return out


def _check(source: CoalitionStructure, target: CoalitionStructure) -> None:
    if source.n != target.n:
        raise CoalitionError("source and target have different agent counts")
    if source == target:
        raise EmptyPathError("source equals target; no path to build")


def _separating_split(groups: list[int], tgt: dict[int, int]) -> tuple[int, int] | None:
    """First coalition spanning several target coalitions, and the block of it
    sharing a target coalition with its lowest member."""
    for idx, c in enumerate(groups):
        low = c & -c
        block = c & tgt[low.bit_length() - 1]
        if block != c:
            return idx, block
    return None


def split_then_merge(source: CoalitionStructure, target: CoalitionStructure) -> BridgePath:
    """Ascend to the top node by splits, then descend to ``target`` by merges.

    Splits that separate agents of different target coalitions come first, so
    the ascent passes through the common refinement of both structures.
    Edge count is ``(n - l1) + (n - l2)``.
    """
    _check(source, target)
    n = source.n
    tgt = _target_lookup(target)
    path = BridgePath(source)
    groups = list(source.masks)
    while len(groups) < n:
        hit = _separating_split(groups, tgt)
        if hit is None:
            idx = next(i for i, c in enumerate(groups) if c & (c - 1))
            c = groups[idx]
            hit = (idx, c & -c)
        idx, part = hit
        rest = groups[idx] ^ part
        groups[idx] = part
        groups.append(rest)
        path.add(CoalitionStructure._trusted(n, list(groups)), "split")
        groups = list(path.nodes[-1].masks)
    while len(groups) > len(target.masks):
        # merge the first two pieces of the first unfinished target coalition
        for t in target.masks:
            inside = [i for i, c in enumerate(groups) if c & t]
            if len(inside) >= 2:
                i, j = inside[0], inside[1]
                merged = groups[i] | groups[j]
                groups = [c for k, c in enumerate(groups) if k not in (i, j)] + [merged]
                path.add(CoalitionStructure._trusted(n, groups), "merge")
                groups = list(path.nodes[-1].masks)
                break
    return path


def merge_then_split(source: CoalitionStructure, target: CoalitionStructure) -> BridgePath:
    """Descend to the bottom node by merges, then ascend to ``target`` by splits
    that never separate agents sharing a target coalition.

    Merges joining pieces of one target coalition come first. Edge count is
    ``(l1 - 1) + (l2 - 1)``.
    """
    _check(source, target)
    n = source.n
    tgt = _target_lookup(target)
    path = BridgePath(source)
    groups = list(source.masks)
    while len(groups) > 1:
        pair = None
        for i, c in enumerate(groups):
            home = tgt[(c & -c).bit_length() - 1]
            if c & ~home:
                continue
            for j in range(i + 1, len(groups)):
                if not groups[j] & ~home:
                    pair = (i, j)
                    break
            if pair:
                break
        i, j = pair or (0, 1)
        merged = groups[i] | groups[j]
        groups = [c for k, c in enumerate(groups) if k not in (i, j)] + [merged]
        path.add(CoalitionStructure._trusted(n, groups), "merge")
        groups = list(path.nodes[-1].masks)
    while len(groups) < len(target.masks):
        idx, block = _separating_split(groups, tgt)
        rest = groups[idx] ^ block
        groups[idx] = block
        groups.append(rest)
        path.add(CoalitionStructure._trusted(n, list(groups)), "split")
        groups = list(path.nodes[-1].masks)
    return path


def _dominant(c: int, target: CoalitionStructure) -> int:
    best, best_ov = 0, -1
    for t in target.masks:
        ov = popcount(c & t)
        if ov > best_ov:
            best, best_ov = t, ov
    return best


def _greedy_matching(groups: list[int], target: CoalitionStructure) -> list[int]:
    """Match each group to a distinct target coalition, largest overlap first;
    ties resolved by canonical position."""
    pairs = []
    for i, c in enumerate(groups):
        for j, t in enumerate(target.masks):
            pairs.append((-popcount(c & t), i, j))
    pairs.sort()
    match = [0] * len(groups)
    used_g, used_t = set(), set()
    for _, i, j in pairs:
        if i in used_g or j in used_t:
            continue
        match[i] = target.masks[j]
        used_g.add(i)
        used_t.add(j)
    return match


def approach_then_swap(source: CoalitionStructure, target: CoalitionStructure) -> BridgePath:
    """Reach the target's level with |l2 - l1| target-guided splits or merges,
    then exchange agents until the target is reached.

    The approach phase alone does not always produce the target's coalition
    sizes. When sizes still differ after it, a surplus coalition hands one
    misplaced agent to the coalition matched with that agent's target
    (a split followed by a merge) until every size agrees. Each swap is
    emitted as its split/merge decomposition. Every rebalancing move and
    every swap places at least one more agent under the fixed matching, so the
    loop terminates, though the path is not minimal.
    """
    _check(source, target)
    n = source.n
    tgt = _target_lookup(target)
    path = BridgePath(source)
    groups = list(source.masks)
    l2 = len(target.masks)

    def emit(gs: list[int], move: str) -> None:
        path.add(CoalitionStructure._trusted(n, list(gs)), move)

    while len(groups) < l2:
        idx, block = _separating_split(groups, tgt)
        rest = groups[idx] ^ block
        groups[idx] = block
        groups.append(rest)
        emit(groups, "split")
        groups = list(path.nodes[-1].masks)
    while len(groups) > l2:
        pair = None
        doms = [_dominant(c, target) for c in groups]
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if not (groups[i] | groups[j]) & ~doms[i]:
                    pair = (i, j)
                    break
            if pair:
                break
        if pair is None:
            for i in range(len(groups)):
                j = next((j for j in range(i + 1, len(groups)) if doms[j] == doms[i]), None)
                if j is not None:
                    pair = (i, j)
                    break
        i, j = pair
        merged = groups[i] | groups[j]
        groups = [c for k, c in enumerate(groups) if k not in (i, j)] + [merged]
        emit(groups, "merge")
        groups = list(path.nodes[-1].masks)

    match = _greedy_matching(groups, target)
    owner = {t: i for i, t in enumerate(match)}

    # size rebalancing
    while True:
        surplus = next((i for i, c in enumerate(groups) if popcount(c) > popcount(match[i])), None)
        if surplus is None:
            break
        c = groups[surplus]
        misplaced = c & ~match[surplus]
        a = misplaced & -misplaced
        dest = owner[tgt[a.bit_length() - 1]]
        groups[surplus] = c ^ a
        emit(groups + [a], "split")
        groups[dest] |= a
        emit(groups, "merge")

    # swap phase
    while True:
        i = next((i for i, c in enumerate(groups) if c & ~match[i]), None)
        if i is None:
            break
        mis = groups[i] & ~match[i]
        abit = mis & -mis
        a = abit.bit_length() - 1
        j = owner[tgt[a]]
        wanted = groups[j] & match[i]
        pool = wanted if wanted else groups[j] & ~match[j]
        bbit = pool & -pool
        b = bbit.bit_length() - 1
        if groups[i] == abit and groups[j] == bbit:
            # two singletons: same partition, only the matching changes
            match[i], match[j] = match[j], match[i]
            owner[match[i]], owner[match[j]] = i, j
            continue
        cs = CoalitionStructure._trusted(n, list(groups))
        steps = swap_steps(cs, cs.masks.index(groups[i]), a, cs.masks.index(groups[j]), b)
        for s in steps:
            path.add(s, "swap-step")
        groups[i] = (groups[i] ^ abit) | bbit
        groups[j] = (groups[j] ^ bbit) | abit
    return path


_BUILDERS = {
    "split-then-merge": split_then_merge,
    "merge-then-split": merge_then_split,
    "approach-then-swap": approach_then_swap,
}


def build_path_nodes(strategy: str, source: CoalitionStructure, target: CoalitionStructure) -> list[CoalitionStructure]:
    """Distinct nodes strictly between ``source`` and ``target`` along the
    configured path(s), in path order."""
    if strategy == "all-three":
        names = ("split-then-merge", "merge-then-split", "approach-then-swap")
    elif strategy in _BUILDERS:
        names = (strategy,)
    else:
        raise ValueError(f"unknown bridge strategy {strategy!r}")
    seen = {source.masks, target.masks}
    out = []
    for name in names:
        for cs in _BUILDERS[name](source, target).nodes:
            k = cs.masks
            if k not in seen:
                seen.add(k)
                out.append(cs)
    return out


def execute_path_strategy(agent: "SearchAgent", source: CoalitionStructure, target: CoalitionStructure) -> int:
    """Evaluate the bridge from ``source`` to ``target`` for ``agent``.

    Intermediates go to the agent's SUBSTITUTE list; one that beats the
    incumbent becomes the incumbent and is queued for expansion in OPEN.
    Returns the number of intermediates evaluated. Neighbouring structures
    have nothing in between, so no path is built for them.
    """
    if source == target or edge_kind(source, target) is not None:
        return 0
    nodes = build_path_nodes(agent.config.bridge_strategy, source, target)
    for cs in nodes:
        v = agent.evaluate(cs)
        improved = agent.offer(cs, v)
        if agent.knows(cs.masks):
            continue
        if improved:
            agent.admit(cs, v, "open")
        else:
            agent.admit(cs, v, "substitute")
    return len(nodes)
