"""Shared test utilities: independent brute-force references."""

from __future__ import annotations

import itertools

from saldae.coalition import CoalitionStructure

# one PASS/FAIL line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def A(*agents: int) -> int:
    """Mask from 1-based agent labels a1, a2, ..."""
    m = 0
    for a in agents:
        m |= 1 << (a - 1)
    return m


def S(*coalitions, n: int) -> CoalitionStructure:
    """Structure from tuples of 1-based agent labels."""
    return CoalitionStructure([A(*c) for c in coalitions], n)


def brute_partitions(items: list[int]):
    """All set partitions of ``items`` by recursive insertion (no RGS)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in brute_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


def brute_neighbors(cs: CoalitionStructure) -> tuple[set, set]:
    """One-split and one-merge neighbours by checking every partition of n."""
    n = cs.n
    splits, merges = set(), set()
    mine = set(cs.masks)
    for p in brute_partitions(list(range(n))):
        other = CoalitionStructure([sum(1 << a for a in c) for c in p], n)
        theirs = set(other.masks)
        gone, new = mine - theirs, theirs - mine
        if len(gone) == 1 and len(new) == 2 and sum(new) == next(iter(gone)):
            splits.add(other)
        if len(gone) == 2 and len(new) == 1 and sum(gone) == next(iter(new)):
            merges.add(other)
    return splits, merges


def brute_optimum(vf, n: int) -> float:
    return max(sum(vf(sum(1 << a for a in c)) for c in p) for p in brute_partitions(list(range(n))))


def pairs(seq):
    return itertools.combinations(seq, 2)
