"""Exact optima for small instances and the evaluation metrics built on them.

Both exact methods break ties the same way: among optimal structures the one
whose canonical mask tuple is lexicographically smallest wins. The DP achieves
this by keeping the smallest first coalition, which is compositional because
the first coalition always holds the lowest remaining agent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
from numba import njit

from .coalition import CoalitionStructure, format_structure, parse_structure
from .values import MAX_TABLE_AGENTS, TableValueFunction, ValueFunction, materialize, structure_value

__all__ = [
    "CapacityError",
    "UndefinedMetricError",
    "OracleResult",
    "optimal_dp",
    "optimal_enumerate",
    "enumerate_partitions",
    "bell_number",
    "solution_quality",
    "gain_rate",
    "OracleCache",
    "MAX_ENUMERATION_AGENTS",
]

MAX_ENUMERATION_AGENTS = 13


class CapacityError(ValueError):
    pass


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    optimum: CoalitionStructure
    value: float


@njit(cache=True)
def _subset_dp(v, n):
    size = 1 << n
    f = np.zeros(size)
    first = np.zeros(size, dtype=np.int64)
    for s in range(1, size):
        low = s & -s
        rest = s ^ low
        best_v = -np.inf
        best_t = 0
        sub = 0
        # first coalition contains the lowest agent of s; increasing order, strict >
        # keeps the smallest mask on ties
        while True:
            t = low | sub
            cand = v[t] + f[s ^ t]
            if cand > best_v:
                best_v = cand
                best_t = t
            if sub == rest:
                break
            sub = (sub - rest) & rest
        f[s] = best_v
        first[s] = best_t
    return f, first


def optimal_dp(vf: ValueFunction, n: int | None = None) -> OracleResult:
    """Exact optimum by dynamic programming over subsets, O(3^n)."""
    n = vf.n if n is None else n
    if n != vf.n:
        raise ValueError(f"n={n} does not match value function (n={vf.n})")
    if n > MAX_TABLE_AGENTS:
        raise CapacityError(f"exact oracle limited to n <= {MAX_TABLE_AGENTS}, got {n}")
    table = materialize(vf)
    _, first = _subset_dp(np.ascontiguousarray(table.array), n)
    masks = []
    s = (1 << n) - 1
    while s:
        t = int(first[s])
        masks.append(t)
        s ^= t
    cs = CoalitionStructure(masks, n)
    return OracleResult(cs, structure_value(vf, cs))


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


def enumerate_partitions(n: int) -> Iterator[CoalitionStructure]:
    """All partitions of ``n`` agents in restricted-growth-string (lexicographic) order."""
    if n > MAX_ENUMERATION_AGENTS:
        raise CapacityError(f"enumeration limited to n <= {MAX_ENUMERATION_AGENTS}, got {n}")
    if n == 0:
        yield CoalitionStructure([], 0)
        return
    a = [0] * n
    b = [1] * n  # b[i] = 1 + max(a[:i])
    while True:
        yield CoalitionStructure.from_labels(a)
        i = n - 1
        while i > 0 and a[i] == b[i]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for j in range(i + 1, n):
            a[j] = 0
            b[j] = max(b[i], a[i] + 1)


def optimal_enumerate(vf: ValueFunction) -> OracleResult:
    """Exhaustive optimum; slow but obviously correct."""
    best = None
    best_v = -math.inf
    for cs in enumerate_partitions(vf.n):
        val = structure_value(vf, cs)
        if val > best_v or (val == best_v and cs.masks < best.masks):
            best, best_v = cs, val
    return OracleResult(best, best_v)


def solution_quality(found: float, optimum: float) -> float:
    if not optimum > 0:
        raise UndefinedMetricError(f"solution quality undefined for optimum {optimum}")
    return found / optimum


def gain_rate(values: Mapping[str, float], singleton: float) -> dict[str, float]:
    """Value relative to the all-singletons structure, normalised by the best algorithm."""
    if not singleton > 0:
        raise UndefinedMetricError(f"gain rate undefined for singleton value {singleton}")
    if not values:
        raise UndefinedMetricError("gain rate needs at least one algorithm value")
    rel = {k: v / singleton for k, v in values.items()}
    best = max(rel.values())
    if not best > 0:
        raise UndefinedMetricError("all algorithm values are nonpositive")
    return {k: r / best for k, r in rel.items()}


class OracleCache:
    """JSON sidecar mapping table digests to optima."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._data: dict[str, dict] = {}
        if self.path.exists():
            self._data = json.loads(self.path.read_text(encoding="utf-8"))

    def solve(self, vf: ValueFunction) -> OracleResult:
        table = materialize(vf)
        digest = table.digest()
        hit = self._data.get(digest)
        if hit is not None:
            return OracleResult(parse_structure(hit["structure"], table.n), hit["value"])
        res = optimal_dp(table)
        self._data[digest] = {"structure": format_structure(res.optimum), "value": res.value}
        self.path.write_text(json.dumps(self._data, indent=1, sort_keys=True), encoding="utf-8")
        return res
