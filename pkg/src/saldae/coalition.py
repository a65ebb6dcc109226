"""Coalitions, coalition structures and the moves that connect them.

A coalition is an ``int`` bitmask over agent indices ``0..n-1``. Python ints are
unbounded, so the same code path serves n = 8 and n = 2000; for n <= 64 the
masks stay machine-word sized and no extra allocation happens.

A :class:`CoalitionStructure` is an immutable partition of all ``n`` agents,
kept in canonical order: coalitions sorted by their lowest member.
"""

from __future__ import annotations

import hashlib
import random
import re
from typing import Iterable, Iterator, Sequence

__all__ = [
    "CoalitionError",
    "InvalidSplit",
    "InvalidMerge",
    "InvalidSwap",
    "CoalitionStructure",
    "mask_of",
    "members_of",
    "popcount",
    "lowest_bit",
    "bottom",
    "top",
    "split",
    "merge",
    "swap",
    "swap_steps",
    "enumerate_split_children",
    "enumerate_merge_children",
    "split_child_count",
    "merge_child_count",
    "canonical_key",
    "random_partition",
    "parse_structure",
    "format_structure",
]


class CoalitionError(ValueError):
    """Base class for malformed coalitions or illegal moves."""


class InvalidSplit(CoalitionError):
    pass


class InvalidMerge(CoalitionError):
    pass


class InvalidSwap(CoalitionError):
    pass


def mask_of(agents: Iterable[int]) -> int:
    m = 0
    for a in agents:
        if a < 0:
            raise CoalitionError(f"negative agent index {a}")
        m |= 1 << a
    return m


def members_of(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def lowest_bit(mask: int) -> int:
    return mask & -mask


def _sort_key(mask: int) -> int:
    return mask & -mask


class CoalitionStructure:
    """A partition of agents ``0..n-1`` into disjoint, nonempty coalitions.

    Instances are immutable and hashable; equality is equality of canonical
    forms. Use :func:`parse_structure` / :func:`format_structure` for the text
    form ``{{0,3},{1,2}}``.
    """

    __slots__ = ("n", "masks", "_key")

    def __init__(self, masks: Iterable[int], n: int):
        masks = [int(m) for m in masks]
        full = (1 << n) - 1
        seen = 0
        for m in masks:
            if m <= 0:
                raise CoalitionError("coalitions must be nonempty")
            if m & ~full:
                raise CoalitionError(f"coalition {members_of(m)} has agents outside 0..{n - 1}")
            if m & seen:
                raise CoalitionError("coalitions overlap")
            seen |= m
        if seen != full:
            raise CoalitionError(f"agents {members_of(full & ~seen)} are not covered")
        masks.sort(key=_sort_key)
        self.n = n
        self.masks: tuple[int, ...] = tuple(masks)
        self._key: bytes | None = None

    @classmethod
    def _trusted(cls, n: int, masks: list[int]) -> "CoalitionStructure":
        # masks must already be a valid partition; only ordering is applied
        obj = cls.__new__(cls)
        masks.sort(key=_sort_key)
        obj.n = n
        obj.masks = tuple(masks)
        obj._key = None
        return obj

    @classmethod
    def _canonical(cls, n: int, masks: tuple[int, ...]) -> "CoalitionStructure":
        # masks must already be a valid partition in canonical order
        obj = cls.__new__(cls)
        obj.n = n
        obj.masks = masks
        obj._key = None
        return obj

    @classmethod
    def from_lists(cls, coalitions: Iterable[Iterable[int]], n: int | None = None) -> "CoalitionStructure":
        masks = [mask_of(c) for c in coalitions]
        if n is None:
            n = max(m.bit_length() for m in masks) if masks else 0
        return cls(masks, n)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "CoalitionStructure":
        """Build from a label per agent (e.g. a restricted growth string)."""
        groups: dict[int, int] = {}
        for agent, lab in enumerate(labels):
            groups[lab] = groups.get(lab, 0) | (1 << agent)
        return cls(groups.values(), len(labels))

    @property
    def level(self) -> int:
        return len(self.masks)

    @property
    def key(self) -> bytes:
        if self._key is None:
            self._key = canonical_key(self)
        return self._key

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self) -> Iterator[int]:
        return iter(self.masks)

    def __getitem__(self, i: int) -> int:
        return self.masks[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoalitionStructure):
            return NotImplemented
        return self.n == other.n and self.masks == other.masks

    def __hash__(self) -> int:
        return hash((self.n, self.masks))

    def __repr__(self) -> str:
        return f"CoalitionStructure({format_structure(self)}, n={self.n})"

    def __str__(self) -> str:
        return format_structure(self)

    def as_lists(self) -> list[list[int]]:
        return [members_of(m) for m in self.masks]

    def index_of(self, agent: int) -> int:
        bit = 1 << agent
        for i, m in enumerate(self.masks):
            if m & bit:
                return i
        raise CoalitionError(f"agent {agent} not in structure")

    def labels(self) -> list[int]:
        """Restricted growth string: label of each agent's coalition."""
        out = [0] * self.n
        for i, m in enumerate(self.masks):
            for a in members_of(m):
                out[a] = i
        return out


def bottom(n: int) -> CoalitionStructure:
    """The grand coalition (level 1)."""
    return CoalitionStructure._trusted(n, [(1 << n) - 1])


def top(n: int) -> CoalitionStructure:
    """All singletons (level n)."""
    return CoalitionStructure._trusted(n, [1 << a for a in range(n)])


def canonical_key(cs: CoalitionStructure) -> bytes:
    """128-bit BLAKE2b digest of the canonical form.

    Collisions are negligible at this width; callers that must be exact
    compare structures by equality after a key match.
    """
    width = max(1, (cs.n + 7) // 8)
    h = hashlib.blake2b(digest_size=16)
    h.update(cs.n.to_bytes(4, "little"))
    for m in cs.masks:
        h.update(m.to_bytes(width, "little"))
    return h.digest()


def split(cs: CoalitionStructure, target: int, part: int) -> CoalitionStructure:
    """Replace coalition ``target`` by ``part`` and its complement within it."""
    if not 0 <= target < len(cs.masks):
        raise InvalidSplit(f"coalition index {target} out of range")
    whole = cs.masks[target]
    if part <= 0 or part & ~whole or part == whole:
        raise InvalidSplit(f"{members_of(part)} is not a nonempty strict subset of {members_of(whole)}")
    masks = list(cs.masks)
    masks[target] = part
    masks.append(whole ^ part)
    return CoalitionStructure._trusted(cs.n, masks)


def merge(cs: CoalitionStructure, i: int, j: int) -> CoalitionStructure:
    """Join coalitions ``i`` and ``j``."""
    k = len(cs.masks)
    if i == j or not (0 <= i < k and 0 <= j < k):
        raise InvalidMerge(f"cannot merge coalitions {i} and {j} of a level-{k} structure")
    masks = [m for t, m in enumerate(cs.masks) if t != i and t != j]
    masks.append(cs.masks[i] | cs.masks[j])
    return CoalitionStructure._trusted(cs.n, masks)


def _check_swap(cs: CoalitionStructure, i: int, a: int, j: int, b: int) -> None:
    k = len(cs.masks)
    if i == j or not (0 <= i < k and 0 <= j < k):
        raise InvalidSwap(f"swap needs two distinct coalitions, got {i} and {j}")
    if not cs.masks[i] >> a & 1:
        raise InvalidSwap(f"agent {a} is not in coalition {i}")
    if not cs.masks[j] >> b & 1:
        raise InvalidSwap(f"agent {b} is not in coalition {j}")


def swap(cs: CoalitionStructure, i: int, a: int, j: int, b: int) -> CoalitionStructure:
    """Exchange agent ``a`` of coalition ``i`` with agent ``b`` of coalition ``j``."""
    _check_swap(cs, i, a, j, b)
    ba, bb = 1 << a, 1 << b
    masks = list(cs.masks)
    masks[i] = (masks[i] ^ ba) | bb
    masks[j] = (masks[j] ^ bb) | ba
    return CoalitionStructure._trusted(cs.n, masks)


def swap_steps(cs: CoalitionStructure, i: int, a: int, j: int, b: int) -> list[CoalitionStructure]:
    """The split/merge sequence realising :func:`swap`, final structure included.

    The general case has four steps: split ``a`` off ``C_i``, merge it into
    ``C_j``, split ``b`` off, merge ``b`` into ``C_i \\ {a}``. When one side is a
    singleton its first split is impossible and the sequence shortens to
    merge-then-split (two steps). Swapping two singletons is the identity and
    yields an empty list.
    """
    _check_swap(cs, i, a, j, b)
    ci, cj = cs.masks[i], cs.masks[j]
    ba, bb = 1 << a, 1 << b
    if ci == ba and cj == bb:
        return []
    n = cs.n
    rest = [m for t, m in enumerate(cs.masks) if t != i and t != j]
    if ci == ba:
        # {a} joins C_j, then b leaves
        seq = [[cj | ba], [(cj | ba) ^ bb, bb]]
    elif cj == bb:
        seq = [[ci | bb], [(ci | bb) ^ ba, ba]]
    else:
        seq = [
            [ci ^ ba, ba, cj],
            [ci ^ ba, cj | ba],
            [ci ^ ba, (cj | ba) ^ bb, bb],
            [(ci ^ ba) | bb, (cj | ba) ^ bb],
        ]
    return [CoalitionStructure._trusted(n, rest + s) for s in seq]


def split_child_count(cs: CoalitionStructure) -> int:
    return sum((1 << (popcount(m) - 1)) - 1 for m in cs.masks)


def merge_child_count(cs: CoalitionStructure) -> int:
    k = len(cs.masks)
    return k * (k - 1) // 2


def enumerate_split_children(cs: CoalitionStructure) -> Iterator[CoalitionStructure]:
    """Every structure one split away, each exactly once.

    For each coalition (canonical order) the part holding its lowest member is
    enumerated in increasing mask order; the complement is implied.
    """
    for idx, whole in enumerate(cs.masks):
        low = whole & -whole
        rest = whole ^ low
        if not rest:
            continue
        sub = 0
        while True:
            if sub != rest:
                yield split(cs, idx, low | sub)
            if sub == rest:
                break
            sub = (sub - rest) & rest


def enumerate_merge_children(cs: CoalitionStructure) -> Iterator[CoalitionStructure]:
    k = len(cs.masks)
    for i in range(k):
        for j in range(i + 1, k):
            yield merge(cs, i, j)


def random_partition(n: int, rng: random.Random) -> CoalitionStructure:
    """Sequential random assignment: each agent joins one of the k existing
    coalitions or opens a new one, uniformly among the k + 1 choices.

    Not uniform over partitions (it favours coarse structures).
    """
    masks: list[int] = []
    for a in range(n):
        r = rng.randrange(len(masks) + 1)
        if r == len(masks):
            masks.append(1 << a)
        else:
            masks[r] |= 1 << a
    return CoalitionStructure._trusted(n, masks)


_COALITION_RE = re.compile(r"\{([^{}]*)\}")


def parse_structure(text: str, n: int | None = None) -> CoalitionStructure:
    """Parse ``{{0,3},{1,2}}`` (zero-based agents). ``n`` defaults to the
    number of agents mentioned."""
    body = text.strip()
    if not (body.startswith("{") and body.endswith("}")):
        raise CoalitionError(f"not a structure: {text!r}")
    inner = body[1:-1]
    groups = _COALITION_RE.findall(inner)
    if _COALITION_RE.sub("", inner).replace(",", "").strip():
        raise CoalitionError(f"stray characters in {text!r}")
    lists = []
    for g in groups:
        items = [s.strip() for s in g.split(",") if s.strip()]
        if not items:
            raise CoalitionError("empty coalition in structure text")
        lists.append([int(s) for s in items])
    if n is None:
        n = sum(len(c) for c in lists)
    return CoalitionStructure.from_lists(lists, n)


def format_structure(cs: CoalitionStructure) -> str:
    return "{" + ",".join("{" + ",".join(map(str, members_of(m))) + "}" for m in cs.masks) + "}"
