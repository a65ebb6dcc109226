"""Characteristic functions: explicit tables and lazily evaluated distributions."""

from __future__ import annotations

import hashlib
import json
import math
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .coalition import CoalitionStructure, members_of
from .distributions import ConfigurationError, agent_data, resolve_params, sample_value

__all__ = [
    "MAX_TABLE_AGENTS",
    "ValueDomainError",
    "TableFormatError",
    "ConfigurationError",
    "DistributionSpec",
    "ValueFunction",
    "TableValueFunction",
    "LazyValueFunction",
    "structure_value",
    "make_distribution",
    "materialize",
    "random_table",
    "load_table",
    "save_table",
    "load_distribution_config",
]

MAX_TABLE_AGENTS = 25


class ValueDomainError(ValueError):
    """Coalition is empty or references agents outside ``0..n-1``."""


class TableFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DistributionSpec:
    name: str
    params: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        return resolve_params(self.name, self.params)


class ValueFunction:
    """``v: coalition mask -> float``. Subclasses implement :meth:`_raw`."""

    kind = "abstract"
    n: int

    def _check(self, mask: int) -> None:
        if mask <= 0 or mask >> self.n:
            raise ValueDomainError(f"coalition {members_of(mask) if mask > 0 else mask} invalid for n={self.n}")

    def value(self, mask: int) -> float:
        self._check(mask)
        return self._raw(mask)

    __call__ = value

    def _raw(self, mask: int) -> float:  # pragma: no cover
        raise NotImplementedError

    def structure_value(self, cs: CoalitionStructure) -> float:
        return structure_value(self, cs)

    def lookup(self):
        """Fastest unchecked ``mask -> value`` callable for hot loops."""
        return self._raw


def structure_value(vf: ValueFunction, cs: CoalitionStructure) -> float:
    """Sum of coalition values, correctly rounded (order independent)."""
    if cs.n != vf.n:
        raise ValueDomainError(f"structure over {cs.n} agents, value function over {vf.n}")
    raw = vf._raw
    return math.fsum([raw(m) for m in cs.masks])


class TableValueFunction(ValueFunction):
    kind = "table"

    def __init__(self, values: Iterable[float] | np.ndarray, n: int | None = None):
        arr = np.asarray(values, dtype=np.float64)
        if n is None:
            n = int(arr.size).bit_length() - 1
        if n > MAX_TABLE_AGENTS:
            raise ValueDomainError(f"table functions support n <= {MAX_TABLE_AGENTS}, got {n}")
        if arr.size != 1 << n:
            raise ValueDomainError(f"table for n={n} needs {1 << n} slots (slot 0 unused), got {arr.size}")
        self.n = n
        self.array = arr
        self.array.setflags(write=False)
        self._list = arr.tolist() if n <= 20 else None

    def _raw(self, mask: int) -> float:
        if self._list is not None:
            return self._list[mask]
        return float(self.array[mask])

    def lookup(self):
        return self._list.__getitem__ if self._list is not None else self._raw

    @classmethod
    def from_dict(cls, values: dict[int, float], n: int) -> "TableValueFunction":
        arr = np.zeros(1 << n)
        for m, v in values.items():
            arr[m] = v
        return cls(arr, n)

    def digest(self) -> str:
        return hashlib.blake2b(self.array.tobytes(), digest_size=16).hexdigest()


class LazyValueFunction(ValueFunction):
    """Values drawn on demand from a generator keyed by ``(seed, family, coalition)``.

    The same coalition always receives the same value; nothing is stored
    beyond a bounded memo cache, so n in the thousands is fine.
    """

    kind = "lazy-distribution"

    def __init__(self, spec: DistributionSpec, n: int, seed: int, cache_size: int = 1 << 20):
        if n < 1:
            raise ConfigurationError("need at least one agent")
        self.spec = spec
        self.params = spec.resolved()
        self.n = n
        self.seed = int(seed)
        self._agents = agent_data(spec.name, self.params, n, self.seed)
        self._width = max(1, (n + 7) // 8)
        self._prefix = f"{self.seed & 0xFFFFFFFFFFFFFFFF}:{spec.name}:".encode()
        self._cache: dict[int, float] = {}
        self._cache_size = cache_size
        self._lock = threading.Lock()

    @property
    def agent_powers(self) -> list[float] | None:
        return None if self._agents is None else list(self._agents["power"])

    def _draw(self, mask: int) -> float:
        h = hashlib.blake2b(self._prefix + mask.to_bytes(self._width, "little"), digest_size=8).digest()
        rng = random.Random(int.from_bytes(h, "little"))
        return sample_value(self.spec.name, self.params, rng, members_of(mask), self._agents)

    def _raw(self, mask: int) -> float:
        v = self._cache.get(mask)
        if v is None:
            v = self._draw(mask)
            with self._lock:
                if len(self._cache) >= self._cache_size:
                    self._cache.clear()
                self._cache[mask] = v
        return v


def make_distribution(spec: DistributionSpec | str, n: int, seed: int, params: dict | None = None) -> LazyValueFunction:
    if isinstance(spec, str):
        spec = DistributionSpec(spec, dict(params or {}))
    return LazyValueFunction(spec, n, seed)


def materialize(vf: ValueFunction) -> TableValueFunction:
    if isinstance(vf, TableValueFunction):
        return vf
    if vf.n > MAX_TABLE_AGENTS:
        raise ValueDomainError(f"cannot tabulate n={vf.n} > {MAX_TABLE_AGENTS}")
    arr = np.zeros(1 << vf.n)
    raw = vf._raw
    for m in range(1, 1 << vf.n):
        arr[m] = raw(m)
    return TableValueFunction(arr, vf.n)


def random_table(n: int, seed: int, integer: bool = False) -> TableValueFunction:
    """Test instance: ``v(C) = |C| * U(0,1)``, or small integers when ``integer``
    (integer tables make exact ties common)."""
    rng = np.random.default_rng(seed)
    sizes = np.array([bin(m).count("1") for m in range(1 << n)], dtype=np.float64)
    if integer:
        arr = sizes * rng.integers(0, 4, 1 << n)
    else:
        arr = sizes * rng.random(1 << n)
    arr[0] = 0.0
    return TableValueFunction(arr, n)


def load_table(path: str | Path) -> TableValueFunction:
    """Read ``<mask> <value>`` lines; ``#`` starts a comment."""
    entries: dict[int, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise TableFormatError(f"{path}:{lineno}: expected '<mask> <value>'")
            try:
                mask, val = int(parts[0]), float(parts[1])
            except ValueError as exc:
                raise TableFormatError(f"{path}:{lineno}: {exc}") from None
            if mask <= 0:
                raise TableFormatError(f"{path}:{lineno}: mask must be positive")
            if mask in entries:
                raise TableFormatError(f"{path}:{lineno}: duplicate mask {mask}")
            entries[mask] = val
    if not entries:
        raise TableFormatError(f"{path}: no entries")
    n = max(entries).bit_length()
    if n > MAX_TABLE_AGENTS:
        raise TableFormatError(f"{path}: n={n} exceeds table limit {MAX_TABLE_AGENTS}")
    for m in range(1, 1 << n):
        if m not in entries:
            raise TableFormatError(f"{path}: missing mask {m}")
    return TableValueFunction.from_dict(entries, n)


def save_table(vf: ValueFunction, path: str | Path) -> None:
    table = materialize(vf)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={table.n}\n")
        for m in range(1, 1 << table.n):
            fh.write(f"{m} {float(table.array[m])!r}\n")


def load_distribution_config(path: str | Path) -> tuple[DistributionSpec, int, int]:
    """Read a JSON config ``{"distribution": ..., "params": {...}, "n": ..., "seed": ...}``."""
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    try:
        spec = DistributionSpec(cfg["distribution"], dict(cfg.get("params", {})))
        n, seed = int(cfg["n"]), int(cfg.get("seed", 0))
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"{path}: bad distribution config ({exc})") from None
    spec.resolved()
    return spec, n, seed
