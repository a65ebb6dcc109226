"""Benchmark value distributions.

Every constant used to generate instances lives in :data:`DEFAULT_PARAMS`.
These are conventional choices from the coalition-structure-generation
benchmark literature, picked for this package; they are not ground truth for
any published experiment. Values are always clamped to be nonnegative.

Coalition-level families draw ``v(C)`` independently per coalition::

    uniform       v(C) = |C| * U(0, scale)
    normal        v(C) = |C| * N(mean, sd)
    beta          v(C) = |C| * Beta(a, b)
    exponential   v(C) = |C| * Exp(rate)
    gamma         v(C) = |C| * Gamma(shape, scale)
    pascal        v(C) = |C| * NegBin(r, p)          (failures before r-th success)
    zipf          v(C) = |C| * Zipf(a)               (support 1, 2, ...)

Agent-based families draw one power ``p_i`` per agent once per seed::

    agent-based-uniform  p_i ~ U(low, high); v({i}) = p_i;
                         v(C) = sum(p_i) * U(0, 2) for |C| >= 2
    agent-based-normal   p_i ~ N(mean, sd);  v({i}) = p_i;
                         v(C) = sum(p_i) * N(1, noise_sd) for |C| >= 2

Surrogates (agents placed on the unit square; ``spread(C)`` is the mean
distance of members to their centroid)::

    disaster-response-surrogate
        skill s_i ~ U(0.5, 1.5)
        v(C) = sum(s_i) * (1 + synergy * min(|C| - 1, team_cap - 1))
               * exp(-spread(C) / radius) * U(1 - jitter, 1 + jitter)   (|C| >= 2)
        v({i}) = s_i
    ev-allocation-surrogate
        demand d_i ~ U(dmin, dmax)
        v(C) = min(sum(d_i), hub_capacity) * (1 - detour * spread(C)) - hub_cost
"""

from __future__ import annotations

import math
import random

import numpy as np

__all__ = ["DEFAULT_PARAMS", "FAMILIES", "AGENT_FAMILIES", "ConfigurationError", "agent_data", "sample_value"]

SURROGATE_VERSION = 1

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "uniform": {"scale": 1.0},
    "normal": {"mean": 1.0, "sd": 0.1},
    "beta": {"a": 0.5, "b": 0.5},
    "exponential": {"rate": 1.0},
    "gamma": {"shape": 2.0, "scale": 2.0},
    "pascal": {"r": 4, "p": 0.5},
    "zipf": {"a": 2.0},
    "agent-based-uniform": {"low": 0.0, "high": 10.0},
    "agent-based-normal": {"mean": 10.0, "sd": 1.0, "noise_sd": 0.1},
    "disaster-response-surrogate": {"synergy": 0.2, "team_cap": 5, "radius": 0.3, "jitter": 0.05},
    "ev-allocation-surrogate": {"dmin": 10.0, "dmax": 50.0, "hub_capacity": 150.0, "detour": 0.5, "hub_cost": 5.0},
}

FAMILIES = tuple(DEFAULT_PARAMS)
AGENT_FAMILIES = frozenset(
    {"agent-based-uniform", "agent-based-normal", "disaster-response-surrogate", "ev-allocation-surrogate"}
)


class ConfigurationError(ValueError):
    """Unknown distribution family or invalid parameters."""


def resolve_params(name: str, params: dict | None) -> dict[str, float]:
    if name not in DEFAULT_PARAMS:
        raise ConfigurationError(f"unknown distribution {name!r}; known: {', '.join(FAMILIES)}")
    merged = dict(DEFAULT_PARAMS[name])
    for k, v in (params or {}).items():
        if k not in merged:
            raise ConfigurationError(f"{name}: unknown parameter {k!r}")
        merged[k] = v
    _validate(name, merged)
    return merged


def _validate(name: str, p: dict) -> None:
    def positive(*keys):
        for k in keys:
            if not p[k] > 0:
                raise ConfigurationError(f"{name}: {k} must be > 0, got {p[k]}")

    if name == "uniform":
        positive("scale")
    elif name == "normal":
        positive("sd")
    elif name == "beta":
        positive("a", "b")
    elif name == "exponential":
        positive("rate")
    elif name == "gamma":
        positive("shape", "scale")
    elif name == "pascal":
        positive("r")
        if int(p["r"]) != p["r"] or not 0 < p["p"] < 1:
            raise ConfigurationError("pascal: r must be a positive integer and 0 < p < 1")
    elif name == "zipf":
        if not p["a"] > 1:
            raise ConfigurationError("zipf: a must be > 1")
    elif name == "agent-based-uniform":
        if not p["high"] > p["low"]:
            raise ConfigurationError("agent-based-uniform: high must exceed low")
    elif name == "agent-based-normal":
        positive("sd", "noise_sd")
    elif name == "disaster-response-surrogate":
        positive("radius", "team_cap")
    elif name == "ev-allocation-surrogate":
        positive("hub_capacity")
        if not p["dmax"] > p["dmin"] >= 0:
            raise ConfigurationError("ev-allocation-surrogate: need 0 <= dmin < dmax")


def agent_data(name: str, params: dict, n: int, seed: int) -> dict[str, list[float]] | None:
    """Per-agent attributes for agent-based families, drawn once from ``seed``."""
    if name not in AGENT_FAMILIES:
        return None
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0xA6E7])
    if name == "agent-based-uniform":
        power = rng.uniform(params["low"], params["high"], n)
        return {"power": np.maximum(power, 0.0).tolist()}
    if name == "agent-based-normal":
        power = rng.normal(params["mean"], params["sd"], n)
        return {"power": np.maximum(power, 0.0).tolist()}
    xy = rng.uniform(0.0, 1.0, (n, 2))
    data = {"x": xy[:, 0].tolist(), "y": xy[:, 1].tolist()}
    if name == "disaster-response-surrogate":
        data["power"] = rng.uniform(0.5, 1.5, n).tolist()
    else:
        data["power"] = rng.uniform(params["dmin"], params["dmax"], n).tolist()
    return data


def _negbin(rng: random.Random, r: int, p: float) -> int:
    # sum of r geometric failure counts, by inversion
    log_q = math.log1p(-p)
    total = 0
    for _ in range(int(r)):
        u = 1.0 - rng.random()
        total += int(math.log(u) / log_q)
    return total


def _zipf(rng: random.Random, a: float) -> int:
    # Devroye's rejection sampler
    am1 = a - 1.0
    b = 2.0**am1
    while True:
        u = 1.0 - rng.random()
        v = rng.random()
        x = math.floor(u ** (-1.0 / am1))
        if x < 1 or x > 2**62:
            continue
        t = (1.0 + 1.0 / x) ** am1
        if v * x * (t - 1.0) / (b - 1.0) <= t / b:
            return int(x)


def _spread(members: list[int], data: dict) -> float:
    xs = [data["x"][i] for i in members]
    ys = [data["y"][i] for i in members]
    cx = math.fsum(xs) / len(xs)
    cy = math.fsum(ys) / len(ys)
    return math.fsum(math.hypot(x - cx, y - cy) for x, y in zip(xs, ys)) / len(xs)


def sample_value(name: str, params: dict, rng: random.Random, members: list[int], data: dict | None) -> float:
    """Draw ``v(C)`` for a coalition with the given members from a keyed ``rng``."""
    size = len(members)
    if name == "uniform":
        v = size * rng.uniform(0.0, params["scale"])
    elif name == "normal":
        v = size * rng.gauss(params["mean"], params["sd"])
    elif name == "beta":
        v = size * rng.betavariate(params["a"], params["b"])
    elif name == "exponential":
        v = size * rng.expovariate(params["rate"])
    elif name == "gamma":
        v = size * rng.gammavariate(params["shape"], params["scale"])
    elif name == "pascal":
        v = float(size * _negbin(rng, params["r"], params["p"]))
    elif name == "zipf":
        v = float(size * _zipf(rng, params["a"]))
    elif name == "agent-based-uniform":
        base = math.fsum(data["power"][i] for i in members)
        v = base if size == 1 else base * rng.uniform(0.0, 2.0)
    elif name == "agent-based-normal":
        base = math.fsum(data["power"][i] for i in members)
        v = base if size == 1 else base * rng.gauss(1.0, params["noise_sd"])
    elif name == "disaster-response-surrogate":
        base = math.fsum(data["power"][i] for i in members)
        if size == 1:
            v = base
        else:
            bonus = 1.0 + params["synergy"] * min(size - 1, params["team_cap"] - 1)
            j = params["jitter"]
            v = base * bonus * math.exp(-_spread(members, data) / params["radius"]) * rng.uniform(1 - j, 1 + j)
    elif name == "ev-allocation-surrogate":
        demand = math.fsum(data["power"][i] for i in members)
        spread = _spread(members, data) if size > 1 else 0.0
        v = min(demand, params["hub_capacity"]) * (1.0 - params["detour"] * spread) - params["hub_cost"]
    else:
        raise ConfigurationError(f"unknown distribution {name!r}")
    return v if v > 0.0 else 0.0
