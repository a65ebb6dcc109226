"""Experiment runner: generate instances, solve under a budget, score, report.

A report is a CSV of per-instance rows plus a JSON summary beside it (same
stem, ``.json``). Column meanings are in :data:`COLUMNS`.

Runs are deterministic given an ExperimentSpec except for wall-clock columns; pass
``timing=False`` (and use an expansion cap rather than a time limit) for
byte-identical reports across runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .coalition import format_structure, top
from .engine import SolverConfig
from .multi import run_multi
from .oracle import MAX_TABLE_AGENTS, CapacityError, OracleCache, optimal_dp
from .values import DistributionSpec, make_distribution, structure_value

__all__ = [
    "COLUMNS",
    "WORKERS_ENV",
    "ExperimentSpec",
    "MetricsRow",
    "run_instance",
    "run_experiment",
    "aggregate",
    "read_rows",
]

WORKERS_ENV = "SALDAE_WORKERS"
SUCCESS_RTOL = 1e-9

COLUMNS = {
    "distribution": "value distribution family",
    "n": "number of agents",
    "seed": "instance seed (value function and solver)",
    "best_value": "value of the best structure found",
    "best_level": "number of coalitions in the best structure",
    "elapsed_to_best_ms": "wall-clock time of the last improvement (blank when timing is off)",
    "elapsed_ms": "wall-clock time of the whole solve (blank when timing is off)",
    "expansions": "node expansions summed over search agents",
    "optimum": "exact optimum (blank when the oracle is off)",
    "quality": "best_value / optimum (blank when the oracle is off)",
    "success": "1 if quality equals 1 within 1e-9 relative, else 0 (blank when the oracle is off)",
    "singleton_value": "value of the all-singletons structure",
    "gain_vs_singleton": "best_value / singleton_value (blank when singleton_value is 0)",
    "structure": "best structure in text form",
    "error": "error message when the instance failed, else blank",
}


@dataclass(frozen=True)
class ExperimentSpec:
    """One benchmark sweep.

    ``seed`` is the base seed; instance ``i`` at every ``n`` uses ``seed + i``.
    ``stop_at_optimum`` ends a solve once the oracle's value is reached (only
    when the oracle runs).
    """

    distribution: DistributionSpec
    n_values: tuple[int, ...]
    instances: int = 20
    solver: SolverConfig = field(default_factory=SolverConfig)
    agents: int = 4
    conflict: str = "manage"
    budget: float | None = 5.0
    oracle: bool = True
    output: str | None = None
    seed: int = 0
    timing: bool = True
    stop_at_optimum: bool = True
    oracle_cache: str | None = None

    def validate(self) -> None:
        if not self.n_values:
            raise ValueError("need at least one agent count")
        if any(n < 1 for n in self.n_values):
            raise ValueError("agent counts must be positive")
        if self.oracle and max(self.n_values) > MAX_TABLE_AGENTS:
            raise ValueError(f"oracle requires n <= {MAX_TABLE_AGENTS}")
        if self.instances < 1:
            raise ValueError("need at least one instance per point")
        if self.budget is None and self.solver.max_expansions is None:
            raise ValueError("set a time budget or an expansion cap")
        self.distribution.resolved()


@dataclass
class MetricsRow:
    distribution: str
    n: int
    seed: int
    best_value: float | None = None
    best_level: int | None = None
    elapsed_to_best_ms: float | None = None
    elapsed_ms: float | None = None
    expansions: int | None = None
    optimum: float | None = None
    quality: float | None = None
    success: int | None = None
    singleton_value: float | None = None
    gain_vs_singleton: float | None = None
    structure: str = ""
    error: str = ""

    def cells(self) -> list[str]:
        out = []
        for v in asdict(self).values():
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


def run_instance(spec: ExperimentSpec, n: int, index: int) -> MetricsRow:
    seed = spec.seed + index
    row = MetricsRow(spec.distribution.name, n, seed)
    try:
        vf = make_distribution(spec.distribution, n, seed)
        opt = None
        if spec.oracle:
            if spec.oracle_cache:
                opt = OracleCache(spec.oracle_cache).solve(vf)
            else:
                opt = optimal_dp(vf)
            row.optimum = opt.value
        cfg = replace(
            spec.solver,
            seed=seed,
            time_limit=spec.budget,
            stop_value=opt.value if (opt is not None and spec.stop_at_optimum) else None,
        )
        res = run_multi(cfg, vf, m=spec.agents, conflict=spec.conflict)
        row.best_value = res.value
        row.best_level = res.structure.level
        row.expansions = res.expansions
        row.structure = format_structure(res.structure)
        if spec.timing:
            row.elapsed_ms = res.elapsed * 1000.0
            row.elapsed_to_best_ms = res.trace[-1].elapsed_ms
        if opt is not None:
            if opt.value > 0:
                row.quality = res.value / opt.value
                row.success = int(abs(res.value - opt.value) <= SUCCESS_RTOL * abs(opt.value))
            else:
                row.error = "quality undefined: optimum is not positive"
        sv = structure_value(vf, top(n))
        row.singleton_value = sv
        if sv > 0:
            row.gain_vs_singleton = res.value / sv
    except (ValueError, CapacityError, OSError, MemoryError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def _task(args):
    spec, n, i = args
    return run_instance(spec, n, i)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def aggregate(rows: list[MetricsRow]) -> dict:
    """Per-n means, recomputed from the rows alone."""
    out = {}
    for n in sorted({r.n for r in rows}):
        sub = [r for r in rows if r.n == n]
        ok = [r for r in sub if not r.error and r.best_value is not None]
        q = [r.quality for r in ok if r.quality is not None]
        g = [r.gain_vs_singleton for r in ok if r.gain_vs_singleton is not None]
        s = [r.success for r in ok if r.success is not None]
        out[str(n)] = {
            "instances": len(sub),
            "errors": len(sub) - len(ok),
            "mean_quality": math.fsum(q) / len(q) if q else None,
            "success_rate": sum(s) / len(s) if s else None,
            "mean_gain_vs_singleton": math.fsum(g) / len(g) if g else None,
            "mean_expansions": math.fsum(r.expansions for r in ok) / len(ok) if ok else None,
        }
    return out


def bound_violations(rows: list[MetricsRow]) -> list[MetricsRow]:
    """Rows where the heuristic beat the exact optimum (must be empty)."""
    bad = []
    for r in rows:
        if r.optimum is None or r.best_value is None:
            continue
        if r.best_value > r.optimum or (r.quality is not None and not 0 < r.quality <= 1):
            bad.append(r)
    return bad


def _csv_text(rows: list[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(COLUMNS))
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def _summary(spec: ExperimentSpec, rows: list[MetricsRow]) -> dict:
    solver = {k: v for k, v in asdict(spec.solver).items() if k not in ("seed", "stop_value", "time_limit")}
    if not isinstance(solver.get("start"), str):
        solver["start"] = format_structure(spec.solver.start)
    return {
        "distribution": spec.distribution.name,
        "params": spec.distribution.resolved(),
        "n_values": list(spec.n_values),
        "instances": spec.instances,
        "base_seed": spec.seed,
        "agents": spec.agents,
        "conflict": spec.conflict,
        "budget_s": spec.budget,
        "oracle": spec.oracle,
        "stop_at_optimum": spec.stop_at_optimum and spec.oracle,
        "solver": solver,
        "caveat": (
            "solves use a fixed per-instance budget (ended early at the exact optimum when the oracle "
            "runs); no reference solver sets the stopping time"
        ),
        "aggregates": aggregate(rows),
        "bound_violations": len(bound_violations(rows)),
        "columns": COLUMNS,
    }


def run_experiment(spec: ExperimentSpec) -> tuple[list[MetricsRow], dict]:
    """Run every (n, instance) pair and write the report if ``spec.output`` is set.

    Instances run on ``$SALDAE_WORKERS`` processes (default 1); rows are
    always assembled in (n, seed) order.
    """
    spec.validate()
    tasks = [(spec, n, i) for n in spec.n_values for i in range(spec.instances)]
    workers = _workers()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_task, tasks))
    else:
        rows = [_task(t) for t in tasks]
    summary = _summary(spec, rows)
    if spec.output:
        path = Path(spec.output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(_csv_text(rows), encoding="utf-8")
        path.with_suffix(".json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return rows, summary


def read_rows(path: str | Path) -> list[MetricsRow]:
    """Parse a report CSV back into rows."""
    ints = {"n", "seed", "best_level", "expansions", "success"}
    text = {"distribution", "structure", "error"}
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            kw = {}
            for k, v in rec.items():
                if k in text:
                    kw[k] = v
                elif v == "":
                    kw[k] = None
                else:
                    kw[k] = int(v) if k in ints else float(v)
            rows.append(MetricsRow(**kw))
    return rows
