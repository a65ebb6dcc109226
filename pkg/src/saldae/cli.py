"""Command-line entry point: ``saldae {solve,bench,oracle,trace}``.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 integrity error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from .bench import ExperimentSpec, bound_violations, run_experiment
from .bridging import STRATEGIES
from .coalition import CoalitionError, format_structure, parse_structure
from .distributions import FAMILIES, ConfigurationError
from .engine import CHILD_SELECT, AnytimeTrace, SolverConfig
from .multi import CONFLICT_MODES, run_multi
from .oracle import CapacityError, optimal_dp
from .values import (
    DistributionSpec,
    TableFormatError,
    ValueDomainError,
    load_distribution_config,
    load_table,
    make_distribution,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_INTEGRITY = 0, 1, 2, 3
DEFAULT_SOLVE_EXPANSIONS = 1000  # budget for solve when none is given (deterministic)


class UsageError(Exception):
    pass


class IntegrityError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_duration(text: str) -> float:
    """Seconds from ``"2"``, ``"2s"``, ``"500ms"``, ``"1.5m"``."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*(ms|s|m)?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"bad duration {text!r}")
    value = float(m.group(1))
    return value * {"ms": 1e-3, "s": 1.0, "m": 60.0, None: 1.0}[m.group(2)]


def parse_n_values(text: str) -> tuple[int, ...]:
    """``"12"``, ``"4-12"`` or ``"10,12,15"``."""
    out: list[int] = []
    try:
        for part in text.split(","):
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad agent counts {text!r}") from None
    return tuple(out)


def parse_params(text: str) -> dict:
    """JSON object or ``key=value,key=value``."""
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise argparse.ArgumentTypeError(f"bad --dist-params JSON: {exc}") from None
    out = {}
    for item in filter(None, text.split(",")):
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"bad --dist-params entry {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out


def _solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--agents", type=int, default=4, metavar="M", help="search agents (default 4)")
    g.add_argument("--theta", type=int, help="children kept per expansion (default 2n)")
    g.add_argument("--omega", type=float, default=0.995, help="OPEN retention fraction (default 0.995)")
    g.add_argument("--nc", type=int, help="children generated per expansion, quantity selection")
    g.add_argument("--na", type=int, help="children admitted per expansion")
    g.add_argument("--child-select", choices=CHILD_SELECT, default="value")
    g.add_argument("--bridge", choices=STRATEGIES, default="split-then-merge")
    g.add_argument("--conflict", choices=CONFLICT_MODES, default="manage")
    g.add_argument("--start", default="bottom", help="bottom, top, random or a structure like {{0,1},{2}}")
    g.add_argument("--time-limit", type=parse_duration, help="wall-clock budget, e.g. 2s or 500ms")
    g.add_argument("--max-expansions", type=int, help=f"expansion budget (solve defaults to {DEFAULT_SOLVE_EXPANSIONS} when no budget is given)")


def _source_flags(p: argparse.ArgumentParser, n_type=int) -> None:
    g = p.add_argument_group("value source")
    g.add_argument("--n", type=n_type, help="number of agents")
    g.add_argument("--dist", choices=FAMILIES, help="value distribution family")
    g.add_argument("--dist-params", type=parse_params, default={}, help='JSON or "k=v,k=v"')
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--values-file", help="value table (<mask> <value> lines) or JSON distribution config")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="saldae", description="Anytime coalition structure generation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("solve", help="solve one instance")
    _source_flags(p)
    _solver_flags(p)
    p.add_argument("--out", help="write the merged trace here (per-agent traces and a summary alongside)")

    p = sub.add_parser("bench", help="run a benchmark sweep")
    _source_flags(p, n_type=parse_n_values)
    _solver_flags(p)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--oracle", choices=("on", "off"), default="on")
    p.add_argument("--no-timing", action="store_true", help="leave wall-clock columns blank")
    p.add_argument("--no-early-stop", action="store_true", help="use the full budget even at the optimum")
    p.add_argument("--oracle-cache", help="JSON file caching oracle results by table digest")
    p.add_argument("--out", required=True, help="report CSV path (summary JSON written beside it)")

    p = sub.add_parser("oracle", help="exact optimum by dynamic programming (n <= 25)")
    _source_flags(p)
    p.add_argument("--out", help="write the result as JSON")

    p = sub.add_parser("trace", help="validate traces and print a value-vs-time table")
    p.add_argument("files", nargs="+")
    p.add_argument("--out", help="write the table here instead of stdout")
    return parser


def load_value_function(args):
    if args.values_file:
        path = Path(args.values_file)
        head = path.read_text(encoding="utf-8").lstrip()[:1]
        if head == "{":
            spec, n, seed = load_distribution_config(path)
            return make_distribution(spec, n, seed)
        vf = load_table(path)
        if args.n is not None and args.n != vf.n:
            raise UsageError(f"--n {args.n} does not match table over {vf.n} agents")
        return vf
    if args.dist is None or args.n is None:
        raise UsageError("a value source is required: --values-file PATH, or --dist NAME with --n N")
    return make_distribution(DistributionSpec(args.dist, args.dist_params), args.n, args.seed)


def _solver_config(args, n: int | None = None) -> SolverConfig:
    start = args.start
    if start not in ("bottom", "top", "random"):
        try:
            start = parse_structure(start, n)
        except CoalitionError as exc:
            raise UsageError(f"--start: {exc}") from None
    if args.agents < 1:
        raise UsageError("--agents must be >= 1")
    cfg = SolverConfig(
        theta=args.theta,
        omega=args.omega,
        n_c=args.nc,
        n_a=args.na,
        child_select=args.child_select,
        bridge_strategy=args.bridge,
        start=start,
        time_limit=args.time_limit,
        max_expansions=args.max_expansions,
        seed=args.seed,
    )
    try:
        cfg.resolved(n or 1)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def cmd_solve(args) -> int:
    vf = load_value_function(args)
    if args.time_limit is None and args.max_expansions is None:
        args.max_expansions = DEFAULT_SOLVE_EXPANSIONS
    cfg = _solver_config(args, vf.n)
    res = run_multi(cfg, vf, m=args.agents, conflict=args.conflict)
    trace_path = "-"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(res.trace.to_jsonl(), encoding="utf-8")
        for i, tr in enumerate(res.agent_traces):
            out.with_name(f"{out.stem}.agent{i}.jsonl").write_text(tr.to_jsonl(), encoding="utf-8")
        summary = {**res.summary(), "structure": format_structure(res.structure)}
        out.with_name(f"{out.stem}.summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        trace_path = str(out)
    print(f"structure: {format_structure(res.structure)}")
    print(f"value: {res.value!r}")
    print(f"expansions: {res.expansions}")
    print(f"trace: {trace_path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.values_file:
        raise UsageError("bench generates its own instances; use --dist and --n")
    if args.dist is None or args.n is None:
        raise UsageError("bench needs --dist NAME and --n N (e.g. 4-12)")
    if args.time_limit is None and args.max_expansions is None:
        args.time_limit = 5.0
    cfg = _solver_config(args, min(args.n))
    spec = ExperimentSpec(
        distribution=DistributionSpec(args.dist, args.dist_params),
        n_values=args.n,
        instances=args.instances,
        solver=cfg,
        agents=args.agents,
        conflict=args.conflict,
        budget=args.time_limit,
        oracle=args.oracle == "on",
        output=args.out,
        seed=args.seed,
        timing=not args.no_timing,
        stop_at_optimum=not args.no_early_stop,
        oracle_cache=args.oracle_cache,
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows, summary = run_experiment(spec)
    for n, agg in summary["aggregates"].items():
        parts = [f"n={n}"]
        for key in ("mean_quality", "success_rate", "mean_gain_vs_singleton"):
            if agg[key] is not None:
                parts.append(f"{key}={agg[key]:.4f}")
        if agg["errors"]:
            parts.append(f"errors={agg['errors']}")
        print("  ".join(parts))
    print(f"report: {args.out}")
    bad = bound_violations(rows)
    if bad:
        raise IntegrityError(f"{len(bad)} rows exceed the exact optimum")
    return EXIT_OK


def cmd_oracle(args) -> int:
    vf = load_value_function(args)
    res = optimal_dp(vf)
    print(f"structure: {format_structure(res.optimum)}")
    print(f"value: {res.value!r}")
    if args.out:
        Path(args.out).write_text(
            json.dumps({"n": vf.n, "structure": format_structure(res.optimum), "value": res.value}) + "\n",
            encoding="utf-8",
        )
    return EXIT_OK


def trace_report(paths: list[str]) -> list[tuple[float, float, str]]:
    """Validate each trace and return the merged monotone envelope as
    ``(elapsed_ms, best_value, source)`` rows."""
    events = []
    for path in paths:
        try:
            tr = AnytimeTrace.from_jsonl(Path(path).read_text(encoding="utf-8"))
        except (KeyError, ValueError) as exc:
            raise IntegrityError(f"{path}: malformed trace ({exc})") from None
        if not tr.is_monotone():
            raise IntegrityError(f"{path}: trace values are not strictly increasing")
        events.extend((e.elapsed_ms, e.best_value, path) for e in tr)
    if not events:
        # an agent that never improved leaves an empty file; all of them empty is not a run
        raise IntegrityError(f"no trace events in {', '.join(paths)}")
    events.sort(key=lambda e: (e[0], -e[1]))
    envelope = []
    for ev in events:
        if not envelope or ev[1] > envelope[-1][1]:
            envelope.append(ev)
    return envelope


def cmd_trace(args) -> int:
    rows = trace_report(args.files)
    lines = ["elapsed_ms\tbest_value\tsource"] + [f"{t:.3f}\t{v!r}\t{src}" for t, v, src in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "oracle": cmd_oracle, "trace": cmd_trace}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"saldae {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrityError as exc:
        print(f"saldae {args.command}: integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ConfigurationError, TableFormatError, ValueDomainError, CapacityError, CoalitionError, OSError, ValueError) as exc:
        print(f"saldae {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
