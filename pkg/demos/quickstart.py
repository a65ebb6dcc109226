"""Solve one instance, check it against the exact optimum, and show how the
incumbent improved over time."""

from saldae import SolverConfig, format_structure, make_distribution, optimal_dp, structure_value
from saldae.multi import run_multi

N, SEED = 12, 4

vf = make_distribution("normal", N, SEED)
res = run_multi(SolverConfig(time_limit=2.0, seed=SEED), vf, m=4)
exact = optimal_dp(vf)

print(f"{N} agents, normal values, seed {SEED}")
print(f"found   {format_structure(res.structure)}  value {res.value:.4f}")
print(f"optimum {format_structure(exact.optimum)}  value {exact.value:.4f}")
print(f"quality {res.value / exact.value:.4%} after {res.expansions} expansions")
assert structure_value(vf, res.structure) == res.value

print("\nanytime trace (ms, value, coalitions, expansions):")
for e in res.trace:
    print(f"  {e.elapsed_ms:9.1f}  {e.best_value:10.4f}  {e.level:3d}  {e.expansions:6d}")
print("\nconflicts between agents:", res.conflicts)
