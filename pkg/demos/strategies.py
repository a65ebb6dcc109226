"""A small head-to-head of child-selection heuristics and agent counts on a
handful of instances. Budgets are short, so expect noisy numbers."""

from statistics import mean

from saldae import SolverConfig, make_distribution, optimal_dp
from saldae.multi import run_multi

N, INSTANCES, BUDGET = 11, 4, 0.5
settings = {
    "value, 4 agents": (dict(child_select="value"), 4),
    "quantity, 4 agents": (dict(child_select="quantity"), 4),
    "random, 4 agents": (dict(child_select="random", n_a=8, n_c=16), 4),
    "value, 1 agent": (dict(child_select="value"), 1),
}

for dist in ("uniform", "pascal"):
    cases = [(make_distribution(dist, N, s), s) for s in range(INSTANCES)]
    best = [optimal_dp(vf).value for vf, _ in cases]
    print(f"{dist}, n={N}, {INSTANCES} instances, {BUDGET}s each")
    for name, (kw, m) in settings.items():
        q = [run_multi(SolverConfig(seed=s, time_limit=BUDGET, **kw), vf, m=m).value / b for (vf, s), b in zip(cases, best)]
        print(f"  {name:20s} mean quality {mean(q):.4f}  optimal {sum(x == 1.0 for x in q)}/{INSTANCES}")
