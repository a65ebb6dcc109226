"""The three ways of walking from one structure to another by single splits
and merges. Every node printed would be evaluated by the search."""

from saldae.bridging import approach_then_swap, merge_then_split, split_then_merge
from saldae.coalition import parse_structure

source = parse_structure("{{0,1,2},{3,4,5}}")
target = parse_structure("{{0,3},{1},{2,4},{5}}")

for build in (split_then_merge, merge_then_split, approach_then_swap):
    path = build(source, target)
    print(f"{build.__name__}: {path.edges} edges")
    print("  " + "\n  ".join(path.dump().splitlines()))
    print()
