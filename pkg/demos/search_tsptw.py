"""Exact search on a small TSPTW instance with hand-written heuristics.

Run: python3 demos/search_tsptw.py
"""
from hybridcp import tsptw
from hybridcp.dp import bellman_solve
from hybridcp.search import Cache, encode, lexicographic, nearest, search_bab, search_ilds

inst = tsptw.generate(12, seed=3)
spec = tsptw.dp_spec(inst)
print(f"{inst.n} cities, windows {inst.windows[:4]} ...")

best = bellman_solve(spec)
print(f"exact DP value {best.value} via {[v for _, v in best.assignment]}")

for name, heuristic in (("lexicographic", lexicographic()), ("nearest", nearest())):
    bab = search_bab(encode(spec), heuristic, Cache())
    print(f"branch-and-bound / {name:13s} objective {bab.objective} proven {bab.proven_optimal} "
          f"nodes {bab.stats.nodes} incumbents {bab.incumbents}")

# the discrepancy limit grows one at a time; a run that never hits its limit is a proof
for limit in (0, 1, 2, 40):
    r = search_ilds(encode(spec), nearest(), limit)
    print(f"discrepancy limit {limit:2d}: objective {r.objective} proven {r.proven_optimal} nodes {r.stats.nodes}")
