"""Train small DQN and PPO models on 10-city TSPTW, then use them as
value-selection heuristics inside complete search. Takes about a minute.

Run: python3 demos/learned_heuristics.py
"""
from hybridcp import tsptw
from hybridcp.dp import bellman_solve
from hybridcp.search import Cache, dqn_heuristic, encode, ppo_heuristic, search_bab, search_ilds, search_rbs
from hybridcp.train import DqnConfig, PpoConfig, beam_decode, greedy_decode, train_dqn, train_ppo

net = dict(layers=2, embed_dim=16, hidden_layers=1, hidden_dim=32)
dqn = train_dqn("tsptw", [10], DqnConfig(lr=1e-3), seed=0, episodes=1500, network=net)
print(f"DQN selected episode {dqn.selected.episode}, greedy feasibility {dqn.selected.feasible_rate:.2f}")
ppo = train_ppo("tsptw", [10], PpoConfig(lr=1e-3, update_timestep=512), seed=0, episodes=1500, network=net)
print(f"PPO selected episode {ppo.selected.episode}, greedy feasibility {ppo.selected.feasible_rate:.2f}")

q_ck, pi_ck = dqn.best_checkpoint, ppo.best_checkpoint
for seed in range(100, 105):
    spec = tsptw.dp_spec(tsptw.generate(10, seed=seed))
    exact = bellman_solve(spec)
    rows = {
        "dqn greedy": greedy_decode(q_ck, spec).objective,
        "ppo beam 16": beam_decode(pi_ck, spec, 16).objective,
    }
    for name, r in (("bab-dqn", search_bab(encode(spec), dqn_heuristic(q_ck), Cache())),
                    ("ilds-dqn", search_ilds(encode(spec), dqn_heuristic(q_ck), 100, Cache())),
                    ("rbs-ppo", search_rbs(encode(spec), ppo_heuristic(pi_ck), 100, 8, 20.0, 0, Cache()))):
        rows[name] = f"{r.objective} ({'proven' if r.proven_optimal else 'open'}, {r.stats.nodes} nodes)"
    print(f"instance {seed}: exact {exact.value if exact.feasible else None}")
    for k, v in rows.items():
        print(f"    {k:12s} {v}")
