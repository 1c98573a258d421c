import numpy as np
import pytest

from hybridcp import portfolio, tsptw
from hybridcp.dp import ContractViolation, bellman_solve
from hybridcp.nn import Checkpoint, init_weights, port_config, tsptw_config
from hybridcp.search import (Cache, dqn_heuristic, encode, lexicographic, luby, nearest, oracle, ppo_heuristic,
                             sample_order, search_bab, search_ilds, search_rbs)
from hybridcp.search.model import SolverState, fixpoint_from_scratch, worst_case_nodes

from conftest import brute_force_port, brute_force_tsptw


def tsp_specs(count, n, seed0=0):
    return [tsptw.dp_spec(tsptw.generate(n, seed=seed0 + k)) for k in range(count)]


def dqn_ck(cfg=None, seed=0):
    return Checkpoint(init_weights(cfg or tsptw_config(), seed))


def full_i(spec):
    return spec.n_stages * (spec.action_count - 1)


def test_bab_fixture_optimum(tsp4):
    spec = tsptw.dp_spec(tsp4)
    r = search_bab(encode(spec), lexicographic())
    assert r.proven_optimal and r.objective == -24 == brute_force_tsptw(tsp4)


def test_bab_port_fixture(port2):
    r = search_bab(encode(portfolio.dp_spec(port2)), lexicographic())
    assert r.proven_optimal and r.objective == pytest.approx(brute_force_port(port2))


@pytest.mark.parametrize("heuristic", [lexicographic, nearest, oracle])
def test_bab_and_ilds_match_bellman(heuristic):
    for spec in tsp_specs(10, 6, 100):
        best = bellman_solve(spec)
        for r in (search_bab(encode(spec), heuristic()), search_ilds(encode(spec), heuristic(), full_i(spec))):
            assert r.proven_optimal
            if best.feasible:
                assert r.objective == best.value
            else:
                assert not r.feasible


def test_oracle_first_leaf_is_optimal():
    for spec in tsp_specs(10, 7, 200):
        best = bellman_solve(spec)
        r = search_bab(encode(spec), oracle())
        if best.feasible:
            assert r.incumbents[0] == best.value
            assert r.stats.solutions == 1


def test_ilds_zero_is_greedy_dive(tsp4):
    spec = tsptw.dp_spec(tsp4)
    r = search_ilds(encode(spec), nearest(), 0)
    assert r.stats.iterations == 1 and r.stats.solutions <= 1
    # nearest from the depot: customer 2 (5), then 3 (5), then 4 (6)
    assert r.assignment == (2, 3, 4)


def test_ilds_monotone_in_threshold():
    for spec in tsp_specs(8, 8, 300):
        prev = None
        for limit in range(0, 5):
            r = search_ilds(encode(spec), lexicographic(), limit)
            obj = r.objective if r.feasible else -np.inf
            assert prev is None or obj >= prev
            prev = obj


def test_ilds_unbinding_limit_is_proof():
    spec = tsp_specs(1, 6, 5)[0]
    r = search_ilds(encode(spec), nearest(), full_i(spec))
    assert r.proven_optimal
    assert r.stats.iterations <= full_i(spec) + 1


def test_ilds_rejects_negative():
    with pytest.raises(ValueError):
        search_ilds(encode(tsp_specs(1, 4)[0]), nearest(), -1)


def test_luby_prefix():
    assert [luby(i) for i in range(1, 16)] == [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]
    assert luby(16) == 1
    with pytest.raises(ValueError):
        luby(0)


def test_sample_order_low_tau_follows_probs():
    spec = tsp_specs(1, 5)[0]
    probs = np.array([0.0, 0.05, 0.6, 0.2, 0.15])
    rng = np.random.default_rng(0)
    order = sample_order(spec, probs, (2, 3, 4, 5), 1e-3, rng)
    assert order == [3, 4, 5, 2]


def test_sample_order_is_permutation():
    spec = tsp_specs(1, 5)[0]
    probs = np.array([0.0, 0.25, 0.25, 0.25, 0.25])
    for s in range(20):
        order = sample_order(spec, probs, (2, 3, 4, 5), 1.0, np.random.default_rng(s))
        assert sorted(order) == [2, 3, 4, 5]


def test_rbs_reproducible_and_monotone():
    ck = Checkpoint(init_weights(tsptw_config(head="actor-critic"), 1))
    for spec in tsp_specs(3, 8, 400):
        a = search_rbs(encode(spec), ppo_heuristic(ck), 20, 2, 5.0, seed=7)
        b = search_rbs(encode(spec), ppo_heuristic(ck), 20, 2, 5.0, seed=7)
        assert a.assignment == b.assignment and a.stats == b.stats
        assert all(x < y for x, y in zip(a.incumbents, a.incumbents[1:]))
        best = bellman_solve(spec)
        if a.proven_optimal and best.feasible:
            assert a.objective == best.value


def test_rbs_completes_with_large_limit():
    ck = Checkpoint(init_weights(tsptw_config(head="actor-critic"), 1))
    spec = tsp_specs(1, 6, 9)[0]
    r = search_rbs(encode(spec), ppo_heuristic(ck), 5, 10 ** 6, 1.0)
    best = bellman_solve(spec)
    assert r.proven_optimal and r.stats.restarts == 1
    assert r.objective == (best.value if best.feasible else None)


def test_rbs_argument_checks():
    spec = tsp_specs(1, 4)[0]
    for args in ((0, 1, 1.0), (1, 0, 1.0), (1, 1, 0.0)):
        with pytest.raises(ValueError):
            search_rbs(encode(spec), lexicographic(), *args)


@pytest.mark.parametrize("make", [lambda k: tsptw.dp_spec(tsptw.generate(7, seed=k)),
                                  lambda k: portfolio.dp_spec(portfolio.generate(8, seed=k))])
def test_trail_matches_fresh_propagation(make):
    """After every push/assign/propagate/pop the domains equal a fresh
    propagation of the same prefix."""
    for k in range(5):
        spec = make(k)
        model = encode(spec)
        s = SolverState(model)
        rng = np.random.default_rng(k)
        checked = 0

        def walk(prefix):
            nonlocal checked
            if not s.propagate():
                assert fixpoint_from_scratch(model, prefix) is None
                return
            assert s.snapshot() == fixpoint_from_scratch(model, prefix)
            checked += 1
            i = s.first_open()
            if i > model.n or checked > 60:
                return
            values = list(s.dom[i])
            # stages before i may have been fixed by propagation alone
            fixed = [s.dom[j][0] for j in range(1, i)]
            for v in rng.permutation(values)[:2]:
                s.push()
                s.assign(i, int(v))
                walk(fixed + [int(v)])
                s.pop()
                assert s.snapshot()[0][i] == tuple(values)

        walk([])
        assert checked > 1


def test_constraint_order_irrelevant():
    for spec in tsp_specs(5, 6, 50):
        a, b = encode(spec), encode(spec, "reversed")
        for prefix in ([], [2], [2, 3]):
            fa, fb = fixpoint_from_scratch(a, prefix), fixpoint_from_scratch(b, prefix)
            assert fa == fb
        assert search_bab(a, lexicographic()).objective == search_bab(b, lexicographic()).objective
    with pytest.raises(ValueError):
        encode(spec, "random")


def test_node_count_below_worst_case():
    for spec in tsp_specs(5, 6, 60):
        model = encode(spec)
        r = search_bab(model, lexicographic())
        assert r.stats.nodes <= worst_case_nodes(model)


def test_cache_transparent():
    ck = dqn_ck()
    for spec in tsp_specs(5, 8, 70):
        cache = Cache()
        on = search_bab(encode(spec), dqn_heuristic(ck), cache)
        off = search_bab(encode(spec), dqn_heuristic(ck), None)
        assert (on.objective, on.assignment, on.stats.nodes) == (off.objective, off.assignment, off.stats.nodes)
        assert on.stats.cache_hits + on.stats.cache_misses == off.stats.heuristic_calls
        assert on.stats.heuristic_calls == on.stats.cache_misses == len(cache)


def test_cache_port_key_is_spent_only():
    spec = portfolio.dp_spec(portfolio.generate(10, seed=3))
    ck = dqn_ck(port_config())
    on = search_bab(encode(spec), dqn_heuristic(ck), Cache())
    off = search_bab(encode(spec), dqn_heuristic(ck))
    assert on.objective == off.objective and on.stats.cache_hits > 0


def test_incumbents_strictly_increase():
    for spec in tsp_specs(5, 8, 80):
        r = search_bab(encode(spec), lexicographic())
        assert all(x < y for x, y in zip(r.incumbents, r.incumbents[1:]))
        if r.feasible:
            assert r.incumbents[-1] == r.objective


def test_timeout_not_proven():
    spec = tsptw.dp_spec(tsptw.generate(40, seed=1))
    r = search_bab(encode(spec), lexicographic(), timeout=0.001)
    assert r.timed_out and not r.proven_optimal
    r = search_ilds(encode(spec), lexicographic(), 1000, timeout=0.001)
    assert r.timed_out and not r.proven_optimal


def test_heuristic_rankings(tsp4):
    spec = tsptw.dp_spec(tsp4)
    state = spec.initial_state()
    assert lexicographic().rank(spec, lexicographic().scores(spec, state, 1), (4, 2, 3)) == [2, 3, 4]
    near = nearest()
    assert near.choose(spec, state, 1, (2, 3, 4)) == tsptw.nearest_value(tsp4, state, (2, 3, 4)) == 2
    # equal distances tie to the lowest value
    assert near.rank(spec, np.zeros(spec.action_count), (3, 2)) == [2, 3]
    with pytest.raises(ContractViolation):
        near.rank(spec, np.zeros(spec.action_count), ())


def test_masked_value_in_branch_raises(tsp4):
    class Broken(type(lexicographic())):
        pass

    spec = tsptw.dp_spec(tsp4)
    model = encode(spec)
    # a domain value the DP filter rejects must not be branched on
    model.domains[1] = model.domains[1] + (1,)
    model.constraints = [c for c in model.constraints if type(c).__name__ != "Validity"]
    for lst in model.dom_watchers + model.aux_watchers:
        lst[:] = [c for c in lst if type(c).__name__ != "Validity"]
    with pytest.raises(ContractViolation):
        search_bab(model, Broken())
