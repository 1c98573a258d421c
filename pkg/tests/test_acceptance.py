"""Acceptance criteria, one test each. A summary line per criterion is
printed at the end of the pytest run."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from hybridcp import cli, portfolio, tsptw
from hybridcp import solve as solve_mod
from hybridcp.dp import bellman_solve
from hybridcp.env import ShapingConfig, random_policy, rollout
from hybridcp.nn import (Checkpoint, encode_graph, encode_set, init_weights, no_grad, policy_forward, pool,
                         port_config, q_forward, tsptw_config)
from hybridcp.problems import get_problem
from hybridcp.search import (Cache, dqn_heuristic, encode, lexicographic, luby, nearest, ppo_heuristic,
                             search_bab, search_ilds, search_rbs)
from hybridcp.search.model import SolverState
from hybridcp.train import (DqnConfig, PpoConfig, beam_decode, clip_factor, evaluate_random, greedy_decode,
                            train_dqn, train_ppo)
from hybridcp.train import common as train_common
from hybridcp.train import decode as train_decode
from hybridcp.train.common import derived_seed

from conftest import brute_force_port, finite_difference_check

def non_binding(spec):
    return spec.n_stages * (spec.action_count - 1)


def test_criterion_01_tsptw_oracle_equivalence(report):
    t0 = time.monotonic()
    dqn = Checkpoint(init_weights(tsptw_config(), 0))
    bad = []
    runs = 0
    for k in range(50):
        n = 4 + k % 5
        spec = tsptw.dp_spec(tsptw.generate(n, seed=derived_seed(1, k)))
        best = bellman_solve(spec)
        want = best.value if best.feasible else None
        for h in (lexicographic(), nearest(), dqn_heuristic(dqn)):
            for r in (search_bab(encode(spec), h), search_ilds(encode(spec), h, non_binding(spec))):
                runs += 1
                if not r.proven_optimal or r.objective != want:
                    bad.append((k, h.name, r.objective, want))
    dt = time.monotonic() - t0
    report(1, "TSPTW oracle equivalence", not bad and dt < 300,
           f"{runs} searches, {len(bad)} mismatches, {dt:.1f}s")


def test_criterion_02_port_oracle_equivalence(report):
    t0 = time.monotonic()
    dqn = Checkpoint(init_weights(port_config(), 0))
    bad = []
    runs = 0
    for k in range(50):
        n = 8 + k % 8
        for mode in ("continuous", "discrete"):
            inst = portfolio.generate(n, seed=derived_seed(2, k), mode=mode)
            want = brute_force_port(inst)
            spec = portfolio.dp_spec(inst)
            for r in (search_bab(encode(spec), lexicographic(), Cache()),
                      search_ilds(encode(spec), dqn_heuristic(dqn), non_binding(spec), Cache())):
                runs += 1
                if mode == "discrete":
                    ok = r.objective == want
                else:
                    ok = abs(r.objective - want) <= 1e-9 * max(1.0, abs(want))
                if not (ok and r.proven_optimal):
                    bad.append((k, mode, r.objective, want))
    dt = time.monotonic() - t0
    report(2, "PORT oracle equivalence", not bad and dt < 600,
           f"{runs} searches vs 2^n enumeration, {len(bad)} mismatches, {dt:.1f}s")


def test_criterion_03_cp_nearest_twenty_cities(report):
    proven, worst = 0, 0.0
    cfg = solve_mod.RunConfig("cp-nearest", timeout=60.0)
    for k in range(100):
        inst = tsptw.generate(20, seed=derived_seed(3, k))
        out = solve_mod.run(cfg, inst)
        proven += out.record["proven_optimal"] and out.record["feasible"]
        worst = max(worst, out.wall_time)
    report(3, "cp-nearest on 20 cities", proven >= 90,
           f"{proven}/100 proven optimal, slowest {worst:.2f}s (limit 60s)")


def test_criterion_04_luby(report):
    got = [luby(i) for i in range(1, 16)]
    want = [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]
    report(4, "Luby sequence", got == want, f"luby(1..15) = {got}")


def test_criterion_05_shaping_order(report):
    cfg = ShapingConfig()
    violations = 0
    done = early = 0
    for k in range(10):
        spec = tsptw.dp_spec(tsptw.generate(20, seed=derived_seed(5, k)))
        traces = [rollout(random_policy(derived_seed(5, k, j)), spec, cfg) for j in range(200)]
        full = [t for t in traces if t.feasible]
        cut = [t for t in traces if not t.feasible]
        done += len(full)
        early += len(cut)
        if full and cut and min(t.shaped_return for t in full) <= max(t.shaped_return for t in cut):
            violations += 1
        for a in full:
            for b in full:
                if (a.total_return < b.total_return) != (a.shaped_return < b.shaped_return):
                    violations += 1
    report(5, "shaped reward ordering", violations == 0 and done > 0 and early > 0,
           f"{done} completed, {early} early-terminated rollouts, {violations} violations")


def _fd_nets():
    rng = np.random.default_rng(6)
    small = dict(layers=2, embed_dim=4, hidden_layers=1, hidden_dim=4)
    for head in ("q", "actor-critic"):
        mask = rng.random((2, 5)) < 0.7
        mask[:, 0] = True
        nodes, edges = rng.random((2, 5, 6)), rng.random((2, 5, 5, 1))
        yield ("graph", head, init_weights(tsptw_config(**small, head=head), 1),
               lambda w, n=nodes, e=edges: encode_graph(n, e, w), mask, None)
        items = rng.random((2, 5, 9))
        yield ("set", head, init_weights(port_config(**small, head=head), 1),
               lambda w, x=items: encode_set(x, w), np.array([[True, True], [True, False]]), np.array([1, 3]))


def test_criterion_06_gradients(report):
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    worst, frac, sizes = 0.0, 1.0, []
    for enc_name, head, w, enc, mask, focus in _fd_nets():
        c = rng.normal(size=mask.shape)

        def loss(w):
            if head == "q":
                return (q_forward(enc(w), mask, w, focus=focus)[0] * c).sum()
            logp, _, v = policy_forward(enc(w), mask, w, 1.0, focus=focus)
            return (logp * (c * mask)).sum() + (v * v).sum()

        rel = finite_difference_check(loss, w)
        sizes.append(w.count)
        worst = max(worst, float(rel.max()))
        frac = min(frac, float((rel < 1e-4).mean()))
    dt = time.monotonic() - t0
    ok = frac >= 0.99 and worst < 1e-3 and max(sizes) <= 500 and dt < 60
    report(6, "gradient correctness", ok,
           f"4 nets of {sizes} params, min share within 1e-4 = {frac:.3f}, max rel err {worst:.1e}, {dt:.1f}s")


def test_criterion_07_permutation_invariance(report):
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(100):
        n = int(rng.integers(3, 9))
        perm = rng.permutation(n)
        mask = rng.random((1, n)) < 0.6
        mask[0, int(rng.integers(n))] = True
        w = init_weights(tsptw_config(layers=2, embed_dim=8, hidden_dim=8), k)
        nodes, edges = rng.random((1, n, 6)), rng.random((1, n, n, 1))
        with no_grad():
            e1 = encode_graph(nodes, edges, w)
            e2 = encode_graph(nodes[:, perm], edges[:, perm][:, :, perm], w)
            q1 = q_forward(e1, mask, w)[0].data[0]
            q2 = q_forward(e2, mask[:, perm], w)[0].data[0]
        worst = max(worst, np.abs(pool(e1).data - pool(e2).data).max(), np.abs(q1[perm] - q2).max())

        w = init_weights(port_config(layers=2, embed_dim=8, hidden_dim=8), k)
        items = rng.random((1, n, 9))
        focus = int(rng.integers(n))
        pmask = np.ones((1, 2), dtype=bool)
        with no_grad():
            e1 = encode_set(items, w)
            e2 = encode_set(items[:, perm], w)
            q1 = q_forward(e1, pmask, w, focus=[focus])[0].data
            q2 = q_forward(e2, pmask, w, focus=[int(np.flatnonzero(perm == focus)[0])])[0].data
        worst = max(worst, np.abs(pool(e1).data - pool(e2).data).max(), np.abs(q1 - q2).max())
    report(7, "permutation invariance", worst <= 1e-6, f"100 draws per encoder, max deviation {worst:.1e}")


def test_criterion_08_masking(report, monkeypatch, tmp_path):
    """Independent checks wrap every environment step and every search
    assignment; they count choices outside the feasible set."""
    counts = {"checked": 0, "violations": 0}
    real_step = train_common.step

    def checked_step(state, action, cfg):
        counts["checked"] += 1
        if action not in state.spec.filter_controls(state.dp_state, state.stage, state.spec.control_domain(state.stage)):
            counts["violations"] += 1
        return real_step(state, action, cfg)

    real_assign = SolverState.assign

    def checked_assign(self, i, value):
        counts["checked"] += 1
        src = self.aux[i]
        if src is None or value not in self.spec.valid_values(src[0], i, self.model.domains[i]):
            counts["violations"] += 1
        return real_assign(self, i, value)

    monkeypatch.setattr(train_common, "step", checked_step)
    monkeypatch.setattr(train_decode, "step", checked_step)
    monkeypatch.setattr(SolverState, "assign", checked_assign)

    tiny = dict(layers=1, embed_dim=8, hidden_layers=1, hidden_dim=8)
    dqn_cfg = DqnConfig(batch_size=8, lr=1e-3, validation_interval=20, validation_size=10)
    ppo_cfg = PpoConfig(batch_size=16, lr=1e-3, update_timestep=60, validation_interval=20, validation_size=10)
    cks = {}
    for prob in ("tsptw", "port"):
        cks[prob, "q"] = train_dqn(prob, [6, 8], dqn_cfg, seed=8, episodes=60, network=tiny).best_checkpoint
        cks[prob, "ac"] = train_ppo(prob, [6, 8], ppo_cfg, seed=8, episodes=60, network=tiny).best_checkpoint
    for k in range(10):
        for prob in ("tsptw", "port"):
            problem = get_problem(prob)
            spec = problem.spec(problem.generate(8, derived_seed(8, k)))
            greedy_decode(cks[prob, "q"], spec)
            beam_decode(cks[prob, "ac"], spec, 8)
            search_bab(encode(spec), dqn_heuristic(cks[prob, "q"]), Cache(), timeout=5)
            search_ilds(encode(spec), dqn_heuristic(cks[prob, "q"]), 3, Cache(), timeout=5)
            search_rbs(encode(spec), ppo_heuristic(cks[prob, "ac"]), 10, 4, 5.0, k, Cache(), timeout=5)
    report(8, "masking soundness", counts["violations"] == 0 and counts["checked"] > 0,
           f"{counts['checked']} checked choices across training, decoding and search, "
           f"{counts['violations']} violations")


def test_criterion_09_cache_transparency(report):
    mismatches, hits = 0, []
    dq_t = Checkpoint(init_weights(tsptw_config(), 9))
    dq_p = Checkpoint(init_weights(port_config(), 9))
    for k in range(20):
        if k % 2:
            spec, ck = portfolio.dp_spec(portfolio.generate(12, seed=derived_seed(9, k))), dq_p
        else:
            spec, ck = tsptw.dp_spec(tsptw.generate(8, seed=derived_seed(9, k))), dq_t
        on = search_bab(encode(spec), dqn_heuristic(ck), Cache())
        off = search_bab(encode(spec), dqn_heuristic(ck), None)
        if on.incumbents != off.incumbents or on.stats.nodes != off.stats.nodes or on.assignment != off.assignment:
            mismatches += 1
        hits.append(on.stats.cache_hits)
    report(9, "cache transparency", mismatches == 0 and max(hits) > 0,
           f"20 instances, {mismatches} mismatches, cache hits on {sum(h > 0 for h in hits)} instances "
           f"(max {max(hits)})")


def test_criterion_10_learning_signal(report):
    t0 = time.monotonic()
    net = dict(layers=2, embed_dim=16, hidden_layers=1, hidden_dim=32)
    cfg = DqnConfig(lr=1e-3, validation_interval=100, validation_size=100)
    tr = train_dqn("tsptw", [10], cfg, seed=0, episodes=2000, network=net)
    sel = tr.selected
    early = float(np.mean([r["shaped_return"] for r in tr.log[:100]]))
    rnd = evaluate_random(get_problem("tsptw"), tr.val_specs, seed=10)
    dt = time.monotonic() - t0
    ok = sel.feasible_rate >= rnd.feasible_rate and sel.score > early and dt < 3600
    report(10, "DQN learning signal", ok,
           f"selected episode {sel.episode}: feasibility {sel.feasible_rate:.2f} vs random {rnd.feasible_rate:.2f}, "
           f"validation reward {sel.score:.3f} vs episodes 1-100 average {early:.3f}, {dt:.0f}s")


def test_criterion_11_ppo_machinery(report):
    clip_ok = clip_factor(1.5, 1.0, 0.1) == pytest.approx(1.1, abs=1e-15) and \
        clip_factor(0.5, -1.0, 0.1) == pytest.approx(0.9, abs=1e-15)
    same, monotone = 0, 0
    for k in range(20):
        if k < 10:
            ck = Checkpoint(init_weights(tsptw_config(head="actor-critic"), k))
            spec = tsptw.dp_spec(tsptw.generate(6 + k % 5, seed=derived_seed(11, k)))
        else:
            ck = Checkpoint(init_weights(port_config(head="actor-critic"), k))
            spec = portfolio.dp_spec(portfolio.generate(8 + k % 5, seed=derived_seed(11, k)))
        g, b1 = greedy_decode(ck, spec), beam_decode(ck, spec, 1)
        same += g.objective == b1.objective and (not g.feasible or g.assignment == b1.assignment)
        objs = [beam_decode(ck, spec, w).objective for w in (1, 4, 16)]
        vals = [-math.inf if o is None else o for o in objs]
        monotone += vals[0] <= vals[1] <= vals[2]
    report(11, "PPO machinery", clip_ok and same == 20 and monotone == 20,
           f"clip cases {'exact' if clip_ok else 'wrong'}, beam width 1 = greedy on {same}/20, "
           f"monotone in width on {monotone}/20")


def _snapshot(root):
    """File contents keyed by path; wall-clock sidecars and the printed table
    (which shows times) are left out."""
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and not p.name.endswith(".timing.json") and p.name != "report.txt"}


def test_criterion_12_determinism(report, tmp_path, monkeypatch):
    def campaign(root):
        # identical relative paths, so recorded checkpoint paths match too
        root.mkdir()
        monkeypatch.chdir(root)
        root = Path(".")
        inst = root / "inst"
        cli.main(["generate", "--problem", "tsptw", "--n", "7", "--count", "3", "--seed", "12", "--out", str(inst)])
        cli.main(["generate", "--problem", "port", "--n", "9", "--count", "3", "--seed", "12", "--mode", "discrete",
                  "--out", str(root / "port")])
        tiny = ["--net", "layers=1", "--net", "embed_dim=8", "--net", "hidden_dim=8",
                "--set", "validation_interval=10", "--set", "validation_size=5"]
        cli.main(["train", "--problem", "tsptw", "--n", "6", "7", "--algo", "dqn", "--episodes", "30",
                  "--seed", "4", *tiny, "--set", "batch_size=8", "--out", str(root / "dqn")])
        cli.main(["train", "--problem", "tsptw", "--n", "6", "7", "--algo", "ppo", "--episodes", "30",
                  "--seed", "4", *tiny, "--set", "update_timestep=50", "--out", str(root / "ppo")])
        cli.main(["bench", str(inst), "--methods", "bab-dqn,ilds-dqn,rbs-ppo,cp-nearest,cp-lex,dqn-greedy,ppo-beam",
                  "--dqn-checkpoint", str(root / "dqn" / "best.json"), "--ppo-checkpoint",
                  str(root / "ppo" / "best.json"), "--restarts", "20", "--luby-scale", "4", "--seed", "3",
                  "--out", str(root / "bench")])
        cli.main(["bench", str(root / "port"), "--methods", "cp-lex,oracle", "--out", str(root / "pbench")])
        return _snapshot(Path.cwd())

    a, b = campaign(tmp_path / "a"), campaign(tmp_path / "b")
    differ = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    kinds = {k.split("/")[0] for k in a}
    ok = not differ and {"inst", "port", "dqn", "ppo", "bench", "pbench"} <= kinds
    report(12, "determinism", ok, f"{len(a)} files compared byte for byte, {len(differ)} differ"
           + (f" ({differ[:3]})" if differ else ""))
