"""Command line front end: ``python -m hybridcp {generate,train,solve,bench}``.

Exit codes: 0 success, 2 configuration error, 3 timeout with an incumbent.
Outputs go under ``--out`` or, when omitted, ``$HYBRIDCP_OUT`` (default
``./runs``).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import solve as solve_mod
from .problems import get_problem, load_instance, problem_of
from .train.common import derived_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TIMEOUT = 3
OUT_ENV = "HYBRIDCP_OUT"


class CliError(Exception):
    pass


def default_out(sub: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "runs")) / sub


# -- generate ---------------------------------------------------------------


def cmd_generate(problem: str, n: int, count: int, seed: int, out_dir, mode: str = "continuous") -> Path:
    """Write ``count`` instances plus ``manifest.json``; returns the manifest path."""
    if count < 1 or n < 1:
        raise CliError("need n >= 1 and count >= 1")
    prob = get_problem(problem, mode)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out}: {exc}") from exc
    entries = []
    for i in range(count):
        s = derived_seed(seed, i)
        inst = prob.generate(n, s)
        iid = f"{problem}-n{n}-{i:04d}"
        (out / f"{iid}.json").write_text(inst.to_json() + "\n")
        entries.append({"id": iid, "seed": s, "file": f"{iid}.json"})
    manifest = {"problem": problem, "mode": prob.mode, "n": n, "count": count, "seed": seed, "instances": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


# -- train ------------------------------------------------------------------


def _parse_overrides(pairs, cls) -> dict:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise CliError(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        if key not in fields:
            raise CliError(f"unknown setting {key!r}; known: {', '.join(fields)}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def cmd_train(problem: str, sizes, algo: str, episodes: int, seed: int, out_dir, overrides=(),
              network=(), mode: str = "continuous", resume: bool = False):
    from .nn.networks import NetworkConfig
    from .train import DqnConfig, DqnTrainer, PpoConfig, PpoTrainer

    if algo not in ("dqn", "ppo"):
        raise CliError(f"unknown algorithm {algo!r}")
    cls, trainer_cls = (DqnConfig, DqnTrainer) if algo == "dqn" else (PpoConfig, PpoTrainer)
    try:
        config = cls(**_parse_overrides(overrides, cls))
        net = _parse_overrides(network, NetworkConfig)
        for k in ("encoder", "in_features", "head", "action_mode", "n_actions"):
            if k in net:
                raise CliError(f"network setting {k!r} is fixed by the problem")
        trainer = trainer_cls(get_problem(problem, mode), sizes, config, seed, out_dir, net)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    out = Path(out_dir)
    if resume:
        trainer.load_state()
    elif (out / "log.jsonl").exists():
        raise CliError(f"{out} already holds a training run; use --resume or a fresh directory")
    trainer.train(episodes)
    return trainer


# -- solve ------------------------------------------------------------------


def _run_config(args) -> solve_mod.RunConfig:
    params = {}
    for name in solve_mod.PARAM_OWNERS:
        val = getattr(args, name, None)
        if val is not None:
            params[name] = val
    return solve_mod.RunConfig(method=args.method, timeout=args.timeout, cache=not args.no_cache,
                               checkpoint=args.checkpoint, seed=args.seed, params=params)


def cmd_solve(cfg: solve_mod.RunConfig, instance_file, out_file=None) -> solve_mod.RunOutcome:
    try:
        instance = load_instance(instance_file)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read instance {instance_file}: {exc}") from exc
    try:
        outcome = solve_mod.run(cfg, instance, Path(instance_file).stem)
    except solve_mod.ConfigError as exc:
        raise CliError(str(exc)) from exc
    except FileNotFoundError as exc:
        raise CliError(f"missing checkpoint: {exc}") from exc
    if out_file is not None:
        _write_outcome(Path(out_file), outcome)
    return outcome


def _write_outcome(path: Path, outcome: solve_mod.RunOutcome) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(solve_mod.dumps_record(outcome.record) + "\n")
    timing = {"wall_time": outcome.wall_time, "load_time": outcome.load_time}
    path.with_suffix(".timing.json").write_text(json.dumps(timing) + "\n")


# -- bench ------------------------------------------------------------------


def aggregate(records: list[dict], timings: list[dict], methods, problem: str) -> list[dict]:
    """One row per method: Success / Opt. counts and mean time of completed
    searches (TSPTW) or mean best objective (PORT)."""
    rows = []
    for m in methods:
        recs = [(r, t) for r, t in zip(records, timings) if r["method"] == m]
        success = sum(1 for r, _ in recs if r["feasible"])
        opt = sum(1 for r, _ in recs if r["proven_optimal"] and r["feasible"])
        row = {"method": m, "instances": len(recs), "success": success, "opt": opt}
        done = [t["wall_time"] for r, t in recs if r["proven_optimal"]]
        row["time"] = sum(done) / len(done) if done else None
        objs = [r["objective"] for r, _ in recs if r["feasible"]]
        row["mean_objective"] = sum(objs) / len(objs) if objs else None
        rows.append(row)
    return rows


def render_table(rows: list[dict], problem: str) -> str:
    if problem == "tsptw":
        head = ("Method", "Success", "Opt.", "Time")
        body = [(r["method"], str(r["success"]), str(r["opt"]),
                 "t.o." if r["time"] is None else f"{r['time']:.3f}") for r in rows]
    else:
        head = ("Method", "Sol.", "Opt.")
        body = [(r["method"], "-" if r["mean_objective"] is None else f"{r['mean_objective']:.2f}",
                 str(r["opt"])) for r in rows]
    widths = [max(len(x[k]) for x in [head, *body]) for k in range(len(head))]
    lines = ["  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(line, widths)))
             for line in [head, *body]]
    return "\n".join(lines) + "\n"


def cmd_bench(methods, instance_dir, out_dir, timeout: float = 3600.0, dqn_checkpoint=None,
              ppo_checkpoint=None, cache: bool = True, seed: int = 0, params=None) -> list[dict]:
    inst_dir = Path(instance_dir)
    files = sorted(p for p in inst_dir.glob("*.json") if p.name != "manifest.json")
    if not files:
        raise CliError(f"no instances in {inst_dir}")
    out = Path(out_dir)
    records, timings = [], []
    problem = problem_of(load_instance(files[0])).name
    configs = []
    for m in methods:
        ck = dqn_checkpoint if m in solve_mod.DQN_METHODS else ppo_checkpoint if m in solve_mod.PPO_METHODS else None
        mparams = {k: v for k, v in (params or {}).items() if m in solve_mod.PARAM_OWNERS.get(k, ())}
        cfg = solve_mod.RunConfig(m, timeout, cache, ck, seed, mparams)
        try:
            cfg.validate()
        except solve_mod.ConfigError as exc:
            raise CliError(str(exc)) from exc
        configs.append(cfg)
    for m, cfg in zip(methods, configs):
        for f in files:
            outcome = cmd_solve(cfg, f, out / "results" / m / f.name)
            records.append(outcome.record)
            timings.append({"wall_time": outcome.wall_time})
    rows = aggregate(records, timings, methods, problem)
    # the report keeps only deterministic fields; timings go to a sidecar like the records
    stable = [{k: v for k, v in r.items() if k != "time"} for r in rows]
    (out / "report.json").write_text(json.dumps({"problem": problem, "rows": stable}, indent=1, sort_keys=True) + "\n")
    (out / "report.timing.json").write_text(json.dumps({r["method"]: r["time"] for r in rows}, sort_keys=True) + "\n")
    (out / "report.txt").write_text(render_table(rows, problem))
    return rows


def load_results(out_dir) -> tuple[list[dict], list[dict]]:
    """Raw records and timings written by a bench run, in method/instance order."""
    recs, times = [], []
    for p in sorted(Path(out_dir, "results").glob("*/*.json")):
        if p.name.endswith(".timing.json"):
            continue
        recs.append(json.loads(p.read_text()))
        times.append(json.loads(p.with_suffix(".timing.json").read_text()))
    return recs, times


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridcp", description="DP models, learned heuristics and CP search.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write random instances and a manifest")
    g.add_argument("--problem", choices=("tsptw", "port"), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mode", choices=("continuous", "discrete"), default="continuous")
    g.add_argument("--out")

    t = sub.add_parser("train", help="train a DQN or PPO model")
    t.add_argument("--problem", choices=("tsptw", "port"), required=True)
    t.add_argument("--n", type=int, nargs="+", required=True, help="instance sizes to sample from")
    t.add_argument("--algo", choices=("dqn", "ppo"), required=True)
    t.add_argument("--episodes", type=int, default=1000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--mode", choices=("continuous", "discrete"), default="continuous")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="trainer setting")
    t.add_argument("--net", action="append", default=[], metavar="KEY=VALUE", help="network setting")
    t.add_argument("--resume", action="store_true")
    t.add_argument("--out")

    s = sub.add_parser("solve", help="solve one instance file")
    s.add_argument("instance")
    _solver_args(s)
    s.add_argument("--method", choices=solve_mod.METHODS, required=True)
    s.add_argument("--checkpoint")
    s.add_argument("--out", help="result JSON path")

    b = sub.add_parser("bench", help="run methods over an instance directory")
    b.add_argument("instances")
    _solver_args(b)
    b.add_argument("--methods", required=True, help="comma separated")
    b.add_argument("--dqn-checkpoint")
    b.add_argument("--ppo-checkpoint")
    b.add_argument("--out")
    return ap


def _solver_args(p):
    p.add_argument("--timeout", type=float, default=3600.0)
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--discrepancies", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--luby-scale", dest="luby_scale", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--width", type=int)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            out = args.out or default_out(f"instances/{args.problem}-n{args.n}")
            path = cmd_generate(args.problem, args.n, args.count, args.seed, out, args.mode)
            print(f"wrote {args.count} instances and {path}")
        elif args.command == "train":
            out = args.out or default_out(f"train/{args.problem}-{args.algo}")
            tr = cmd_train(args.problem, args.n, args.algo, args.episodes, args.seed, out,
                           args.set, args.net, args.mode, args.resume)
            best = tr.selected
            print(f"trained {tr.episode} episodes; selected episode {best.episode} "
                  f"(validation {best.score:.4f}, feasible {best.feasible_rate:.2f}) -> {Path(out) / 'best.json'}")
        elif args.command == "solve":
            cfg = _run_config(args)
            outcome = cmd_solve(cfg, args.instance, args.out)
            print(solve_mod.dumps_record(outcome.record))
            print(f"wall time {outcome.wall_time:.3f}s (checkpoint load {outcome.load_time:.3f}s)", file=sys.stderr)
            if outcome.exit_status == "timeout-with-incumbent":
                return EXIT_TIMEOUT
        elif args.command == "bench":
            methods = [m.strip() for m in args.methods.split(",") if m.strip()]
            params = {k: getattr(args, k) for k in solve_mod.PARAM_OWNERS if getattr(args, k) is not None}
            out = args.out or default_out("bench")
            cmd_bench(methods, args.instances, out, args.timeout, args.dqn_checkpoint,
                             args.ppo_checkpoint, not args.no_cache, args.seed, params)
            print((Path(out) / "report.txt").read_text(), end="")
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
