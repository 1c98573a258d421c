"""One entry point per solving method, returning uniform result records.

A record is deterministic for fixed inputs: timings are returned beside it,
never inside it, so repeated runs give byte-identical record files.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

from .dp import bellman_solve
from .nn import Checkpoint
from .problems import problem_of
from .search import (Cache, encode, lexicographic, nearest, ppo_heuristic, dqn_heuristic,
                     search_bab, search_ilds, search_rbs)
from .train.decode import beam_decode, greedy_decode

METHODS = ("bab-dqn", "ilds-dqn", "rbs-ppo", "cp-nearest", "cp-lex", "dqn-greedy", "ppo-beam", "oracle")
DQN_METHODS = ("bab-dqn", "ilds-dqn", "dqn-greedy")
PPO_METHODS = ("rbs-ppo", "ppo-beam")
# method-specific parameters and the methods accepting them
PARAM_OWNERS = {
    "discrepancies": ("ilds-dqn", "cp-nearest"),
    "restarts": ("rbs-ppo",),
    "luby_scale": ("rbs-ppo",),
    "tau": ("rbs-ppo",),
    "width": ("ppo-beam",),
}


class ConfigError(ValueError):
    """Invalid combination of run settings."""


@dataclass
class RunConfig:
    method: str
    timeout: float = 3600.0
    cache: bool = True
    checkpoint: str | None = None
    seed: int = 0
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        for name in self.params:
            owners = PARAM_OWNERS.get(name)
            if owners is None:
                raise ConfigError(f"unknown method parameter {name!r}")
            if self.method not in owners:
                raise ConfigError(f"parameter {name!r} only applies to {', '.join(owners)}")
        if self.method in DQN_METHODS + PPO_METHODS and not self.checkpoint:
            raise ConfigError(f"method {self.method} needs a checkpoint")
        if not self.timeout >= 0:
            raise ConfigError("timeout must be >= 0")
        p = self.params
        if p.get("discrepancies", 0) < 0 or p.get("restarts", 1) < 1 or p.get("luby_scale", 1) < 1:
            raise ConfigError("need discrepancies >= 0, restarts >= 1 and luby_scale >= 1")
        if p.get("tau", 1.0) <= 0 or p.get("width", 1) < 1:
            raise ConfigError("need tau > 0 and width >= 1")

    def to_dict(self) -> dict:
        return {"method": self.method, "timeout": self.timeout, "cache": self.cache,
                "checkpoint": self.checkpoint, "seed": self.seed, "params": dict(sorted(self.params.items()))}


@dataclass
class RunOutcome:
    record: dict
    wall_time: float  # search time, checkpoint loading excluded
    load_time: float
    timed_out: bool

    @property
    def exit_status(self) -> str:
        if self.timed_out and self.record["feasible"]:
            return "timeout-with-incumbent"
        return "ok"


def _load(cfg: RunConfig, expect_head: str) -> Checkpoint:
    ck = Checkpoint.load(cfg.checkpoint)
    if ck.config.head != expect_head:
        raise ConfigError(f"method {cfg.method} needs a {expect_head} checkpoint, got {ck.config.head}")
    return ck


def _clean(x):
    if x is None or (isinstance(x, float) and math.isinf(x)):
        return None
    return x


def run(cfg: RunConfig, instance, instance_id: str | None = None) -> RunOutcome:
    """Solve ``instance`` with the configured method."""
    cfg.validate()
    problem = problem_of(instance)
    if cfg.method == "cp-nearest" and problem.name != "tsptw":
        raise ConfigError("cp-nearest needs travel distances (tsptw only)")
    spec = problem.spec(instance)
    p = cfg.params
    t0 = time.monotonic()
    ck = None
    if cfg.method in DQN_METHODS:
        ck = _load(cfg, "q")
    elif cfg.method in PPO_METHODS:
        ck = _load(cfg, "actor-critic")
    load_time = time.monotonic() - t0
    record = {"instance": instance_id, "method": cfg.method, "config": cfg.to_dict()}
    t1 = time.monotonic()
    timed_out = False
    complete_i = spec.n_stages * max(spec.action_count - 1, 1)
    if cfg.method == "oracle":
        res = bellman_solve(spec)
        feasible = res.feasible
        record.update(objective=_clean(res.value) if feasible else None, feasible=feasible,
                      proven_optimal=True, assignment=[v for _, v in res.assignment] if feasible else None,
                      nodes=0, failures=0, cache_hits=0, cache_misses=0)
    elif cfg.method in ("dqn-greedy", "ppo-beam"):
        if cfg.method == "dqn-greedy":
            res = greedy_decode(ck, spec, problem.shaping)
        else:
            res = beam_decode(ck, spec, p.get("width", 64), problem.shaping)
        record.update(objective=res.objective, feasible=res.feasible, proven_optimal=False,
                      assignment=list(res.assignment) if res.feasible else None,
                      nodes=0, failures=0, cache_hits=0, cache_misses=0)
    else:
        model = encode(spec)
        cache = Cache() if cfg.cache else None
        if cfg.method == "bab-dqn":
            r = search_bab(model, dqn_heuristic(ck), cache, cfg.timeout)
        elif cfg.method == "ilds-dqn":
            r = search_ilds(model, dqn_heuristic(ck), p.get("discrepancies", complete_i), cache, cfg.timeout)
        elif cfg.method == "cp-nearest":
            r = search_ilds(model, nearest(), p.get("discrepancies", complete_i), cache, cfg.timeout)
        elif cfg.method == "cp-lex":
            r = search_bab(model, lexicographic(), cache, cfg.timeout)
        else:
            r = search_rbs(model, ppo_heuristic(ck), p.get("restarts", 1000), p.get("luby_scale", 128),
                           p.get("tau", 20.0), cfg.seed, cache, cfg.timeout)
        timed_out = r.timed_out
        record.update(objective=r.objective, feasible=r.feasible, proven_optimal=r.proven_optimal,
                      assignment=list(r.assignment) if r.assignment is not None else None,
                      nodes=r.stats.nodes, failures=r.stats.failures,
                      cache_hits=r.stats.cache_hits, cache_misses=r.stats.cache_misses)
        record["timed_out"] = timed_out
    wall = time.monotonic() - t1
    record.setdefault("timed_out", False)
    return RunOutcome(record, wall, load_time, timed_out)


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, indent=1)
