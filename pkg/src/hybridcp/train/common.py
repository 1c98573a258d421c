"""Shared episode driver, validation and checkpoint bookkeeping."""
from __future__ import annotations

import json
import pickle
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..dp import ContractViolation
from ..env import random_policy, reset, rollout, step
from ..nn import Adam, Checkpoint, WeightVector
from ..problems import Problem
from .decode import greedy_decode_batch

STATE_FILE = "trainer_state.pkl"


def derived_seed(*parts: int) -> int:
    """A 31-bit integer seed derived from a tuple of integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0] >> 1)


@dataclass
class Episode:
    observations: list
    actions: list[int]  # action indices
    shaped: list[float]
    raw_return: float
    feasible: bool
    extra: list = field(default_factory=list)  # per-step data of the trainer

    @property
    def shaped_return(self) -> float:
        return float(sum(self.shaped))


def play(problem: Problem, spec, choose) -> Episode:
    """One episode; ``choose(obs) -> (action_index, extra)`` picks actions."""
    state = reset(spec)
    ep = Episode([], [], [], 0.0, False)
    raw = 0.0
    while not state.terminal:
        obs = spec.observe(state.dp_state, state.stage)
        a, extra = choose(obs)
        if not obs.mask[a]:
            raise ContractViolation(f"training picked masked action {a} at stage {state.stage}")
        state, r_shaped, _, r_raw = step(state, spec.index_value(a), problem.shaping)
        ep.observations.append(obs)
        ep.actions.append(a)
        ep.shaped.append(r_shaped)
        ep.extra.append(extra)
        raw += r_raw
    ep.feasible = state.stage > spec.n_stages
    ep.raw_return = raw
    return ep


@dataclass
class Validation:
    episode: int
    score: float  # mean shaped return of the greedy policy
    feasible_rate: float
    mean_objective: float | None  # over feasible episodes


def validation_specs(problem: Problem, sizes, count: int, seed: int):
    out = []
    for j in range(count):
        n = sizes[j % len(sizes)]
        out.append(problem.spec(problem.generate(n, derived_seed(seed, j))))
    return out


def evaluate_greedy(w: WeightVector, problem: Problem, specs, episode: int) -> Validation:
    res = greedy_decode_batch(w, specs, problem.shaping)
    feas = [r.objective for r in res if r.feasible]
    return Validation(
        episode=episode,
        score=float(np.mean([r.shaped_return for r in res])),
        feasible_rate=len(feas) / len(res),
        mean_objective=float(np.mean(feas)) if feas else None,
    )


def evaluate_random(problem: Problem, specs, seed: int = 0) -> Validation:
    """Same statistics for a uniformly random feasible policy."""
    traces = [rollout(random_policy(derived_seed(seed, k)), spec, problem.shaping) for k, spec in enumerate(specs)]
    feas = [t.total_return for t in traces if t.feasible]
    return Validation(
        episode=-1,
        score=float(np.mean([t.shaped_return for t in traces])),
        feasible_rate=len(feas) / len(traces),
        mean_objective=float(np.mean(feas)) if feas else None,
    )


def select_best(history: list[Validation]) -> Validation:
    """Highest validation score; ties go to the earliest."""
    if not history:
        raise ValueError("no validation records")
    best = history[0]
    for v in history[1:]:
        if v.score > best.score:
            best = v
    return best


class Trainer:
    """Episode loop with periodic validation, checkpointing and resume.

    Randomness of episode ``e`` comes only from ``(seed, e)``, so a run
    resumed from a saved state continues exactly like an uninterrupted one.
    """

    algo = "base"

    def __init__(self, problem: Problem, sizes, config, seed: int = 0, out_dir=None,
                 network: dict | None = None):
        self.problem = problem
        self.sizes = list(sizes)
        if not self.sizes or min(self.sizes) < 2:
            raise ValueError("training sizes must be >= 2")
        self.config = config
        self.seed = seed
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.network = dict(network or {})
        self.weights = self._init_weights()
        self.optimizer = Adam(self.weights, lr=config.lr, clip_norm=config.clip_norm)
        self.episode = 0
        self.history: list[Validation] = []
        self.log: list[dict] = []
        self.checkpoints: dict[int, str] = {}  # episode -> digest
        self.best_checkpoint: Checkpoint | None = None
        self._val_specs = None

    # -- hooks -----------------------------------------------------------

    def _init_weights(self) -> WeightVector:
        raise NotImplementedError

    def _run_episode(self, spec, rng) -> Episode:
        raise NotImplementedError

    def _after_episode(self, ep: Episode, rng) -> None:
        pass

    def _state_extra(self) -> dict:
        return {}

    def _load_extra(self, extra: dict) -> None:
        pass

    # -- loop ------------------------------------------------------------

    @property
    def val_specs(self):
        if self._val_specs is None:
            c = self.config
            self._val_specs = validation_specs(self.problem, self.sizes, c.validation_size, c.validation_seed)
        return self._val_specs

    def checkpoint(self, validation: Validation | None = None) -> Checkpoint:
        meta = {
            "algo": self.algo,
            "problem": self.problem.name,
            "mode": self.problem.mode,
            "sizes": self.sizes,
            "episode": self.episode,
            "train_config": asdict(self.config),
        }
        if validation is not None:
            meta["validation"] = asdict(validation)
        return Checkpoint(self.weights.copy(), self.seed, meta, self.optimizer.state_dict())

    def validate(self) -> Validation:
        v = evaluate_greedy(self.weights, self.problem, self.val_specs, self.episode)
        self.history.append(v)
        ck = self.checkpoint(v)
        self.checkpoints[self.episode] = ck.digest()
        if select_best(self.history) is v:
            self.best_checkpoint = ck
        if self.out_dir is not None:
            ck.save(self.out_dir / "checkpoints" / f"ep{self.episode:06d}.json")
            with open(self.out_dir / "validation.jsonl", "a") as fh:
                fh.write(json.dumps(asdict(v)) + "\n")
            self.best_checkpoint.save(self.out_dir / "best.json")
            best = select_best(self.history)
            (self.out_dir / "selection.json").write_text(json.dumps(
                {"episode": best.episode, "score": best.score,
                 "checkpoint": f"checkpoints/ep{best.episode:06d}.json"}, sort_keys=True))
            self.save_state()
        return v

    def train(self, episodes: int) -> "Trainer":
        """Run until ``episodes`` episodes in total have been played."""
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        if self.episode == 0 and not self.history:
            self.validate()
        interval = self.config.validation_interval
        while self.episode < episodes:
            self.episode += 1
            rng = np.random.default_rng([self.seed, self.episode])
            n = self.sizes[int(rng.integers(len(self.sizes)))]
            instance = self.problem.generate(n, int(rng.integers(2 ** 31)))
            spec = self.problem.spec(instance)
            ep = self._run_episode(spec, rng)
            self._after_episode(ep, rng)
            rec = {"episode": self.episode, "n": n, "raw_return": ep.raw_return,
                   "shaped_return": ep.shaped_return, "feasible": ep.feasible}
            self.log.append(rec)
            if self.out_dir is not None:
                with open(self.out_dir / "log.jsonl", "a") as fh:
                    fh.write(json.dumps(rec) + "\n")
            if self.episode % interval == 0:
                self.validate()
        return self

    @property
    def selected(self) -> Validation:
        return select_best(self.history)

    # -- persistence -----------------------------------------------------

    def save_state(self, path=None) -> Path:
        path = Path(path) if path is not None else self.out_dir / STATE_FILE
        blob = {
            "algo": self.algo,
            "episode": self.episode,
            "weights": self.weights.arrays(),
            "optimizer": self.optimizer.state_dict(),
            "history": self.history,
            "log": self.log,
            "checkpoints": self.checkpoints,
            "best": None if self.best_checkpoint is None else self.best_checkpoint.to_dict(),
            "extra": self._state_extra(),
        }
        with open(path, "wb") as fh:
            pickle.dump(blob, fh)
        return path

    def load_state(self, path=None) -> "Trainer":
        path = Path(path) if path is not None else self.out_dir / STATE_FILE
        with open(path, "rb") as fh:
            blob = pickle.load(fh)
        if blob["algo"] != self.algo:
            raise ValueError(f"state file belongs to a {blob['algo']} trainer")
        for k, arr in blob["weights"].items():
            self.weights.params[k].data = arr.copy()
        self.optimizer.load_state_dict(blob["optimizer"])
        self.episode = blob["episode"]
        self.history = blob["history"]
        self.log = blob["log"]
        self.checkpoints = blob["checkpoints"]
        self.best_checkpoint = None if blob["best"] is None else Checkpoint.from_dict(blob["best"])
        self._load_extra(blob["extra"])
        return self
