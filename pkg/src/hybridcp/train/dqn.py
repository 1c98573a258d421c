"""Deep Q-learning with Boltzmann exploration and Monte-Carlo targets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import encode, init_weights, no_grad, q_forward, stack
from ..nn import autograd as ag
from ..problems import Problem, get_problem
from .buffer import ReplayBuffer, Transition, n_step_returns
from .common import Episode, Trainer, play


@dataclass(frozen=True)
class DqnConfig:
    batch_size: int = 32
    lr: float = 1e-4
    temperature: float = 10.0  # Boltzmann exploration over Q-values
    n_step: int | None = None  # None: full episode, no bootstrapping
    capacity: int = 50_000
    updates_per_episode: int = 4
    validation_interval: int = 100
    validation_size: int = 100
    validation_seed: int = 2024
    clip_norm: float | None = 10.0

    def __post_init__(self):
        positive = (self.batch_size, self.lr, self.temperature, self.capacity,
                    self.validation_interval, self.validation_size)
        if min(positive) <= 0 or self.updates_per_episode < 0:
            raise ValueError("DQN settings must be positive")
        if self.n_step is not None and self.n_step < 1:
            raise ValueError("n_step must be >= 1")


def boltzmann(q_masked: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    """Sample an index with probability proportional to exp(Q / T) over finite entries."""
    ok = np.isfinite(q_masked)
    z = np.where(ok, q_masked / temperature, -np.inf)
    p = np.exp(z - z[ok].max())
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


def q_loss(w, batch: list[Transition]):
    """Mean squared error between Q(s, a) and the stored targets, grouped by
    instance size so each group is one batched forward pass."""
    groups: dict[tuple, list[Transition]] = {}
    for t in batch:
        groups.setdefault(t.obs.nodes.shape, []).append(t)
    total = None
    for items in groups.values():
        b = stack([t.obs for t in items])
        emb = encode(b, w)
        q, _ = q_forward(emb, b.mask, w, focus=b.focus, strict=False)
        picked = ag.take(q, np.array([t.action for t in items]), axis=1)
        err = picked - np.array([t.target for t in items])
        sq = (err * err).sum()
        total = sq if total is None else total + sq
    return total * (1.0 / len(batch))


class DqnTrainer(Trainer):
    algo = "dqn"

    def __init__(self, problem: Problem, sizes, config: DqnConfig = DqnConfig(), seed: int = 0,
                 out_dir=None, network: dict | None = None):
        super().__init__(problem, sizes, config, seed, out_dir, network)
        self.buffer = ReplayBuffer(config.capacity)

    def _init_weights(self):
        return init_weights(self.problem.network(head="q", **self.network), self.seed)

    def _run_episode(self, spec, rng) -> Episode:
        w, T = self.weights, self.config.temperature

        def choose(obs):
            b = stack([obs])
            with no_grad():
                _, q = q_forward(encode(b, w), b.mask, w, focus=b.focus)
            return boltzmann(q[0], T, rng), None

        return play(self.problem, spec, choose)

    def _targets(self, ep: Episode) -> list[float]:
        n = self.config.n_step
        targets = n_step_returns(ep.shaped, n)
        if n is None:
            return targets
        steps = len(ep.shaped)
        w = self.weights
        for t in range(steps):
            if t + n < steps:
                obs = ep.observations[t + n]
                b = stack([obs])
                with no_grad():
                    _, q = q_forward(encode(b, w), b.mask, w, focus=b.focus)
                targets[t] += float(np.max(q[0]))
        return targets

    def _after_episode(self, ep: Episode, rng) -> None:
        targets = self._targets(ep)
        last = len(ep.actions) - 1
        for t, (obs, a, g) in enumerate(zip(ep.observations, ep.actions, targets)):
            self.buffer.push(Transition(obs, a, g, t == last))
        c = self.config
        if len(self.buffer) < c.batch_size:
            return
        for _ in range(c.updates_per_episode):
            batch = self.buffer.sample(c.batch_size, rng)
            loss = q_loss(self.weights, batch)
            grads = ag.grad(loss, list(self.weights.params.values()))
            self.optimizer.step(dict(zip(self.weights.params, grads)))

    def _state_extra(self):
        return {"buffer": self.buffer}

    def _load_extra(self, extra):
        self.buffer = extra["buffer"]


def train_dqn(problem: str | Problem, sizes, config: DqnConfig = DqnConfig(), seed: int = 0,
              episodes: int = 1000, out_dir=None, network: dict | None = None) -> DqnTrainer:
    """Train a Q-network; the returned trainer holds the history and the
    selected checkpoint (``best_checkpoint``)."""
    if isinstance(problem, str):
        problem = get_problem(problem)
    return DqnTrainer(problem, sizes, config, seed, out_dir, network).train(episodes)
