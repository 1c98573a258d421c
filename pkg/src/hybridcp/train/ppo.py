"""Proximal policy optimization with a clipped surrogate and a critic baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import encode, init_weights, no_grad, policy_forward, stack
from ..nn import autograd as ag
from ..problems import Problem, get_problem
from .buffer import n_step_returns
from .common import Episode, Trainer, play


@dataclass(frozen=True)
class PpoConfig:
    batch_size: int = 64
    lr: float = 1e-4
    clip: float = 0.1
    entropy_coef: float = 1e-3
    value_coef: float = 0.5
    update_timestep: int = 2048
    epochs: int = 3
    normalize_advantages: bool = True
    validation_interval: int = 100
    validation_size: int = 100
    validation_seed: int = 2024
    clip_norm: float | None = 10.0

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        positive = (self.batch_size, self.lr, self.update_timestep, self.epochs,
                    self.validation_interval, self.validation_size)
        if min(positive) <= 0 or self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("PPO settings must be positive")


def clip_factor(ratio: float, advantage: float, eps: float) -> float:
    """Factor multiplying the advantage in min(r A, clip(r, 1-eps, 1+eps) A)."""
    clipped = min(max(ratio, 1 - eps), 1 + eps)
    return ratio if ratio * advantage <= clipped * advantage else clipped


def ppo_loss(w, items, clip: float, entropy_coef: float, value_coef: float):
    """Negative clipped surrogate minus entropy bonus plus value loss.

    ``items`` are tuples ``(obs, action, old_logp, return, advantage)`` of
    same-size observations. Returns the loss tensor (summed over the items).
    """
    b = stack([it[0] for it in items])
    actions = np.array([it[1] for it in items])
    old = np.array([it[2] for it in items])
    ret = np.array([it[3] for it in items])
    adv = np.array([it[4] for it in items])
    emb = encode(b, w)
    logp, _, value = policy_forward(emb, b.mask, w, 1.0, focus=b.focus)
    new = ag.take(logp, actions, axis=1)
    ratio = ag.exp(new - old)
    surr = ag.minimum(ratio * adv, ag.clip(ratio, 1 - clip, 1 + clip) * adv)
    maskf = b.mask.astype(float)
    entropy = -(ag.exp(logp) * logp * maskf).sum()
    verr = value - ret
    return -surr.sum() - entropy * entropy_coef + (verr * verr).sum() * value_coef


class PpoTrainer(Trainer):
    algo = "ppo"

    def __init__(self, problem: Problem, sizes, config: PpoConfig = PpoConfig(), seed: int = 0,
                 out_dir=None, network: dict | None = None):
        super().__init__(problem, sizes, config, seed, out_dir, network)
        self.storage: list[tuple] = []  # (obs, action, old_logp, return)
        self.updates = 0

    def _init_weights(self):
        return init_weights(self.problem.network(head="actor-critic", **self.network), self.seed)

    def _run_episode(self, spec, rng) -> Episode:
        w = self.weights

        def choose(obs):
            b = stack([obs])
            with no_grad():
                _, probs, _ = policy_forward(encode(b, w), b.mask, w, 1.0, focus=b.focus)
            p = probs[0]
            a = int(rng.choice(len(p), p=p))
            return a, float(np.log(p[a]))

        return play(self.problem, spec, choose)

    def _after_episode(self, ep: Episode, rng) -> None:
        returns = n_step_returns(ep.shaped)
        for obs, a, lp, g in zip(ep.observations, ep.actions, ep.extra, returns):
            self.storage.append((obs, a, lp, g))
        if len(self.storage) >= self.config.update_timestep:
            self.update()

    def _values(self, items) -> np.ndarray:
        out = np.zeros(len(items))
        w = self.weights
        groups: dict[tuple, list[int]] = {}
        for k, it in enumerate(items):
            groups.setdefault(it[0].nodes.shape, []).append(k)
        for idx in groups.values():
            b = stack([items[k][0] for k in idx])
            with no_grad():
                _, _, v = policy_forward(encode(b, w), b.mask, w, 1.0, focus=b.focus)
            out[idx] = v.data
        return out

    def update(self) -> None:
        c = self.config
        data = self.storage
        self.storage = []
        self.updates += 1
        rng = np.random.default_rng([self.seed, 1, self.updates])
        ret = np.array([d[3] for d in data])
        adv = ret - self._values(data)
        if c.normalize_advantages and len(adv) > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        items = [d + (float(a),) for d, a in zip(data, adv)]
        params = list(self.weights.params.values())
        for _ in range(c.epochs):
            order = rng.permutation(len(items))
            for start in range(0, len(items), c.batch_size):
                chunk = [items[k] for k in order[start:start + c.batch_size]]
                groups: dict[tuple, list] = {}
                for it in chunk:
                    groups.setdefault(it[0].nodes.shape, []).append(it)
                loss = None
                for g in groups.values():
                    part = ppo_loss(self.weights, g, c.clip, c.entropy_coef, c.value_coef)
                    loss = part if loss is None else loss + part
                loss = loss * (1.0 / len(chunk))
                grads = ag.grad(loss, params)
                self.optimizer.step(dict(zip(self.weights.params, grads)))

    def _state_extra(self):
        return {"storage": self.storage, "updates": self.updates}

    def _load_extra(self, extra):
        self.storage = extra["storage"]
        self.updates = extra["updates"]


def train_ppo(problem: str | Problem, sizes, config: PpoConfig = PpoConfig(), seed: int = 0,
              episodes: int = 1000, out_dir=None, network: dict | None = None) -> PpoTrainer:
    """Train an actor-critic network with validation-based model selection."""
    if isinstance(problem, str):
        problem = get_problem(problem)
    return PpoTrainer(problem, sizes, config, seed, out_dir, network).train(episodes)
