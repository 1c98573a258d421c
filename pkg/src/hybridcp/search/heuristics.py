"""Value-selection heuristics.

A heuristic maps a search node (DP state and stage) to a score vector over
the problem's actions; larger is better. Scores of learned heuristics are
what the cache stores.
"""
from __future__ import annotations

import math

import numpy as np

from ..dp import ContractViolation, DpSpec, canonical_key
from ..nn import Checkpoint, encode, no_grad, policy_forward, q_forward, stack


class Heuristic:
    name = "heuristic"
    learned = False

    def scores(self, spec: DpSpec, state, stage: int) -> np.ndarray:
        raise NotImplementedError

    def rank(self, spec: DpSpec, scores: np.ndarray, values) -> list[int]:
        """Values by decreasing score, ties to the lowest value."""
        if not values:
            raise ContractViolation("cannot rank an empty set of values")
        off = spec.value_offset
        return sorted(values, key=lambda v: (-scores[v - off], v))

    def choose(self, spec, state, stage, values) -> int:
        return self.rank(spec, self.scores(spec, state, stage), values)[0]


class Lexicographic(Heuristic):
    name = "lexicographic"

    def scores(self, spec, state, stage):
        return -np.arange(spec.action_count, dtype=float)


class Nearest(Heuristic):
    """Closest next customer (TSPTW only)."""

    name = "nearest"

    def scores(self, spec, state, stage):
        row = spec.instance.dist[state.v - 1]
        return -np.asarray(row, dtype=float)


class Oracle(Heuristic):
    """Exact Q-values from the Bellman recursion; for tests and baselines."""

    name = "oracle"

    def __init__(self):
        self._memo = {}
        self._spec_id = None

    def _g(self, spec, state, stage):
        if stage > spec.n_stages:
            return spec.terminal_adjustment(state)
        key = canonical_key(state, stage)
        if key not in self._memo:
            best = -math.inf
            for v in spec.filter_controls(state, stage, spec.control_domain(stage)):
                best = max(best, spec.reward(state, stage, v) + self._g(spec, spec.transition(state, stage, v), stage + 1))
            self._memo[key] = best
        return self._memo[key]

    def scores(self, spec, state, stage):
        if self._spec_id != id(spec):
            self._memo, self._spec_id = {}, id(spec)
        out = np.full(spec.action_count, -np.inf)
        for v in spec.filter_controls(state, stage, spec.control_domain(stage)):
            out[v - spec.value_offset] = spec.reward(state, stage, v) + self._g(spec, spec.transition(state, stage, v), stage + 1)
        return out


class DqnHeuristic(Heuristic):
    """Greedy Q-value ordering from a trained (or untrained) Q-network."""

    name = "dqn"
    learned = True

    def __init__(self, checkpoint: Checkpoint):
        self.w = checkpoint.weights

    def scores(self, spec, state, stage):
        obs = spec.observe(state, stage)
        batch = stack([obs])
        with no_grad():
            emb = encode(batch, self.w)
            _, q = q_forward(emb, batch.mask, self.w, focus=batch.focus)
        return q[0]


class PpoHeuristic(Heuristic):
    """Action probabilities of an actor-critic network."""

    name = "ppo"
    learned = True

    def __init__(self, checkpoint: Checkpoint, tau: float = 1.0):
        self.w = checkpoint.weights
        self.tau = tau

    def scores(self, spec, state, stage):
        obs = spec.observe(state, stage)
        batch = stack([obs])
        with no_grad():
            emb = encode(batch, self.w)
            _, probs, _ = policy_forward(emb, batch.mask, self.w, self.tau, focus=batch.focus)
        return probs[0]


def dqn_heuristic(checkpoint: Checkpoint) -> DqnHeuristic:
    return DqnHeuristic(checkpoint)


def ppo_heuristic(checkpoint: Checkpoint, tau: float = 1.0) -> PpoHeuristic:
    return PpoHeuristic(checkpoint, tau)


def nearest() -> Nearest:
    return Nearest()


def lexicographic() -> Lexicographic:
    return Lexicographic()


def oracle() -> Oracle:
    return Oracle()


class Cache:
    """Predictions keyed by the canonical observation key of a node."""

    def __init__(self):
        self._store: dict[bytes, np.ndarray] = {}
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._store)

    def __contains__(self, key):
        return key in self._store

    def get_or_compute(self, key: bytes, compute):
        hit = self._store.get(key)
        if hit is not None:
            self.hits += 1
            return hit
        self.misses += 1
        val = np.asarray(compute())
        val.setflags(write=False)
        self._store[key] = val
        return val
