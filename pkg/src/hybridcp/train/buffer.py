from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.obs import Observation


@dataclass(frozen=True)
class Transition:
    obs: Observation
    action: int  # action index
    target: float  # n-step shaped return (bootstrapped when truncated)
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def push(self, item: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, k: int, rng: np.random.Generator) -> list[Transition]:
        idx = rng.integers(0, len(self._items), size=k)
        return [self._items[i] for i in idx]

    def items(self) -> list[Transition]:
        """Contents from oldest to newest."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next:] + self._items[:self._next]


def n_step_returns(rewards, n: int | None = None) -> list[float]:
    """Undiscounted sums of the next ``n`` rewards from every step
    (the full remaining return when ``n`` is None)."""
    rewards = list(rewards)
    if n is None:
        n = max(len(rewards), 1)
    if n < 1:
        raise ValueError("n must be >= 1")
    return [float(sum(rewards[t:t + n])) for t in range(len(rewards))]
