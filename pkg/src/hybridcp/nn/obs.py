"""Feature bundles fed to the networks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Observation:
    nodes: np.ndarray  # (n, F)
    mask: np.ndarray  # (A,) bool
    edges: np.ndarray | None = None  # (n, n, 1), graph encoder only
    focus: int | None = None  # row of the item under decision (fixed heads)


@dataclass(frozen=True)
class Batch:
    nodes: np.ndarray
    mask: np.ndarray
    edges: np.ndarray | None = None
    focus: np.ndarray | None = None

    def __len__(self):
        return self.nodes.shape[0]


def stack(observations) -> Batch:
    """Stack same-size observations along a new leading axis."""
    obs = list(observations)
    edges = None
    if obs[0].edges is not None:
        first = obs[0].edges
        # edge tensors are per-instance constants; share when identical object
        if all(o.edges is first for o in obs):
            edges = np.broadcast_to(first, (len(obs),) + first.shape)
        else:
            edges = np.stack([o.edges for o in obs])
    focus = None
    if obs[0].focus is not None:
        focus = np.array([o.focus for o in obs], dtype=int)
    return Batch(
        nodes=np.stack([o.nodes for o in obs]),
        mask=np.stack([o.mask for o in obs]),
        edges=edges,
        focus=focus,
    )
