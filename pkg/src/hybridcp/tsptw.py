"""Travelling salesman problem with time windows.

Customers are numbered 1..n, customer 1 being the depot. The DP assigns one
customer per stage (n - 1 stages) and pays the return to the depot as a
terminal adjustment.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .dp import ContractViolation, DpSpec
from .nn.obs import Observation

GRID = 100
# ceil(sqrt(100^2 + 100^2)); largest possible travel time
MAX_DIST = 142


@dataclass(frozen=True)
class TsptwInstance:
    n: int
    coords: tuple[tuple[int, int], ...]
    dist: tuple[tuple[int, ...], ...]
    windows: tuple[tuple[int, int], ...]
    seed: int | None = None
    # generating tour, only kept for tests; never serialized
    hidden_tour: tuple[int, ...] | None = field(default=None, compare=False, repr=False)

    def d(self, i: int, j: int) -> int:
        return self.dist[i - 1][j - 1]

    def to_json(self) -> str:
        return json.dumps({
            "problem": "tsptw",
            "n": self.n,
            "coords": [list(c) for c in self.coords],
            "dist": [list(r) for r in self.dist],
            "windows": [list(w) for w in self.windows],
            "seed": self.seed,
        })

    @classmethod
    def from_json(cls, text: str | dict) -> "TsptwInstance":
        data = json.loads(text) if isinstance(text, str) else text
        if data.get("problem") != "tsptw":
            raise ValueError("not a tsptw instance")
        return cls(
            n=int(data["n"]),
            coords=tuple(tuple(c) for c in data["coords"]),
            dist=tuple(tuple(int(x) for x in r) for r in data["dist"]),
            windows=tuple((int(l), int(u)) for l, u in data["windows"]),
            seed=data.get("seed"),
        )


class TsptwState(NamedTuple):
    m: frozenset  # customers still to visit
    v: int  # last visited customer
    t: int  # current time


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def distance_matrix(coords: Sequence[Sequence[float]]) -> tuple[tuple[int, ...], ...]:
    pts = np.asarray(coords, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    raw = np.sqrt((diff ** 2).sum(-1))
    return tuple(tuple(round_half_up(x) for x in row) for row in raw)


def generate(n: int, W: int = 100, G: int = 10, seed: int | None = None) -> TsptwInstance:
    """Random instance with at least one feasible tour.

    Windows are laid out along a hidden random tour starting at the depot,
    each lower bound sitting at most ``G`` after the earliest arrival and
    each window being at most ``W`` long.
    """
    if n < 2:
        raise ValueError("a TSPTW instance needs n >= 2")
    rng = np.random.default_rng(seed)
    coords = tuple((int(x), int(y)) for x, y in rng.integers(0, GRID + 1, size=(n, 2)))
    dist = distance_matrix(coords)
    tour = [1] + [int(c) + 2 for c in rng.permutation(n - 1)]
    windows = {1: (0, 0)}
    prev_l = 0
    for a, b in zip(tour, tour[1:]):
        d = dist[a - 1][b - 1]
        l = int(rng.integers(d + prev_l, d + prev_l + G + 1))
        u = int(rng.integers(l, l + W + 1))
        windows[b] = (l, u)
        prev_l = l
    # the depot has no window; its upper bound is only used for scaling
    horizon = max(u for _, u in windows.values())
    windows[1] = (0, horizon)
    return TsptwInstance(
        n=n,
        coords=coords,
        dist=dist,
        windows=tuple(windows[i] for i in range(1, n + 1)),
        seed=seed,
        hidden_tour=tuple(tour),
    )


class TsptwSpec(DpSpec):
    value_offset = 1
    improvement_eps = 1

    def __init__(self, instance: TsptwInstance):
        self.instance = instance
        self.n_stages = instance.n - 1
        self.action_count = instance.n
        self._dist = instance.dist
        self._upper = [w[1] for w in instance.windows]
        self._lower = [w[0] for w in instance.windows]
        self._domain = tuple(range(2, instance.n + 1))
        self._static = None

    def control_domain(self, stage):
        return self._domain

    def initial_state(self):
        return TsptwState(frozenset(range(2, self.instance.n + 1)), 1, 0)

    def transition(self, state, stage, value):
        arrive = state.t + self._dist[state.v - 1][value - 1]
        return TsptwState(state.m - {value}, value, max(arrive, self._lower[value - 1]))

    def reward(self, state, stage, value):
        return -self._dist[state.v - 1][value - 1]

    def is_valid(self, state, stage, value):
        return value in state.m and self._upper[value - 1] >= state.t + self._dist[state.v - 1][value - 1]

    def is_nondominated(self, state, stage, value):
        t_next = max(state.t + self._dist[state.v - 1][value - 1], self._lower[value - 1])
        return all(t_next <= self._upper[j - 1] for j in state.m if j != value)

    def _deadlines(self, m):
        """Smallest deadline in ``m``, its customer, and the second smallest."""
        u1 = u2 = math.inf
        j1 = None
        upper = self._upper
        for j in m:
            u = upper[j - 1]
            if u < u1:
                u1, u2, j1 = u, u1, j
            elif u < u2:
                u2 = u
        return u1, j1, u2

    def valid_values(self, state, stage, values):
        row = self._dist[state.v - 1]
        t, m, upper = state.t, state.m, self._upper
        return [a for a in values if a in m and upper[a - 1] >= t + row[a - 1]]

    def nondominated_values(self, state, stage, values):
        row = self._dist[state.v - 1]
        t, lower = state.t, self._lower
        u1, j1, u2 = self._deadlines(state.m)
        out = []
        for a in values:
            t_next = max(t + row[a - 1], lower[a - 1])
            if t_next <= (u2 if a == j1 else u1):
                out.append(a)
        return out

    def upper_bound(self):
        return (self.instance.n + 1) * MAX_DIST

    def terminal_adjustment(self, state):
        return -self._dist[state.v - 1][0]

    def optimistic_bound(self, state, stage):
        # every remaining reward is a negated distance
        return 0

    def _static_features(self):
        if self._static is None:
            inst = self.instance
            horizon = max(max(u for _, u in inst.windows), 1)
            static = np.zeros((inst.n, 4))
            static[:, 0:2] = np.asarray(inst.coords, dtype=float) / GRID
            static[:, 2:4] = np.asarray(inst.windows, dtype=float) / horizon
            edges = np.asarray(inst.dist, dtype=float)[:, :, None] / MAX_DIST
            edges.setflags(write=False)
            self._static = (static, edges)
        return self._static

    def observe(self, state, stage) -> Observation:
        static, edges = self._static_features()
        n = self.instance.n
        nodes = np.zeros((n, 6))
        nodes[:, :4] = static
        for j in state.m:
            nodes[j - 1, 4] = 1.0
        nodes[state.v - 1, 5] = 1.0
        mask = np.zeros(n, dtype=bool)
        if 1 <= stage <= self.n_stages:
            for a in self.filter_controls(state, stage, self._domain):
                mask[a - 1] = True
        return Observation(nodes, mask, edges=edges)


def dp_spec(instance: TsptwInstance) -> TsptwSpec:
    return TsptwSpec(instance)


def tour_length(instance: TsptwInstance, order: Sequence[int]) -> int:
    """Length of depot -> order... -> depot."""
    path = [1, *order, 1]
    return sum(instance.d(a, b) for a, b in zip(path, path[1:]))


def simulate(instance: TsptwInstance, order: Sequence[int]) -> bool:
    """True when visiting ``order`` from the depot at time 0 meets every window."""
    t, v = 0, 1
    for a in order:
        t += instance.d(v, a)
        l, u = instance.windows[a - 1]
        if t > u:
            return False
        t = max(t, l)
        v = a
    return True


def features(instance: TsptwInstance, state: TsptwState, spec: TsptwSpec | None = None):
    """Node features (n x 6), edge features (n x n x 1) and the action mask."""
    obs = (spec or dp_spec(instance)).observe(state, instance.n - len(state.m))
    return obs.nodes, obs.edges, obs.mask


def nearest_value(instance: TsptwInstance, state: TsptwState, candidates) -> int:
    """Closest candidate from the last visited customer; ties to the lowest index."""
    candidates = list(candidates)
    if not candidates:
        raise ContractViolation("nearest_value needs at least one candidate")
    row = instance.dist[state.v - 1]
    return min(candidates, key=lambda a: (row[a - 1], a))
