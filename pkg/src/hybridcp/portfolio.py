"""4-moments portfolio selection.

Besides the money spent, the DP state carries the four moment sums of the
chosen items, since the final reward needs them. This keeps the model
Markov without changing its search space.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .dp import DpSpec, canonical_key
from .nn.obs import Observation

LAMBDAS = (1, 5, 5, 5)
MAX_VALUE = 100


@dataclass(frozen=True)
class PortInstance:
    n: int
    b: tuple[int, ...]  # cost of each item (a_i in the objective)
    mu: tuple[float, ...]
    sigma: tuple[float, ...]
    gamma: tuple[float, ...]
    kappa: tuple[float, ...]
    B: int
    lambdas: tuple[int, int, int, int] = LAMBDAS
    mode: str = "continuous"
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("continuous", "discrete"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def discrete(self) -> bool:
        return self.mode == "discrete"

    def with_mode(self, mode: str) -> "PortInstance":
        d = dict(self.__dict__)
        d["mode"] = mode
        return PortInstance(**d)

    def to_json(self) -> str:
        return json.dumps({
            "problem": "port",
            "n": self.n,
            "b": list(self.b),
            "mu": list(self.mu),
            "sigma": list(self.sigma),
            "gamma": list(self.gamma),
            "kappa": list(self.kappa),
            "B": self.B,
            "lambda": list(self.lambdas),
            "mode": self.mode,
            "seed": self.seed,
        })

    @classmethod
    def from_json(cls, text: str | dict) -> "PortInstance":
        data = json.loads(text) if isinstance(text, str) else text
        if data.get("problem") != "port":
            raise ValueError("not a port instance")
        return cls(
            n=int(data["n"]),
            b=tuple(int(x) for x in data["b"]),
            mu=tuple(float(x) for x in data["mu"]),
            sigma=tuple(float(x) for x in data["sigma"]),
            gamma=tuple(float(x) for x in data["gamma"]),
            kappa=tuple(float(x) for x in data["kappa"]),
            B=int(data["B"]),
            lambdas=tuple(data.get("lambda", LAMBDAS)),
            mode=data.get("mode", "continuous"),
            seed=data.get("seed"),
        )


class PortState(NamedTuple):
    spent: int
    s_mu: float = 0.0
    s_var: float = 0.0  # sum of sigma^2
    s_skew: float = 0.0  # sum of gamma^3
    s_kurt: float = 0.0  # sum of kappa^4


def generate(n: int, seed: int | None = None, mode: str = "continuous") -> PortInstance:
    if n < 1:
        raise ValueError("a PORT instance needs n >= 1")
    rng = np.random.default_rng(seed)
    b = rng.integers(0, MAX_VALUE + 1, size=n)
    mu = rng.integers(0, MAX_VALUE + 1, size=n).astype(float)
    sigma = rng.uniform(0.0, mu)
    gamma = rng.uniform(0.0, mu)
    kappa = rng.uniform(0.0, mu)
    return PortInstance(
        n=n,
        b=tuple(int(x) for x in b),
        mu=tuple(float(x) for x in mu),
        sigma=tuple(float(x) for x in sigma),
        gamma=tuple(float(x) for x in gamma),
        kappa=tuple(float(x) for x in kappa),
        B=int(sum(int(x) for x in b) // 2),
        mode=mode,
        seed=seed,
    )


def root(x: float, k: int) -> float:
    return x ** (1.0 / k) if x > 0 else 0.0


def floor_root(x: float, k: int) -> int:
    """Largest integer r with r**k <= x (exact, no float-root drift)."""
    if x <= 0:
        return 0
    r = int(x ** (1.0 / k))
    while (r + 1) ** k <= x:
        r += 1
    while r > 0 and r ** k > x:
        r -= 1
    return r


def moment_value(instance: PortInstance, s_mu, s_var, s_skew, s_kurt) -> float:
    l1, l2, l3, l4 = instance.lambdas
    if instance.discrete:
        return (l1 * s_mu - l2 * floor_root(s_var, 2)
                + l3 * floor_root(s_skew, 3) - l4 * floor_root(s_kurt, 4))
    return l1 * s_mu - l2 * root(s_var, 2) + l3 * root(s_skew, 3) - l4 * root(s_kurt, 4)


def _add_item(instance: PortInstance, st: PortState, i: int) -> PortState:
    return PortState(
        st.spent + instance.b[i],
        st.s_mu + instance.mu[i],
        st.s_var + instance.sigma[i] ** 2,
        st.s_skew + instance.gamma[i] ** 3,
        st.s_kurt + instance.kappa[i] ** 4,
    )


def objective(instance: PortInstance, selection: Sequence[bool]) -> float | None:
    """Portfolio objective of a 0/1 selection, ``None`` when over budget."""
    if len(selection) != instance.n:
        raise ValueError(f"selection has length {len(selection)}, expected {instance.n}")
    st = PortState(0)
    for i, x in enumerate(selection):
        if x:
            st = _add_item(instance, st, i)
    if st.spent > instance.B:
        return None
    return moment_value(instance, *st[1:])


class PortSpec(DpSpec):
    action_count = 2
    value_offset = 0

    def __init__(self, instance: PortInstance):
        self.instance = instance
        self.n_stages = instance.n
        self.improvement_eps = 1 if instance.discrete else 1e-9
        self._static = None
        # suffix sums for the optimistic bound
        self._suffix = []
        for i in range(instance.n + 1):
            self._suffix.append(
                [(instance.b[j], instance.mu[j], instance.gamma[j] ** 3) for j in range(i, instance.n)]
            )

    def control_domain(self, stage):
        return (0, 1)

    def initial_state(self):
        return PortState(0)

    def transition(self, state, stage, value):
        if value:
            return _add_item(self.instance, state, stage - 1)
        return state

    def reward(self, state, stage, value):
        if stage < self.n_stages:
            return 0.0
        return moment_value(self.instance, *self.transition(state, stage, value)[1:])

    def is_valid(self, state, stage, value):
        return state.spent + value * self.instance.b[stage - 1] <= self.instance.B

    def filter_controls(self, state, stage, values):
        return [v for v in values if self.is_valid(state, stage, v)]

    def optimistic_bound(self, state, stage):
        if stage > self.n_stages:
            return 0.0
        # positive terms grow with any affordable remaining item, negative
        # terms can only grow, so freeze them at their current value
        room = self.instance.B - state.spent
        s_mu, s_skew = state.s_mu, state.s_skew
        for b, mu, g3 in self._suffix[stage - 1]:
            if b <= room:
                s_mu += mu
                s_skew += g3
        l1, l2, l3, l4 = self.instance.lambdas
        if self.instance.discrete:
            return (l1 * s_mu - l2 * floor_root(state.s_var, 2)
                    + l3 * floor_root(s_skew, 3) - l4 * floor_root(state.s_kurt, 4))
        return (l1 * s_mu - l2 * root(state.s_var, 2) + l3 * root(s_skew, 3)
                - l4 * root(state.s_kurt, 4)) + 1e-9 * (1 + abs(s_mu))

    def observe(self, state, stage) -> Observation:
        inst = self.instance
        if self._static is None:
            static = np.zeros((inst.n, 5))
            static[:, 0] = np.asarray(inst.b, dtype=float) / MAX_VALUE
            static[:, 1] = np.asarray(inst.mu) / MAX_VALUE
            static[:, 2] = np.asarray(inst.sigma) ** 2 / MAX_VALUE ** 2
            static[:, 3] = np.asarray(inst.gamma) ** 3 / MAX_VALUE ** 3
            static[:, 4] = np.asarray(inst.kappa) ** 4 / MAX_VALUE ** 4
            self._static = static
        n = inst.n
        feats = np.zeros((n, 9))
        feats[:, :5] = self._static
        idx = np.arange(1, n + 1)
        feats[:, 5] = idx < stage
        feats[:, 6] = idx == stage
        feats[:, 7] = state.spent + np.asarray(inst.b) > inst.B
        feats[:, 8] = (inst.B - state.spent) / inst.B if inst.B > 0 else 0.0
        mask = np.zeros(2, dtype=bool)
        if 1 <= stage <= n:
            mask[0] = True
            mask[1] = state.spent + inst.b[stage - 1] <= inst.B
        return Observation(feats, mask, focus=min(max(stage, 1), n) - 1)

    def observation_key(self, state, stage):
        # the features only see the stage and the money spent
        return canonical_key((state.spent,), stage)


def dp_spec(instance: PortInstance) -> PortSpec:
    return PortSpec(instance)


def features(instance: PortInstance, state: PortState, stage: int, spec: "PortSpec | None" = None):
    """Item features (n x 9) and the mask over the controls {0, 1}."""
    obs = (spec or dp_spec(instance)).observe(state, stage)
    return obs.nodes, obs.mask
