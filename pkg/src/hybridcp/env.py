"""RL view of a DP model: states, masked actions and shaped rewards."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .dp import ContractViolation, DpSpec, EpisodeTrace, InvalidTransition


@dataclass(frozen=True)
class ShapingConfig:
    rho: float = 0.001
    use_feasibility_bonus: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class RlState:
    spec: DpSpec
    dp_state: Any
    stage: int
    feasible: tuple[int, ...] = ()

    @property
    def terminal(self) -> bool:
        return self.stage > self.spec.n_stages or not self.feasible


def _make(spec: DpSpec, dp_state, stage: int) -> RlState:
    if stage > spec.n_stages:
        return RlState(spec, dp_state, stage, ())
    feas = tuple(spec.filter_controls(dp_state, stage, spec.control_domain(stage)))
    return RlState(spec, dp_state, stage, feas)


def reset(spec: DpSpec) -> RlState:
    return _make(spec, spec.initial_state(), 1)


def shaped(spec: DpSpec, raw: float, cfg: ShapingConfig) -> float:
    if cfg.use_feasibility_bonus:
        return cfg.rho * (1 + abs(spec.upper_bound()) + raw)
    return cfg.rho * raw


def step(state: RlState, action: int, cfg: ShapingConfig):
    """Returns ``(next_state, shaped_reward, done, raw_reward)``."""
    spec = state.spec
    if state.stage > spec.n_stages or action not in state.feasible:
        raise InvalidTransition(state.stage, action)
    nxt_dp = spec.transition(state.dp_state, state.stage, action)
    raw = spec.reward(state.dp_state, state.stage, action)
    nxt = _make(spec, nxt_dp, state.stage + 1)
    if nxt.stage > spec.n_stages:
        raw += spec.terminal_adjustment(nxt_dp)
    return nxt, shaped(spec, raw, cfg), nxt.terminal, raw


def action_mask(state: RlState) -> np.ndarray:
    mask = np.zeros(state.spec.action_count, dtype=bool)
    for v in state.feasible:
        mask[state.spec.action_index(v)] = True
    return mask


Policy = Callable[[RlState], int]


def rollout(policy: Policy, spec: DpSpec, cfg: ShapingConfig = ShapingConfig()) -> EpisodeTrace:
    """Run one episode.

    ``trace.rewards`` holds the DP rewards; the terminal adjustment is added
    to ``total_return`` only. ``trace.shaped_rewards`` carries it inside the
    last shaped reward.
    """
    state = reset(spec)
    trace = EpisodeTrace()
    while not state.terminal:
        action = policy(state)
        if action not in state.feasible:
            raise ContractViolation(f"policy chose masked action {action} at stage {state.stage}")
        trace.assignment.append((state.stage, action))
        trace.rewards.append(spec.reward(state.dp_state, state.stage, action))
        state, r_shaped, _, _ = step(state, action, cfg)
        trace.shaped_rewards.append(r_shaped)
    trace.terminated_early = state.stage <= spec.n_stages
    trace.total_return = sum(trace.rewards)
    if not trace.terminated_early:
        trace.total_return += spec.terminal_adjustment(state.dp_state)
    trace.shaped_return = sum(trace.shaped_rewards)
    return trace


def random_policy(seed=None) -> Policy:
    rng = np.random.default_rng(seed)

    def choose(state: RlState) -> int:
        return state.feasible[int(rng.integers(len(state.feasible)))]

    return choose
