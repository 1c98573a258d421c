"""Generic dynamic-programming problem contract.

A problem is described by a :class:`DpSpec` subclass: a number of stages, a
control domain per stage, a transition, a reward, a validity test and an
optional dominance test. Everything else in the package (the RL environment,
the CP encoding, the exact oracle) only talks to this contract.

Stages are numbered from 1 to ``n_stages``. States are immutable values
(``NamedTuple`` instances of ints, floats and frozensets).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

__all__ = [
    "ContractViolation",
    "InvalidTransition",
    "DpSpec",
    "EpisodeTrace",
    "BellmanResult",
    "feasible_controls",
    "apply",
    "bellman_solve",
    "canonical_key",
    "replay",
]


class ContractViolation(ValueError):
    """A precondition of an operation was not met."""


class InvalidTransition(ValueError):
    """A control value was applied where it is not feasible."""

    def __init__(self, stage: int, value: int, msg: str | None = None):
        self.stage = stage
        self.value = value
        super().__init__(msg or f"value {value} is not feasible at stage {stage}")


class DpSpec:
    """Base class for a DP model.

    Subclasses set ``n_stages`` and ``action_count`` and implement the
    transition/reward/validity hooks. ``use_dominance`` can be switched off to
    turn the dominance filter into the constant ``True``.
    """

    n_stages: int = 0
    action_count: int = 1
    # index of value v in action vectors is v - value_offset
    value_offset: int = 0
    # strict-improvement step used by branch-and-bound
    improvement_eps: float = 1e-9
    use_dominance: bool = True

    def control_domain(self, stage: int) -> Sequence[int]:
        raise NotImplementedError

    def initial_state(self) -> Any:
        raise NotImplementedError

    def transition(self, state, stage: int, value: int):
        raise NotImplementedError

    def reward(self, state, stage: int, value: int) -> float:
        raise NotImplementedError

    def is_valid(self, state, stage: int, value: int) -> bool:
        return True

    def is_nondominated(self, state, stage: int, value: int) -> bool:
        return True

    def upper_bound(self) -> float:
        return 0.0

    def terminal_adjustment(self, state) -> float:
        return 0.0

    def optimistic_bound(self, state, stage: int) -> float:
        """Upper bound on the reward still collectable from ``stage`` on,
        terminal adjustment included. Must never underestimate."""
        return math.inf

    def observation_key(self, state, stage: int) -> bytes:
        """Key for everything a learned heuristic sees at this node."""
        return canonical_key(state, stage)

    # -- helpers ---------------------------------------------------------

    def valid_values(self, state, stage: int, values: Iterable[int]) -> list[int]:
        return [v for v in values if self.is_valid(state, stage, v)]

    def nondominated_values(self, state, stage: int, values: Iterable[int]) -> list[int]:
        return [v for v in values if self.is_nondominated(state, stage, v)]

    def filter_controls(self, state, stage: int, values: Iterable[int]) -> list[int]:
        out = self.valid_values(state, stage, values)
        if self.use_dominance:
            out = self.nondominated_values(state, stage, out)
        return out

    def action_index(self, value: int) -> int:
        return value - self.value_offset

    def index_value(self, index: int) -> int:
        return index + self.value_offset

    def without_dominance(self) -> "DpSpec":
        """Shallow copy with the dominance filter disabled."""
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.use_dominance = False
        return clone


@dataclass
class EpisodeTrace:
    assignment: list[tuple[int, int]] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    terminated_early: bool = False
    total_return: float = 0.0
    shaped_rewards: list[float] = field(default_factory=list)
    shaped_return: float = 0.0

    @property
    def feasible(self) -> bool:
        return not self.terminated_early


@dataclass(frozen=True)
class BellmanResult:
    value: float
    assignment: tuple[tuple[int, int], ...] | None

    @property
    def feasible(self) -> bool:
        return self.assignment is not None


def _check_stage(spec: DpSpec, stage: int) -> None:
    if not 1 <= stage <= spec.n_stages:
        raise ContractViolation(f"stage {stage} outside 1..{spec.n_stages}")


def feasible_controls(spec: DpSpec, state, stage: int) -> list[int]:
    """Values of the stage's domain that are valid and not dominated."""
    _check_stage(spec, stage)
    return spec.filter_controls(state, stage, spec.control_domain(stage))


def apply(spec: DpSpec, state, stage: int, value: int):
    """Take ``value`` at ``stage``; returns ``(next_state, reward)``."""
    _check_stage(spec, stage)
    if value not in spec.control_domain(stage) or not spec.filter_controls(state, stage, (value,)):
        raise InvalidTransition(stage, value)
    return spec.transition(state, stage, value), spec.reward(state, stage, value)


def replay(spec: DpSpec, assignment: Sequence[tuple[int, int]]) -> EpisodeTrace:
    """Re-run an assignment from the initial state and rebuild its trace."""
    state = spec.initial_state()
    trace = EpisodeTrace()
    for stage, value in assignment:
        state, r = apply(spec, state, stage, value)
        trace.assignment.append((stage, value))
        trace.rewards.append(r)
    done = len(trace.assignment) == spec.n_stages
    trace.terminated_early = not done
    total = sum(trace.rewards)
    if done:
        total += spec.terminal_adjustment(state)
    trace.total_return = total
    return trace


def bellman_solve(spec: DpSpec) -> BellmanResult:
    """Exact memoized Bellman recursion with dominance disabled.

    Returns ``BellmanResult(-inf, None)`` when no complete assignment exists.
    """
    spec = spec.without_dominance()
    n = spec.n_stages
    memo: dict[bytes, tuple[float, int | None]] = {}

    def g(state, stage: int) -> float:
        if stage > n:
            return spec.terminal_adjustment(state)
        key = canonical_key(state, stage)
        hit = memo.get(key)
        if hit is not None:
            return hit[0]
        best, best_v = -math.inf, None
        for v in spec.filter_controls(state, stage, spec.control_domain(stage)):
            val = spec.reward(state, stage, v) + g(spec.transition(state, stage, v), stage + 1)
            if val > best:
                best, best_v = val, v
        memo[key] = (best, best_v)
        return best

    value = g(spec.initial_state(), 1)
    if value == -math.inf:
        return BellmanResult(-math.inf, None)
    assignment = []
    state = spec.initial_state()
    for stage in range(1, n + 1):
        v = memo[canonical_key(state, stage)][1]
        assignment.append((stage, v))
        state = spec.transition(state, stage, v)
    return BellmanResult(value, tuple(assignment))


_TAG_INT = b"i"
_TAG_FLOAT = b"f"
_TAG_SET = b"s"
_TAG_SEQ = b"q"
_TAG_NONE = b"n"


def _encode(obj, out: list[bytes]) -> None:
    if obj is None:
        out.append(_TAG_NONE)
    elif isinstance(obj, bool) or isinstance(obj, int):
        out.append(_TAG_INT + struct.pack(">q", int(obj)))
    elif isinstance(obj, float):
        out.append(_TAG_FLOAT + struct.pack(">d", obj))
    elif isinstance(obj, (set, frozenset)):
        members = sorted(obj)
        out.append(_TAG_SET + struct.pack(">I", len(members)))
        for m in members:
            _encode(m, out)
    elif isinstance(obj, (tuple, list)):
        out.append(_TAG_SEQ + struct.pack(">I", len(obj)))
        for m in obj:
            _encode(m, out)
    elif hasattr(obj, "item"):  # numpy scalar
        _encode(obj.item(), out)
    else:
        raise TypeError(f"cannot build a key from {type(obj).__name__}")


def canonical_key(state: Hashable, stage: int) -> bytes:
    """Deterministic byte key for ``(stage, state)``.

    Sets are serialized sorted, so insertion order does not matter.
    """
    out = [struct.pack(">q", stage)]
    _encode(state, out)
    return b"".join(out)
