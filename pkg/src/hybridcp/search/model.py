"""CP encoding of a DP model and the trailed propagation engine.

Variables
    ``dom[i]``  decision variable of stage i (tuple of remaining values)
    ``aux[i]``  auxiliary state variable of stage i, bound to ``(state, acc)``
                where ``acc`` is the reward accumulated before stage i

Constraints (one instance per stage)
    initial state, transition, validity, dominance, objective bound

Propagation is event driven: a variable change wakes the constraints
watching it, and the queue is drained to a fix-point.
"""
from __future__ import annotations

import math
from collections import deque

from ..dp import DpSpec

UNBOUND = None


class Constraint:
    name = "constraint"
    stage = 0

    def watches(self, model: "CpModel"):
        """Pairs ``(kind, index)`` with kind ``"dom"`` or ``"aux"``."""
        return ()

    def propagate(self, s: "SolverState") -> bool:
        raise NotImplementedError

    def __repr__(self):
        return f"{self.name}({self.stage})"


class InitialState(Constraint):
    name = "initial-state"

    def __init__(self, spec: DpSpec):
        self.value = (spec.initial_state(), 0)
        self.stage = 1

    def watches(self, model):
        return ()

    def propagate(self, s):
        cur = s.aux[1]
        if cur is UNBOUND:
            s.bind_aux(1, self.value)
            return True
        return cur == self.value


class Transition(Constraint):
    name = "transition"

    def __init__(self, stage):
        self.stage = stage

    def watches(self, model):
        return (("dom", self.stage), ("aux", self.stage))

    def propagate(self, s):
        i = self.stage
        src = s.aux[i]
        dom = s.dom[i]
        if src is UNBOUND or len(dom) != 1:
            return True
        state, acc = src
        v = dom[0]
        spec = s.spec
        nxt = (spec.transition(state, i, v), acc + spec.reward(state, i, v))
        cur = s.aux[i + 1]
        if cur is UNBOUND:
            s.bind_aux(i + 1, nxt)
            return True
        return cur == nxt


class Validity(Constraint):
    name = "validity"

    def __init__(self, stage):
        self.stage = stage

    def watches(self, model):
        return (("aux", self.stage), ("dom", self.stage))

    def propagate(self, s):
        i = self.stage
        src = s.aux[i]
        if src is UNBOUND:
            return True
        dom = s.dom[i]
        kept = s.spec.valid_values(src[0], i, dom)
        if len(kept) != len(dom):
            s.set_domain(i, tuple(kept))
        return bool(kept)


class Dominance(Constraint):
    name = "dominance"

    def __init__(self, stage):
        self.stage = stage

    def watches(self, model):
        return (("aux", self.stage), ("dom", self.stage))

    def propagate(self, s):
        i = self.stage
        src = s.aux[i]
        if src is UNBOUND:
            return True
        dom = s.dom[i]
        kept = s.spec.nondominated_values(src[0], i, dom)
        if len(kept) != len(dom):
            s.set_domain(i, tuple(kept))
        return bool(kept)


class ObjectiveBound(Constraint):
    """Fails when the best completion of stage ``i`` cannot beat the incumbent."""

    name = "objective-bound"

    def __init__(self, stage):
        self.stage = stage

    def watches(self, model):
        return (("aux", self.stage),)

    def propagate(self, s):
        src = s.aux[self.stage]
        if src is UNBOUND or s.bound is None:
            return True
        state, acc = src
        return acc + s.spec.optimistic_bound(state, self.stage) >= s.bound


class CpModel:
    """Variables, domains and constraints derived from a DP model."""

    def __init__(self, spec: DpSpec, order: str = "default"):
        self.spec = spec
        self.n = spec.n_stages
        self.domains = [()] + [tuple(spec.control_domain(i)) for i in range(1, self.n + 1)]
        cons: list[Constraint] = [InitialState(spec)]
        cons += [Transition(i) for i in range(1, self.n + 1)]
        cons += [Validity(i) for i in range(1, self.n + 1)]
        if spec.use_dominance:
            cons += [Dominance(i) for i in range(1, self.n + 1)]
        cons += [ObjectiveBound(i) for i in range(1, self.n + 2)]
        if order == "reversed":
            cons.reverse()
        elif order != "default":
            raise ValueError(f"unknown constraint order {order!r}")
        self.constraints = cons
        self.dom_watchers = [[] for _ in range(self.n + 2)]
        self.aux_watchers = [[] for _ in range(self.n + 2)]
        for c in cons:
            for kind, idx in c.watches(self):
                (self.dom_watchers if kind == "dom" else self.aux_watchers)[idx].append(c)
        self.bound_watchers = [c for c in cons if isinstance(c, ObjectiveBound)]

    @property
    def n_decision(self) -> int:
        return self.n

    @property
    def n_auxiliary(self) -> int:
        return self.n + 1


def encode(spec: DpSpec, order: str = "default") -> CpModel:
    return CpModel(spec, order)


class SolverState:
    """Domains, bound auxiliary states and the undo trail of one search."""

    def __init__(self, model: CpModel):
        self.model = model
        self.spec = model.spec
        n = model.n
        self.dom = list(model.domains)
        self.aux = [UNBOUND] * (n + 2)
        self.trail: list[tuple[str, int, object]] = []
        self.markers: list[int] = []
        self.queue: deque = deque()
        self.queued: set = set()
        # objective a new solution must reach (incumbent + improvement step)
        self.bound: float | None = None
        self._wake_all()

    def _wake_all(self):
        for c in self.model.constraints:
            self._enqueue(c)

    def _enqueue(self, c):
        if id(c) not in self.queued:
            self.queued.add(id(c))
            self.queue.append(c)

    def set_domain(self, i: int, values: tuple) -> None:
        old = self.dom[i]
        if values == old:
            return
        self.trail.append(("dom", i, old))
        self.dom[i] = values
        for c in self.model.dom_watchers[i]:
            self._enqueue(c)

    def bind_aux(self, i: int, value) -> None:
        self.trail.append(("aux", i, self.aux[i]))
        self.aux[i] = value
        for c in self.model.aux_watchers[i]:
            self._enqueue(c)

    def propagate(self) -> bool:
        """Run to a fix-point; False on failure (empty domain, bound)."""
        queue, queued = self.queue, self.queued
        while queue:
            c = queue.popleft()
            queued.discard(id(c))
            if not c.propagate(self):
                queue.clear()
                queued.clear()
                return False
        return True

    def post_bound(self, objective: float) -> None:
        """Require later solutions to beat ``objective`` by the improvement step."""
        self.bound = objective + self.spec.improvement_eps
        for c in self.model.bound_watchers:
            self._enqueue(c)

    def push(self) -> None:
        self.markers.append(len(self.trail))

    def pop(self) -> None:
        mark = self.markers.pop()
        trail = self.trail
        while len(trail) > mark:
            kind, i, old = trail.pop()
            if kind == "dom":
                self.dom[i] = old
            else:
                self.aux[i] = old
        self.queue.clear()
        self.queued.clear()

    def assign(self, i: int, value) -> None:
        self.set_domain(i, (value,))

    def first_open(self) -> int:
        """First stage whose decision is not fixed, or n + 1 at a leaf."""
        dom = self.dom
        for i in range(1, self.model.n + 1):
            if len(dom[i]) != 1 or self.aux[i + 1] is UNBOUND:
                return i
        return self.model.n + 1

    def leaf_objective(self) -> float:
        state, acc = self.aux[self.model.n + 1]
        return acc + self.spec.terminal_adjustment(state)

    def assignment(self) -> tuple:
        return tuple(self.dom[i][0] for i in range(1, self.model.n + 1))

    def snapshot(self):
        return list(self.dom), list(self.aux)


def fixpoint_from_scratch(model: CpModel, prefix) -> tuple[list, list] | None:
    """Domains after assigning ``prefix`` (values of stages 1..k) on a fresh
    state; None when propagation fails. Used to check the trail."""
    s = SolverState(model)
    if not s.propagate():
        return None
    for i, v in enumerate(prefix, start=1):
        if v not in s.dom[i]:
            return None
        s.assign(i, v)
        if not s.propagate():
            return None
    return s.snapshot()


def worst_case_nodes(model: CpModel) -> int:
    return math.prod(len(d) for d in model.domains[1:])
