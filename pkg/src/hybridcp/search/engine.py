"""Complete tree searches over a :class:`CpModel`.

All three searches branch on decision variables in stage order and share
the same node routine: propagate, stop at a leaf, otherwise ask the
heuristic (through the cache) for an ordering of the current domain.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..dp import ContractViolation
from .heuristics import Cache, Heuristic
from .model import CpModel, SolverState


@dataclass
class SearchStats:
    nodes: int = 0  # branching nodes
    failures: int = 0  # propagation failures
    solutions: int = 0
    heuristic_calls: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    restarts: int = 0
    iterations: int = 0


@dataclass
class SearchResult:
    objective: float | None
    assignment: tuple | None
    proven_optimal: bool
    stats: SearchStats
    incumbents: list = field(default_factory=list)
    wall_time: float = 0.0
    timed_out: bool = False

    @property
    def feasible(self) -> bool:
        return self.assignment is not None

    def to_record(self, **extra) -> dict:
        rec = {
            "objective": self.objective,
            "feasible": self.feasible,
            "proven_optimal": self.proven_optimal,
            "assignment": list(self.assignment) if self.assignment is not None else None,
            "nodes": self.stats.nodes,
            "failures": self.stats.failures,
            "solutions": self.stats.solutions,
            "heuristic_calls": self.stats.heuristic_calls,
            "cache_hits": self.stats.cache_hits,
            "cache_misses": self.stats.cache_misses,
            "wall_time": self.wall_time,
            "timed_out": self.timed_out,
        }
        rec.update(extra)
        return rec


class _Abort(Exception):
    pass


class _Timeout(_Abort):
    pass


class _FailLimit(_Abort):
    pass


class _Search:
    """State shared by the searches: incumbent, cache, counters, deadline."""

    def __init__(self, model: CpModel, heuristic: Heuristic, cache: Cache | None, deadline: float | None):
        self.model = model
        self.spec = model.spec
        self.heuristic = heuristic
        self.cache = cache
        self.deadline = deadline
        self.stats = SearchStats()
        self.best_obj: float | None = None
        self.best_assignment: tuple | None = None
        self.incumbents: list[float] = []
        self.fail_limit: int | None = None
        self._fails_this_run = 0

    # -- plumbing -------------------------------------------------------

    def new_state(self) -> SolverState:
        s = SolverState(self.model)
        if self.best_obj is not None:
            s.post_bound(self.best_obj)
        return s

    def tick(self):
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Timeout()

    def fail(self):
        self.stats.failures += 1
        self._fails_this_run += 1
        if self.fail_limit is not None and self._fails_this_run >= self.fail_limit:
            raise _FailLimit()

    def scores(self, s: SolverState, i: int) -> np.ndarray:
        state = s.aux[i][0]
        spec, h = self.spec, self.heuristic
        if self.cache is None:
            self.stats.heuristic_calls += 1
            return h.scores(spec, state, i)

        def compute():
            self.stats.heuristic_calls += 1
            return h.scores(spec, state, i)

        return self.cache.get_or_compute(spec.observation_key(state, i), compute)

    def record_leaf(self, s: SolverState) -> None:
        obj = s.leaf_objective()
        if self.best_obj is None or obj >= self.best_obj + self.spec.improvement_eps:
            self.best_obj = obj
            self.best_assignment = s.assignment()
            self.incumbents.append(obj)
            self.stats.solutions += 1
            s.post_bound(obj)

    def node_still_open(self, s: SolverState, i: int) -> bool:
        """Re-check the objective bound of the current node after new incumbents."""
        if s.bound is None:
            return True
        state, acc = s.aux[i]
        return acc + self.spec.optimistic_bound(state, i) >= s.bound

    def ordered_values(self, s: SolverState, i: int) -> list[int]:
        values = s.dom[i]
        sc = self.scores(s, i)
        order = self.heuristic.rank(self.spec, sc, values)
        _check_mask(self.spec, s, i, order)
        return order

    def result(self, proven: bool, t0: float, timed_out: bool = False) -> SearchResult:
        if self.cache is not None:
            self.stats.cache_hits = self.cache.hits
            self.stats.cache_misses = self.cache.misses
        return SearchResult(
            objective=self.best_obj,
            assignment=self.best_assignment,
            proven_optimal=proven,
            stats=self.stats,
            incumbents=list(self.incumbents),
            wall_time=time.monotonic() - t0,
            timed_out=timed_out,
        )


def _check_mask(spec, s: SolverState, i: int, values) -> None:
    # every branched value must be feasible for the DP at this node
    feasible = set(spec.filter_controls(s.aux[i][0], i, spec.control_domain(i)))
    for v in values:
        if v not in feasible:
            raise ContractViolation(f"value {v} branched at stage {i} violates the action mask")


def _deadline(timeout: float | None) -> float | None:
    return None if timeout is None else time.monotonic() + timeout


# -- branch and bound ------------------------------------------------------


def _dfs(run: _Search, s: SolverState) -> None:
    run.tick()
    if not s.propagate():
        run.fail()
        return
    i = s.first_open()
    if i > run.model.n:
        run.record_leaf(s)
        return
    run.stats.nodes += 1
    bound_seen = s.bound
    for v in run.ordered_values(s, i):
        if s.bound != bound_seen:
            bound_seen = s.bound
            if not run.node_still_open(s, i):
                run.fail()
                return
        s.push()
        s.assign(i, v)
        try:
            _dfs(run, s)
        finally:
            s.pop()


def search_bab(model: CpModel, heuristic: Heuristic, cache: Cache | None = None,
               timeout: float | None = None) -> SearchResult:
    """Depth-first branch-and-bound; proven optimal iff the tree is exhausted."""
    t0 = time.monotonic()
    run = _Search(model, heuristic, cache, _deadline(timeout))
    try:
        _dfs(run, run.new_state())
    except _Timeout:
        return run.result(False, t0, timed_out=True)
    return run.result(True, t0)


# -- iterative limited discrepancy search ----------------------------------


def _lds(run: _Search, s: SolverState, budget: int, flags: dict) -> None:
    run.tick()
    if not s.propagate():
        run.fail()
        return
    i = s.first_open()
    if i > run.model.n:
        run.record_leaf(s)
        return
    run.stats.nodes += 1
    bound_seen = s.bound
    order = run.ordered_values(s, i)
    for k, v in enumerate(order):
        cost = 0 if k == 0 else 1
        if cost > budget:
            flags["limited"] = True
            return
        if s.bound != bound_seen:
            bound_seen = s.bound
            if not run.node_still_open(s, i):
                run.fail()
                return
        s.push()
        s.assign(i, v)
        try:
            _lds(run, s, budget - cost, flags)
        finally:
            s.pop()


def search_ilds(model: CpModel, heuristic: Heuristic, max_discrepancies: int,
                cache: Cache | None = None, timeout: float | None = None) -> SearchResult:
    """Runs discrepancy-limited searches for limits 0..I, keeping the best
    solution; stops early once a run never hit its limit (a complete proof)."""
    if max_discrepancies < 0:
        raise ValueError("the discrepancy threshold must be >= 0")
    t0 = time.monotonic()
    run = _Search(model, heuristic, cache, _deadline(timeout))
    try:
        for limit in range(max_discrepancies + 1):
            run.stats.iterations += 1
            flags = {"limited": False}
            _lds(run, run.new_state(), limit, flags)
            if not flags["limited"]:
                return run.result(True, t0)
    except _Timeout:
        return run.result(False, t0, timed_out=True)
    return run.result(False, t0)


# -- restart-based search ---------------------------------------------------


def luby(i: int) -> int:
    """i-th term (1-based) of the Luby sequence 1,1,2,1,1,2,4,..."""
    if i < 1:
        raise ValueError("the Luby sequence starts at index 1")
    while True:
        k = i.bit_length()
        if i == (1 << k) - 1:
            return 1 << (k - 1)
        i -= (1 << (k - 1)) - 1


def sample_order(spec, probs: np.ndarray, values, tau: float, rng: np.random.Generator) -> list[int]:
    """Sample an ordering of ``values`` without replacement from the policy
    sharpened by ``tau`` (Gumbel top-k on log p / tau)."""
    off = spec.value_offset
    with np.errstate(divide="ignore"):
        logits = np.log(np.asarray([probs[v - off] for v in values], dtype=float)) / tau
    keys = logits + rng.gumbel(size=len(values))
    # ties (e.g. -inf keys) fall back to the value order
    return [v for _, v in sorted(zip(-keys, values), key=lambda kv: (kv[0], kv[1]))]


def _rbs_dfs(run: _Search, s: SolverState, tau: float, rng) -> None:
    run.tick()
    if not s.propagate():
        run.fail()
        return
    i = s.first_open()
    if i > run.model.n:
        run.record_leaf(s)
        return
    run.stats.nodes += 1
    values = s.dom[i]
    probs = run.scores(s, i)
    order = sample_order(run.spec, probs, values, tau, rng)
    _check_mask(run.spec, s, i, order)
    bound_seen = s.bound
    for v in order:
        if s.bound != bound_seen:
            bound_seen = s.bound
            if not run.node_still_open(s, i):
                run.fail()
                return
        s.push()
        s.assign(i, v)
        try:
            _rbs_dfs(run, s, tau, rng)
        finally:
            s.pop()


def search_rbs(model: CpModel, heuristic: Heuristic, restarts: int, luby_scale: int = 1,
               tau: float = 1.0, seed: int = 0, cache: Cache | None = None,
               timeout: float | None = None) -> SearchResult:
    """Luby-scheduled restarts of a randomized branch-and-bound.

    Restart ``i`` stops after ``luby_scale * luby(i)`` failures. The
    incumbent and its bound carry over between restarts. A restart that
    exhausts its tree proves optimality.
    """
    if restarts < 1 or luby_scale < 1 or not tau > 0:
        raise ValueError("need restarts >= 1, luby_scale >= 1 and tau > 0")
    t0 = time.monotonic()
    run = _Search(model, heuristic, cache, _deadline(timeout))
    try:
        for i in range(1, restarts + 1):
            run.stats.restarts += 1
            run.fail_limit = luby_scale * luby(i)
            run._fails_this_run = 0
            rng = np.random.default_rng([seed, i])
            try:
                _rbs_dfs(run, run.new_state(), tau, rng)
            except _FailLimit:
                continue
            return run.result(True, t0)
    except _Timeout:
        return run.result(False, t0, timed_out=True)
    return run.result(False, t0)
