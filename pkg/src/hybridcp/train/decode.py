"""Stand-alone decoders: greedy rollouts and beam search over a network."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dp import ContractViolation, DpSpec
from ..env import ShapingConfig, reset, step
from ..nn import WeightVector, encode, no_grad, policy_forward, q_forward, stack


@dataclass(frozen=True)
class DecodeResult:
    assignment: tuple[int, ...]
    objective: float | None  # raw objective, None when a dead end was hit
    shaped_return: float

    @property
    def feasible(self) -> bool:
        return self.objective is not None


def network_scores(w: WeightVector, observations, tau: float = 1.0) -> np.ndarray:
    """Masked scores ``(B, A)`` of a batch of same-size observations:
    Q-values (``-inf`` when masked) or policy probabilities (0 when masked)."""
    batch = stack(observations)
    with no_grad():
        emb = encode(batch, w)
        if w.config.head == "q":
            return q_forward(emb, batch.mask, w, focus=batch.focus)[1]
        return policy_forward(emb, batch.mask, w, tau, focus=batch.focus)[1]


def _weights(model) -> WeightVector:
    return model if isinstance(model, WeightVector) else model.weights


def greedy_decode_batch(model, specs, shaping: ShapingConfig = ShapingConfig()) -> list[DecodeResult]:
    """Greedy decoding of many instances, one network call per stage and size.

    Ties go to the lowest action index.
    """
    w = _weights(model)
    specs = list(specs)
    out: list[DecodeResult | None] = [None] * len(specs)
    groups: dict[tuple, list[int]] = {}
    for k, spec in enumerate(specs):
        groups.setdefault((spec.action_count, spec.n_stages), []).append(k)
    for idx in groups.values():
        states = {k: reset(specs[k]) for k in idx}
        raw = {k: 0 for k in idx}
        shp = {k: 0.0 for k in idx}
        chosen = {k: [] for k in idx}
        active = [k for k in idx if not states[k].terminal]
        while active:
            obs = [specs[k].observe(states[k].dp_state, states[k].stage) for k in active]
            scores = network_scores(w, obs)
            for row, k in enumerate(active):
                a = int(np.argmax(scores[row]))
                v = specs[k].index_value(a)
                if not obs[row].mask[a]:
                    raise ContractViolation(f"greedy decode picked masked action {v}")
                states[k], r_shaped, _, r_raw = step(states[k], v, shaping)
                raw[k] += r_raw
                shp[k] += r_shaped
                chosen[k].append(v)
            active = [k for k in active if not states[k].terminal]
        for k in idx:
            done = states[k].stage > specs[k].n_stages
            out[k] = DecodeResult(tuple(chosen[k]), raw[k] if done else None, shp[k])
    return out


def greedy_decode(model, spec: DpSpec, shaping: ShapingConfig = ShapingConfig()) -> DecodeResult:
    return greedy_decode_batch(model, [spec], shaping)[0]


def beam_decode(model, spec: DpSpec, width: int = 64, shaping: ShapingConfig = ShapingConfig()) -> DecodeResult:
    """Beam search ranked by cumulative log-probability of a policy network.

    Returns the best complete solution by raw objective (ties to the higher
    log-probability, then the smaller sequence), or an infeasible result.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    w = _weights(model)
    if w.config.head != "actor-critic":
        raise ValueError("beam search needs a policy (actor-critic) checkpoint")
    # beam entries: (logp, values, rl_state, raw, shaped)
    beam = [(0.0, (), reset(spec), 0, 0.0)]
    complete = []
    while beam:
        live = [e for e in beam if not e[2].terminal]
        for e in beam:
            if e[2].terminal and e[2].stage > spec.n_stages:
                complete.append(e)
        if not live:
            break
        obs = [spec.observe(e[2].dp_state, e[2].stage) for e in live]
        probs = network_scores(w, obs)
        children = []
        for row, (lp, vals, st, raw, shp) in enumerate(live):
            for v in st.feasible:
                p = probs[row, spec.action_index(v)]
                if not obs[row].mask[spec.action_index(v)]:
                    raise ContractViolation(f"beam search expanded masked action {v}")
                children.append((lp + (math.log(p) if p > 0 else -math.inf), vals + (v,), st, raw, shp, v))
        children.sort(key=lambda c: (-c[0], c[1]))
        beam = []
        for lp, vals, st, raw, shp, v in children[:width]:
            nxt, r_shaped, _, r_raw = step(st, v, shaping)
            beam.append((lp, vals, nxt, raw + r_raw, shp + r_shaped))
    if not complete:
        return DecodeResult((), None, 0.0)
    best = min(complete, key=lambda e: (-e[3], -e[0], e[1]))
    return DecodeResult(best[1], best[3], best[4])
