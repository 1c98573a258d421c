"""Permutation-equivariant encoders and Q / actor-critic heads.

All forward functions take batched inputs: node features ``(B, n, F)``,
edge features ``(B, n, n, 1)`` and masks ``(B, A)``. Unbatched inputs are
promoted to a batch of one.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor

MASK_PENALTY = -1e9


@dataclass(frozen=True)
class NetworkConfig:
    encoder: str = "graph"  # "graph" or "set"
    in_features: int = 6
    layers: int = 4
    embed_dim: int = 16
    hidden_layers: int = 2
    hidden_dim: int = 32
    head: str = "q"  # "q" or "actor-critic"
    # "node": one output per node (TSPTW customers), "fixed": n_actions
    # outputs read from the focus row (PORT item under decision)
    action_mode: str = "node"
    n_actions: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.encoder not in ("graph", "set"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.head not in ("q", "actor-critic"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.action_mode not in ("node", "fixed"):
            raise ValueError(f"unknown action mode {self.action_mode!r}")
        dims = (self.in_features, self.layers, self.embed_dim, self.hidden_layers, self.hidden_dim)
        if min(dims) < 1:
            raise ValueError("all network dimensions must be positive")
        if self.action_mode == "fixed" and self.n_actions < 1:
            raise ValueError("fixed action mode needs n_actions")

    def to_dict(self):
        return asdict(self)


def tsptw_config(**kw) -> NetworkConfig:
    return NetworkConfig(**{"encoder": "graph", "in_features": 6, "layers": 4, **kw})


def port_config(**kw) -> NetworkConfig:
    return NetworkConfig(**{"encoder": "set", "in_features": 9, "layers": 2,
                            "action_mode": "fixed", "n_actions": 2, **kw})


def layout(config: NetworkConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered parameter names and shapes."""
    D, H = config.embed_dim, config.hidden_dim
    out = [("enc.in.W", (config.in_features, D)), ("enc.in.b", (D,))]
    for l in range(config.layers):
        for name in ("Wq", "Wk", "Wv", "Ws"):
            out.append((f"enc.{l}.{name}", (D, D)))
        out.append((f"enc.{l}.b", (D,)))
        if config.encoder == "graph":
            out.append((f"enc.{l}.we", (1,)))
    n_out = 1 if config.action_mode == "node" else config.n_actions
    out += _mlp_layout("head", 2 * D, H, config.hidden_layers, n_out)
    if config.head == "actor-critic":
        out += _mlp_layout("critic", D, H, config.hidden_layers, 1)
    return out


def _mlp_layout(prefix, n_in, hidden, n_hidden, n_out):
    dims = [n_in] + [hidden] * n_hidden + [n_out]
    res = []
    for k, (a, b) in enumerate(zip(dims, dims[1:])):
        res.append((f"{prefix}.{k}.W", (a, b)))
        res.append((f"{prefix}.{k}.b", (b,)))
    return res


class WeightVector:
    """Named parameter tensors of one network."""

    def __init__(self, config: NetworkConfig, arrays: "OrderedDict[str, np.ndarray]"):
        self.config = config
        self.params: OrderedDict[str, Tensor] = OrderedDict(
            (k, Tensor(np.asarray(v, dtype=config.dtype), name=k)) for k, v in arrays.items()
        )

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    @property
    def count(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, t.data) for k, t in self.params.items())

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self.params.values()])

    def set_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for t in self.params.values():
            size = t.data.size
            t.data = vec[pos:pos + size].reshape(t.data.shape).astype(t.data.dtype)
            pos += size

    def copy(self) -> "WeightVector":
        return WeightVector(self.config, OrderedDict((k, v.copy()) for k, v in self.arrays().items()))


def init_weights(config: NetworkConfig, seed: int | None = 0) -> WeightVector:
    """Uniform fan-in initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    rng = np.random.default_rng(seed)
    arrays = OrderedDict()
    for name, shape in layout(config):
        if name.endswith(".we"):
            fan_in = 1
        elif len(shape) == 2:
            fan_in = shape[0]
        else:
            # biases take the fan-in of the matrix they follow
            fan_in = arrays[name[:-1] + "W"].shape[0] if name[:-1] + "W" in arrays else config.embed_dim
        bound = 1.0 / math.sqrt(fan_in)
        arrays[name] = rng.uniform(-bound, bound, size=shape)
    return WeightVector(config, arrays)


def _batch(x, ndim):
    x = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=float)
    return x[None] if x.ndim == ndim - 1 else x


def _attention_layers(h: Tensor, w: WeightVector, edge_bias_src=None) -> Tensor:
    D = w.config.embed_dim
    scale = 1.0 / math.sqrt(D)
    for l in range(w.config.layers):
        p = f"enc.{l}."
        q = h @ w[p + "Wq"]
        k = h @ w[p + "Wk"]
        v = h @ w[p + "Wv"]
        logits = (q @ ag.transpose(k)) * scale
        if edge_bias_src is not None:
            logits = logits + edge_bias_src * w[p + "we"]
        att = ag.softmax(logits, axis=-1)
        h = ag.relu(h @ w[p + "Ws"] + att @ v + w[p + "b"])
    return h


def encode_graph(nodes, edges, w: WeightVector) -> Tensor:
    """Node embeddings ``(B, n, D)``; attention logits get a learned multiple
    of the edge feature."""
    x = _batch(nodes, 3)
    e = _batch(edges, 4)
    if e.shape[:3] != (x.shape[0], x.shape[1], x.shape[1]):
        raise ValueError(f"edge tensor {e.shape} does not match nodes {x.shape}")
    if x.shape[-1] != w.config.in_features:
        raise ValueError(f"expected {w.config.in_features} node features, got {x.shape[-1]}")
    dt = w.config.dtype
    h = ag.relu(Tensor(x.astype(dt)) @ w["enc.in.W"] + w["enc.in.b"])
    return _attention_layers(h, w, Tensor(e[..., 0].astype(dt)))


def encode_set(items, w: WeightVector) -> Tensor:
    """Item embeddings ``(B, n, D)`` from self-attention without positions."""
    x = _batch(items, 3)
    if x.shape[-1] != w.config.in_features:
        raise ValueError(f"expected {w.config.in_features} item features, got {x.shape[-1]}")
    h = ag.relu(Tensor(x.astype(w.config.dtype)) @ w["enc.in.W"] + w["enc.in.b"])
    return _attention_layers(h, w)


def encode(obs, w: WeightVector) -> Tensor:
    if w.config.encoder == "graph":
        return encode_graph(obs.nodes, obs.edges, w)
    return encode_set(obs.nodes, w)


def pool(emb: Tensor) -> Tensor:
    """Max pooling over the node axis."""
    return ag.tmax(emb, axis=-2)


def _mlp(x: Tensor, w: WeightVector, prefix: str) -> Tensor:
    n_layers = w.config.hidden_layers + 1
    for k in range(n_layers):
        x = x @ w[f"{prefix}.{k}.W"] + w[f"{prefix}.{k}.b"]
        if k < n_layers - 1:
            x = ag.relu(x)
    return x


def head_logits(emb: Tensor, w: WeightVector, focus=None) -> Tensor:
    """Raw per-action head output ``(B, A)`` before masking."""
    B, n, D = emb.shape
    pooled = pool(emb)
    if w.config.action_mode == "node":
        ctx = ag.broadcast_to(_expand(pooled), (B, n, D))
        z = ag.concat([emb, ctx], axis=-1)
        return ag.take(_mlp(z, w, "head"), np.zeros((B, n), dtype=int), axis=2)
    if focus is None:
        raise ValueError("fixed action mode needs the focus row")
    row = ag.take(emb, np.asarray(focus).reshape(B), axis=1)
    return _mlp(ag.concat([row, pooled], axis=-1), w, "head")


def _expand(pooled: Tensor) -> Tensor:
    # (B, D) -> (B, 1, D) as a differentiable reshape
    src = pooled.data.shape
    return ag._make(pooled.data[:, None, :], (pooled,), lambda g: (g.reshape(src),))


def _mask_batch(mask, B):
    m = np.asarray(mask, dtype=bool)
    return np.broadcast_to(m[None] if m.ndim == 1 else m, (B, m.shape[-1]))


def q_forward(emb: Tensor, mask, w: WeightVector, focus=None, strict: bool = True):
    """Q-values ``(B, A)``; returns ``(q_tensor, q_masked)`` where
    ``q_masked`` is a numpy copy with ``-inf`` on masked actions."""
    q = head_logits(emb, w, focus)
    m = _mask_batch(mask, q.shape[0])
    if strict and not m.any(axis=-1).all():
        raise ValueError("all actions masked on a non-terminal query")
    return q, np.where(m, q.data, -np.inf)


def policy_forward(emb: Tensor, mask, w: WeightVector, tau: float = 1.0, focus=None):
    """Masked Boltzmann policy and critic value.

    Returns ``(log_probs, probs, value)``: ``log_probs`` and ``value`` are
    differentiable tensors, ``probs`` a float64 array with exact zeros on
    masked actions.
    """
    if not tau > 0:
        raise ValueError("temperature must be positive")
    if w.config.head != "actor-critic":
        raise ValueError("policy_forward needs an actor-critic network")
    logits = head_logits(emb, w, focus)
    m = _mask_batch(mask, logits.shape[0])
    if not m.any(axis=-1).all():
        raise ValueError("all actions masked on a non-terminal query")
    bias = np.where(m, 0.0, MASK_PENALTY)
    logp = ag.log_softmax(logits * (1.0 / tau), axis=-1, bias=bias)
    probs = np.where(m, np.exp(logp.data.astype(np.float64)), 0.0)
    probs = probs / probs.sum(axis=-1, keepdims=True)
    value = _mlp(pool(emb), w, "critic")
    value = ag.take(value, np.zeros(value.shape[0], dtype=int), axis=1)
    return logp, probs, value


def backward(loss: Tensor, w: WeightVector) -> "OrderedDict[str, np.ndarray]":
    """Gradient of a scalar loss for every parameter of ``w``."""
    names = list(w.params)
    grads = ag.grad(loss, [w.params[k] for k in names])
    return OrderedDict(zip(names, grads))
