from __future__ import annotations

import numpy as np

from .networks import WeightVector


class Adam:
    def __init__(self, w: WeightVector, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, clip_norm=None):
        self.w = w
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {k: np.zeros_like(t.data) for k, t in w.params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in w.params.items()}

    def step(self, grads):
        if self.clip_norm is not None:
            norm = np.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
            if norm > self.clip_norm:
                grads = {k: g * (self.clip_norm / norm) for k, g in grads.items()}
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            m = self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            v = self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p = self.w.params[k]
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        return {
            "t": self.t,
            "m": {k: v.tolist() for k, v in self.m.items()},
            "v": {k: v.tolist() for k, v in self.v.items()},
        }

    def load_state_dict(self, state):
        self.t = int(state["t"])
        for k in self.m:
            self.m[k] = np.asarray(state["m"][k], dtype=self.m[k].dtype).reshape(self.m[k].shape)
            self.v[k] = np.asarray(state["v"][k], dtype=self.v[k].dtype).reshape(self.v[k].shape)
