"""JSON checkpoint container.

Layout::

    {"format": "hybridcp-checkpoint", "version": 1,
     "config": {...NetworkConfig...}, "seed": int,
     "tensors": {name: {"shape": [...], "data": [...]}},
     "meta": {"episode": int, "validation": float, ...},
     "optimizer": {...} | null}

Floats are written with ``repr`` precision, so a save/load round trip is
exact and identical weights give identical files.
"""
from __future__ import annotations

import hashlib
import json
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .networks import NetworkConfig, WeightVector, layout

FORMAT = "hybridcp-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    weights: WeightVector
    seed: int | None = None
    meta: dict = field(default_factory=dict)
    optimizer: dict | None = None

    @property
    def config(self) -> NetworkConfig:
        return self.weights.config

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "config": self.config.to_dict(),
            "seed": self.seed,
            "tensors": {
                k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                for k, v in self.weights.arrays().items()
            },
            "meta": self.meta,
            "optimizer": self.optimizer,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path

    @classmethod
    def from_dict(cls, data: dict) -> "Checkpoint":
        if data.get("format") != FORMAT:
            raise ValueError("not a checkpoint file")
        if data.get("version") != VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')}")
        config = NetworkConfig(**data["config"])
        tensors = data["tensors"]
        names = [k for k, _ in layout(config)]
        if sorted(names) != sorted(tensors):
            raise ValueError("checkpoint tensors do not match the network layout")
        # files store tensors sorted by name; rebuild in layout order
        arrays = OrderedDict(
            (k, np.asarray(tensors[k]["data"], dtype=config.dtype).reshape(tensors[k]["shape"]))
            for k in names
        )
        return cls(WeightVector(config, arrays), data.get("seed"), data.get("meta", {}), data.get("optimizer"))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_dict(json.loads(Path(path).read_text()))
