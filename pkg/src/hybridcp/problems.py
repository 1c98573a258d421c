"""Registry tying each problem to its generator, DP model and network shape."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

from . import portfolio, tsptw
from .env import ShapingConfig
from .nn.networks import NetworkConfig, port_config, tsptw_config


@dataclass(frozen=True)
class Problem:
    name: str
    generate: Callable  # (n, seed) -> instance
    spec: Callable  # instance -> DpSpec
    network: Callable[..., NetworkConfig]
    shaping: ShapingConfig
    mode: str | None = None


def get_problem(name: str, mode: str = "continuous") -> Problem:
    if name == "tsptw":
        return Problem("tsptw", lambda n, seed: tsptw.generate(n, seed=seed), tsptw.dp_spec,
                       tsptw_config, ShapingConfig())
    if name == "port":
        if mode not in ("continuous", "discrete"):
            raise ValueError(f"unknown portfolio mode {mode!r}")
        # every portfolio episode is feasible, so only the scaling applies
        return Problem("port", lambda n, seed: portfolio.generate(n, seed=seed, mode=mode),
                       portfolio.dp_spec, port_config, ShapingConfig(use_feasibility_bonus=False), mode)
    raise ValueError(f"unknown problem {name!r}")


def load_instance(source):
    """Instance from a JSON string, dict or file path."""
    if isinstance(source, dict):
        data = source
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        data = json.loads(text)
    kind = data.get("problem")
    if kind == "tsptw":
        return tsptw.TsptwInstance.from_json(data)
    if kind == "port":
        return portfolio.PortInstance.from_json(data)
    raise ValueError(f"unknown problem {kind!r} in instance file")


def problem_of(instance) -> Problem:
    if isinstance(instance, tsptw.TsptwInstance):
        return get_problem("tsptw")
    return get_problem("port", instance.mode)
