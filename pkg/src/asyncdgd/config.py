"""Experiment configuration (JSON, schema version 1) and reference presets.

Agent ids, edges and the arbiter are 1-based in config files.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .algo import schedule_from_dict
from .channel import REFERENCE_CROSSOVER, REFERENCE_TRANSITION


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AgentsSpec(_Model):
    count: int = Field(ge=1)
    # Optimize mode: per-agent block sizes (an int means all equal).
    # Consensus mode: the shared decision dimension.
    dims: Union[int, list[int]]


class GenerateTopologies(_Model):
    count: int = Field(4, ge=1)
    edges_per_graph: int = Field(8, ge=1)
    seed: Optional[int] = Field(None, ge=0)


class TopologiesSpec(_Model):
    edges: Optional[list[list[tuple[int, int]]]] = None
    generate: Optional[GenerateTopologies] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.edges is None) == (self.generate is None):
            raise ValueError("give exactly one of 'edges' or 'generate'")
        return self


class SwitchingSpec(_Model):
    probabilities: Optional[list[float]] = None


class ChannelSpec(_Model):
    transition: list[list[float]]
    crossover: list[float]


class EdgeChannelSpec(ChannelSpec):
    edge: tuple[int, int]


class ChannelsSpec(_Model):
    default: ChannelSpec = ChannelSpec(transition=REFERENCE_TRANSITION, crossover=REFERENCE_CROSSOVER)
    per_edge: list[EdgeChannelSpec] = []


class SampleTickRatios(_Model):
    low: float = Field(0.2, gt=0, le=1)
    high: float = Field(1.0, gt=0, le=1)
    max_denominator: int = Field(20, ge=1)


class TickRatiosSpec(_Model):
    values: Optional[list[tuple[int, int]]] = None
    sample: Optional[SampleTickRatios] = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.values is not None and self.sample is not None:
            raise ValueError("give at most one of 'values' or 'sample'")
        return self


class ObjectiveSpec(_Model):
    kind: Literal["laplacian", "consensus_quadratic"]
    perturbation: float = Field(0.1, gt=0)
    instance: Optional[dict] = None
    shift: float = Field(0.1, gt=0)
    scale: Optional[float] = Field(None, gt=0)
    seed: Optional[int] = Field(None, ge=0)


class InitSpec(_Model):
    kind: Literal["annulus", "ball", "explicit"]
    inner: float = Field(0.0, ge=0)
    outer: float = Field(1.0, gt=0)
    radius: float = Field(1.0, gt=0)
    values: Optional[list[list[float]]] = None


class TraceSpec(_Model):
    estimates: Literal["full", "norms"] = "full"


class SimConfig(_Model):
    schema_version: Literal[1] = 1
    mode: Literal["optimize", "consensus"]
    agents: AgentsSpec
    topologies: TopologiesSpec
    switching: SwitchingSpec = SwitchingSpec()
    channels: ChannelsSpec = ChannelsSpec()
    tick_ratios: TickRatiosSpec = TickRatiosSpec()
    schedule: dict
    objective: ObjectiveSpec
    init: InitSpec
    horizon: int = Field(ge=1)
    seed: int = Field(ge=0)
    noise_mode: Literal["shared", "per_agent"] = "shared"
    error_amplitude: float = Field(0.0, ge=0)
    guard: float = Field(1e9, gt=0)
    arbiter: int = Field(1, ge=1)
    relaxed_protocol: bool = False
    trace: TraceSpec = TraceSpec()

    @model_validator(mode="after")
    def _consistent(self):
        D = self.agents.count
        if self.relaxed_protocol:
            raise ValueError("relaxed_protocol: the send-on-change protocol is not implemented")
        try:
            schedule_from_dict(self.schedule)
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"schedule: {exc}") from None
        dims = self.agents.dims
        if isinstance(dims, list):
            if len(dims) != D or min(dims) < 1:
                raise ValueError("agents.dims must list one positive size per agent")
        elif dims < 1:
            raise ValueError("agents.dims must be positive")
        if self.mode == "optimize":
            if self.objective.kind != "laplacian":
                raise ValueError("optimize mode needs the 'laplacian' objective")
            if isinstance(dims, list) and len(set(dims)) != 1:
                raise ValueError("the laplacian objective needs equal agent dimensions")
        else:
            if self.objective.kind != "consensus_quadratic":
                raise ValueError("consensus mode needs the 'consensus_quadratic' objective")
            if isinstance(dims, list):
                raise ValueError("consensus mode takes a single shared dimension in agents.dims")
            if self.arbiter > D:
                raise ValueError(f"arbiter {self.arbiter} is not an agent id (1..{D})")
        if self.topologies.edges is not None:
            for k, graph in enumerate(self.topologies.edges):
                for e in graph:
                    if not all(1 <= v <= D for v in e):
                        raise ValueError(f"topologies.edges[{k}]: edge {list(e)} outside 1..{D}")
        n_topo = (len(self.topologies.edges) if self.topologies.edges is not None
                  else self.topologies.generate.count)
        probs = self.switching.probabilities
        if probs is not None:
            if len(probs) != n_topo or min(probs) < 0 or abs(sum(probs) - 1) > 1e-12:
                raise ValueError("switching.probabilities must be one non-negative weight per "
                                 "topology summing to 1")
        if self.tick_ratios.values is not None:
            vals = self.tick_ratios.values
            if len(vals) != D:
                raise ValueError(f"tick_ratios.values needs {D} entries")
            for a, b in vals:
                if b < 1 or not 0 <= a <= b:
                    raise ValueError(f"tick ratio {a}/{b} must satisfy 0 <= a <= b, b >= 1")
        if self.tick_ratios.sample is not None and self.tick_ratios.sample.low > self.tick_ratios.sample.high:
            raise ValueError("tick_ratios.sample: low exceeds high")
        if self.init.kind == "annulus" and self.init.inner >= self.init.outer:
            raise ValueError("init: inner radius must be below the outer radius")
        if self.init.kind == "explicit":
            if self.init.values is None:
                raise ValueError("init: explicit initialization needs 'values'")
            expected = [dims] if self.mode == "consensus" else (
                dims if isinstance(dims, list) else [dims] * D)
            if [len(v) for v in self.init.values] != expected:
                raise ValueError("init.values shapes do not match the agent dimensions")
        return self

    def agent_dims(self) -> list[int]:
        d = self.agents.dims
        if self.mode == "consensus":
            return [d] * self.agents.count
        return list(d) if isinstance(d, list) else [d] * self.agents.count

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path) -> SimConfig:
    """Parse and validate a config file.

    Raises ``json.JSONDecodeError`` (with line/column) or pydantic's
    ``ValidationError`` (with field paths).
    """
    text = Path(path).read_text()
    return SimConfig.model_validate(json.loads(text))


# ---------------------------------------------------------------------------
# presets

PRESET_TOPOLOGY_SEED = 2019

_SEC5 = {
    "schema_version": 1,
    "mode": "optimize",
    "agents": {"count": 16, "dims": 2},
    "topologies": {"generate": {"count": 4, "edges_per_graph": 8, "seed": PRESET_TOPOLOGY_SEED}},
    "switching": {},
    "channels": {},
    "tick_ratios": {"sample": {"low": 0.2, "high": 1.0, "max_denominator": 20}},
    "schedule": {"kind": "reciprocal_affine", "alpha": 50, "beta": 50},
    "objective": {"kind": "laplacian", "perturbation": 0.1},
    "init": {"kind": "annulus", "inner": 500, "outer": 1000},
    "horizon": 5000,
    "seed": 0,
    "trace": {"estimates": "full"},
}

_SEC6 = {
    **_SEC5,
    "mode": "consensus",
    "agents": {"count": 16, "dims": 32},
    "schedule": {"kind": "reciprocal_affine", "alpha": 5, "beta": 150},
    "objective": {"kind": "consensus_quadratic", "shift": 0.1},
    "init": {"kind": "ball", "radius": 10},
    "horizon": 2500,
    "arbiter": 1,
}

_SYNC = {
    "schema_version": 1,
    "mode": "optimize",
    "agents": {"count": 16, "dims": 2},
    "topologies": {"edges": [[[i, j] for i in range(1, 17) for j in range(1, 17) if i != j]]},
    "channels": {"default": {"transition": [[1.0]], "crossover": [0.0]}},
    "tick_ratios": {"values": [[1, 1]] * 16},
    "schedule": {"kind": "reciprocal_affine", "alpha": 50, "beta": 50},
    "objective": {"kind": "laplacian", "perturbation": 0.1},
    "init": {"kind": "annulus", "inner": 500, "outer": 1000},
    "horizon": 200,
    "seed": 0,
}

PRESETS = {
    "paper-sec5": ("16 agents in R^2, 4 switching 8-edge topologies, Markov channels, 5000 ticks", _SEC5),
    "paper-sec6": ("arbiter consensus, 16 agents, d=32 quadratics, 2500 ticks", _SEC6),
    "sync-lossless": ("complete lossless graph, all tick ratios 1, 200 ticks", _SYNC),
}


def preset(name: str) -> SimConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return SimConfig.model_validate(copy.deepcopy(PRESETS[name][1]))
