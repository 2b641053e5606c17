"""Step-size schedules, the per-agent delayed gradient update and the
arbiter-based cumulative consensus scheme.

Both algorithms plug into :class:`asyncdgd.netsim.Simulation`: the simulator
owns clocks, lists and message delivery, and calls ``update(sim, i)`` for
each agent whose local clock ticked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .objective import ConsensusQuadratics, QuadraticFormObjective
from .protocol import EstimateList, stamp_own


class DivergenceError(RuntimeError):
    """An iterate left the configured norm guard."""


# ---------------------------------------------------------------------------
# step sizes


@dataclass(frozen=True)
class ReciprocalAffine:
    """a(ν) = 1 / (ν/alpha + beta)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")

    def __call__(self, nu):
        return 1.0 / (np.asarray(nu, dtype=float) / self.alpha + self.beta)

    def to_dict(self):
        return {"kind": "reciprocal_affine", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class ConstantStep:
    value: float

    def __call__(self, nu):
        return np.full(np.shape(nu), float(self.value))

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class PowerStep:
    """a(ν) = scale / (ν + offset)^exponent."""

    exponent: float
    scale: float = 1.0
    offset: float = 1.0

    def __call__(self, nu):
        return self.scale / (np.asarray(nu, dtype=float) + self.offset) ** self.exponent

    def to_dict(self):
        return {"kind": "power", "exponent": self.exponent, "scale": self.scale, "offset": self.offset}


@dataclass(frozen=True)
class TableStep:
    """Explicit values; ν past the end of the table reuses the last value."""

    values: tuple

    def __call__(self, nu):
        table = np.asarray(self.values, dtype=float)
        idx = np.minimum(np.asarray(nu, dtype=float), len(table) - 1).astype(np.int64)
        return table[idx]

    def to_dict(self):
        return {"kind": "table", "values": list(self.values)}


def schedule_from_dict(spec: dict):
    kind = spec.get("kind")
    if kind == "reciprocal_affine":
        return ReciprocalAffine(float(spec["alpha"]), float(spec["beta"]))
    if kind == "constant":
        return ConstantStep(float(spec["value"]))
    if kind == "power":
        return PowerStep(float(spec["exponent"]), float(spec.get("scale", 1.0)),
                         float(spec.get("offset", 1.0)))
    if kind == "table":
        if not spec["values"]:
            raise ValueError("table schedule needs at least one value")
        return TableStep(tuple(float(v) for v in spec["values"]))
    raise ValueError(f"unknown schedule kind {kind!r}")


def step_size(schedule, nu: int) -> float:
    return float(schedule(nu))


# ---------------------------------------------------------------------------
# initialization


def sample_annulus(rng: np.random.Generator, dim: int, inner: float, outer: float) -> np.ndarray:
    """Uniform draw from {inner ≤ ‖x‖ ≤ outer}: uniform direction, radius by inverse CDF."""
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    u = rng.random()
    radius = (inner ** dim + u * (outer ** dim - inner ** dim)) ** (1.0 / dim)
    return radius * direction


def sample_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    return sample_annulus(rng, dim, 0.0, radius)


# ---------------------------------------------------------------------------
# distributed delayed gradient descent


class DistributedGradientDescent:
    """Each agent descends its own block using the possibly stale list it holds.

    ``noise_mode='shared'`` evaluates every update of a tick at the network's
    sample ξⁿ (the active topology index); ``'per_agent'`` draws an independent
    ξ_iⁿ per agent from the objective's noise law. ``error_amplitude`` adds a
    bounded additive error, uniform in [-ε, ε] per coordinate.
    """

    mode = "optimize"

    def __init__(self, objective: QuadraticFormObjective, schedule, initial: Sequence,
                 noise_mode: str = "shared", error_amplitude: float = 0.0,
                 streams=None, guard: float = 1e9):
        if noise_mode not in ("shared", "per_agent"):
            raise ValueError(f"unknown noise mode {noise_mode!r}")
        if error_amplitude < 0:
            raise ValueError("error amplitude must be non-negative")
        if (noise_mode == "per_agent" or error_amplitude > 0) and streams is None:
            raise ValueError("random streams required for per-agent noise or additive errors")
        self.objective = objective
        self.schedule = schedule
        self.initial = [np.array(v, dtype=float) for v in initial]
        if tuple(v.shape[0] for v in self.initial) != objective.dims:
            raise ValueError("initial estimates do not match the objective's agent dimensions")
        self.noise_mode = noise_mode
        self.error_amplitude = float(error_amplitude)
        self.guard = guard
        n = objective.n_agents
        self._noise_rngs = [streams.get("xi", i) for i in range(n)] if noise_mode == "per_agent" else None
        self._error_rngs = [streams.get("error", i) for i in range(n)] if error_amplitude > 0 else None
        self.last_xi = [None] * n

    @property
    def n_agents(self) -> int:
        return self.objective.n_agents

    def initial_lists(self) -> list[EstimateList]:
        # Initial synchronization: every agent starts with everyone's x⁰.
        base = EstimateList.initial(self.initial)
        return [base] * self.n_agents

    def update(self, sim, i: int) -> None:
        lst = sim.lists[i]
        if self.noise_mode == "shared":
            xi = sim.xi
        else:
            xi = self.objective.sample_noise(self._noise_rngs[i])
        self.last_xi[i] = xi
        g = self.objective.partial_gradient(lst.stacked(), xi, i)
        if self._error_rngs is not None:
            g = g + self.error_amplitude * self._error_rngs[i].uniform(-1.0, 1.0, g.shape[0])
        a = step_size(self.schedule, sim.nu[i])
        new = lst.values[i] - a * g
        if not np.all(np.isfinite(new)) or np.linalg.norm(new) > self.guard:
            raise DivergenceError(f"agent {i + 1} estimate exceeded the guard at tick {sim.n}")
        sim.lists[i] = stamp_own(lst, i, new, int(sim.nu[i]), sim.n)

    def estimate(self, lists: Sequence[EstimateList]) -> np.ndarray:
        """The true iterate xⁿ: every agent's own entry."""
        return np.concatenate([lists[i].values[i] for i in range(self.n_agents)])

    def objective_value(self, x: np.ndarray) -> float:
        return self.objective.expected_value(x)


# ---------------------------------------------------------------------------
# arbiter consensus


class ArbiterConsensus:
    """Cumulative consensus: one arbiter descends Σ_j g_j using stale gradients.

    List layout: entry ``arbiter`` holds the arbiter's estimate x̂; every
    other entry k holds agent k's latest gradient ∇f_k, stamped with k's
    update count and carrying (as its basis) the production tick of the x̂
    it was evaluated at. The arbiter's own gradient stays local.
    """

    mode = "consensus"

    def __init__(self, problem: ConsensusQuadratics, schedule, x0, arbiter: int = 0,
                 guard: float = 1e9):
        if not 0 <= arbiter < problem.n_agents:
            raise ValueError("arbiter index out of range")
        self.problem = problem
        self.schedule = schedule
        self.x0 = np.array(x0, dtype=float)
        if self.x0.shape != (problem.dim,):
            raise ValueError("initial estimate has the wrong dimension")
        self.arbiter = arbiter
        self.guard = guard
        self.arbiter_grad = problem.local_gradient(arbiter, self.x0)

    @property
    def n_agents(self) -> int:
        return self.problem.n_agents

    def initial_lists(self) -> list[EstimateList]:
        values = [self.x0 if k == self.arbiter else self.problem.local_gradient(k, self.x0)
                  for k in range(self.n_agents)]
        base = EstimateList.initial(values)
        bases = tuple(-1 if k == self.arbiter else 0 for k in range(self.n_agents))
        base = EstimateList(base.values, base.stamps, base.origins, bases)
        return [base] * self.n_agents

    def update(self, sim, i: int) -> None:
        if i == self.arbiter:
            sim.lists[i] = self.arbiter_update(sim.lists[i], int(sim.nu[i]), sim.n)
        else:
            sim.lists[i] = self.follower_update(sim.lists[i], i, int(sim.nu[i]), sim.n)

    def arbiter_update(self, lst: EstimateList, nu: int, tick: int) -> EstimateList:
        arb = self.arbiter
        total = self.arbiter_grad.copy()
        for k in range(self.n_agents):
            if k != arb:
                total += lst.values[k]
        new = lst.values[arb] - step_size(self.schedule, nu) * total
        if not np.all(np.isfinite(new)) or np.linalg.norm(new) > self.guard:
            raise DivergenceError(f"arbiter estimate exceeded the guard at tick {tick}")
        self.arbiter_grad = self.problem.local_gradient(arb, new)
        return stamp_own(lst, arb, new, nu, tick)

    def follower_update(self, lst: EstimateList, i: int, nu: int, tick: int) -> EstimateList:
        # Received lists were already merged on delivery; differentiate at the
        # newest x̂ known.
        g = self.problem.local_gradient(i, lst.values[self.arbiter])
        return stamp_own(lst, i, g, nu, tick, basis=lst.origins[self.arbiter])

    def estimate(self, lists: Sequence[EstimateList]) -> np.ndarray:
        return np.array(lists[self.arbiter].values[self.arbiter])

    def objective_value(self, x: np.ndarray) -> float:
        return self.problem.total_value(x)


# ---------------------------------------------------------------------------
# diagnostics


def lambda_diagnostics(step_sizes, active, dims: Sequence[int] | None = None):
    """Relative step of each agent against the largest active step.

    Returns q(n, i) = a(ν(n,i))·1[i active] / max_{j active} a(ν(n,j)), one per
    agent, or expanded per coordinate when ``dims`` is given. ``None`` when no
    agent is active.
    """
    a = np.asarray(step_sizes, dtype=float)
    act = np.asarray(active, dtype=bool)
    if not act.any():
        return None
    q = np.where(act, a, 0.0) / a[act].max()
    if dims is None:
        return q
    return np.repeat(q, dims)


def balanced_ratios(step_history) -> np.ndarray:
    """Running ratios Σ_m a(ν(m,i)) / Σ_m a(ν(m,0)) for every agent i.

    ``step_history`` has shape (ticks, agents) and holds a(ν(m,i)).
    """
    cum = np.cumsum(np.asarray(step_history, dtype=float), axis=0)
    return cum / cum[:, :1]
