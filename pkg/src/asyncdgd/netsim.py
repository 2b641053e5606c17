"""Discrete-event core.

One global tick equals one network tick. Each tick:

1. the tick index n advances;
2. the switching process picks the active topology (this is also the shared
   network sample ξⁿ);
3. every channel steps its Markov state;
4. every agent sends its current list along every union-graph edge; an edge
   delivers iff it is in the active topology and its channel transmission
   succeeds. Receivers merge what arrived, within the same tick;
5. agents whose local clock ticks increment ν and run their update.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import ceil
from typing import Mapping, Sequence

import numpy as np

from .channel import FadingChannel
from .graph import Digraph, union_graph
from .protocol import merge
from .rng import Streams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ClockSchedule:
    """Agent clock that ticks ``ticks`` times per ``period`` network ticks.

    The ticks are spread evenly and the first network tick of every period
    always fires (for ticks > 0). ``ticks == 0`` is a frozen agent.
    """

    ticks: int
    period: int

    def __post_init__(self):
        if self.period < 1 or not 0 <= self.ticks <= self.period:
            raise ConfigError(f"invalid tick ratio {self.ticks}/{self.period}")

    @classmethod
    def from_ratio(cls, ratio) -> "ClockSchedule":
        r = Fraction(ratio)
        return cls(r.numerator, r.denominator)

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.ticks, self.period)

    def fires(self, n: int) -> bool:
        k = n % self.period
        a, b = self.ticks, self.period
        return ceil((k + 1) * a / b) > ceil(k * a / b)

    def pattern(self) -> list[bool]:
        return [self.fires(k) for k in range(self.period)]

    def max_gap(self) -> int:
        """Longest run of network ticks between consecutive local ticks (inclusive)."""
        if self.ticks == 0:
            return 0
        fired = [k for k in range(2 * self.period) if self.fires(k)]
        return max(b - a for a, b in zip(fired, fired[1:])) if len(fired) > 1 else self.period


class SwitchingProcess:
    """I.i.d. categorical choice of the active topology at every network tick."""

    def __init__(self, topologies: Sequence[Digraph], probs: Sequence[float] | None = None):
        if not topologies:
            raise ConfigError("need at least one topology")
        self.topologies = list(topologies)
        if probs is None:
            probs = [1.0 / len(topologies)] * len(topologies)
        self.probs = np.asarray(probs, dtype=float)
        if self.probs.shape != (len(topologies),) or (self.probs < 0).any() \
                or abs(self.probs.sum() - 1) > 1e-12:
            raise ConfigError("switching probabilities must be non-negative and sum to 1")
        self._cdf = list(np.cumsum(self.probs))

    def sample(self, rng: np.random.Generator) -> int:
        u = rng.random() * self._cdf[-1]
        for k, c in enumerate(self._cdf):
            if u < c:
                return k
        return len(self._cdf) - 1


class Network:
    """Switching topologies plus one fading channel per union-graph edge."""

    def __init__(self, switching: SwitchingProcess, channels: Mapping[tuple, FadingChannel]):
        self.switching = switching
        self.union = union_graph(switching.topologies)
        self.edges = self.union.sorted_edges()
        missing = [e for e in self.edges if e not in channels]
        if missing:
            raise ConfigError(f"no channel configured for edges {missing}")
        self.channels = {e: channels[e] for e in self.edges}
        self.active_sets = [g.edges for g in switching.topologies]

    @property
    def n_agents(self) -> int:
        return self.union.vertex_count

    def activation_probability(self, edge) -> float:
        return float(sum(p for p, g in zip(self.switching.probs, self.switching.topologies)
                         if edge in g.edges))


@dataclass
class TickReport:
    tick: int
    topology: int
    active: np.ndarray
    delivered: list
    outcomes: dict


class Simulation:
    """Single-threaded, deterministic event loop for one replication."""

    def __init__(self, network: Network, clocks: Sequence[ClockSchedule], algorithm,
                 streams: Streams):
        if len(clocks) != network.n_agents or algorithm.n_agents != network.n_agents:
            raise ConfigError("agent counts of network, clocks and algorithm differ")
        self.network = network
        self.clocks = list(clocks)
        self.algorithm = algorithm
        self.n = -1
        self.xi = None
        self.nu = np.zeros(network.n_agents, dtype=np.int64)
        self.lists = list(algorithm.initial_lists())
        # Order in which a tick's active agents are updated. Updates read only
        # their own list, so any order gives the same result; tests flip it.
        self.descending = False
        self._switch_rng = streams.get("switching")
        self._channel_rngs = {e: streams.get("channel", *e) for e in network.edges}
        for e, ch in network.channels.items():
            # start each channel in a state drawn from its stationary law
            rng = self._channel_rngs[e]
            ch.state = int(min(np.searchsorted(np.cumsum(ch.steady), rng.random(), side="right"),
                               ch.n_states - 1))

    @property
    def n_agents(self) -> int:
        return self.network.n_agents

    def advance_tick(self) -> TickReport:
        self.n += 1
        net = self.network
        topo = net.switching.sample(self._switch_rng)
        self.xi = topo
        for e in net.edges:
            net.channels[e].step_state(self._channel_rngs[e])
        # Channels draw every tick whether or not their edge is active, so a
        # channel's outcome sequence never depends on the switching draws.
        outcomes = {e: net.channels[e].attempt_transmission(self._channel_rngs[e]) for e in net.edges}
        active_edges = net.active_sets[topo]
        inbox: dict[int, list] = {}
        delivered = []
        for e in net.edges:
            if outcomes[e] and e in active_edges:
                sender, receiver = e
                inbox.setdefault(receiver, []).append(self.lists[sender])
                delivered.append(e)
        for receiver, msgs in inbox.items():
            self.lists[receiver] = merge(self.lists[receiver], msgs)
        active = np.array([c.fires(self.n) for c in self.clocks], dtype=bool)
        order = np.flatnonzero(active)
        for i in (order[::-1] if self.descending else order):
            self.nu[i] += 1
            self.algorithm.update(self, int(i))
        return TickReport(self.n, topo, active, delivered, outcomes)

    def nu_of(self, i: int) -> int:
        return int(self.nu[i])

    def measure_delay(self, j: int, i: int) -> int:
        """Age (in global ticks) of agent j's entry held by agent i; own entry is 0."""
        if i == j:
            return 0
        return self.n - self.lists[i].origins[j]

    def delay_matrix(self) -> np.ndarray:
        """tau[j, i] = measure_delay(j, i) for all pairs."""
        origins = np.array([lst.origins for lst in self.lists]).T  # [j, i]
        tau = self.n - origins
        np.fill_diagonal(tau, 0)
        return tau
