"""Small builders shared by the tests."""

import numpy as np

from asyncdgd.algo import DistributedGradientDescent, ReciprocalAffine, sample_annulus
from asyncdgd.channel import frozen_channel
from asyncdgd.graph import Digraph, union_graph
from asyncdgd.netsim import ClockSchedule, Network, Simulation, SwitchingProcess
from asyncdgd.objective import laplacian_objective
from asyncdgd.rng import Streams


def lossless(topologies):
    return {e: frozen_channel(0.0) for e in union_graph(topologies).edges}


def dgd_sim(topologies, channels=None, clocks=None, seed=0, objective_topologies=None,
            block=2, schedule=ReciprocalAffine(50, 50), **kw):
    n = topologies[0].vertex_count
    channels = lossless(topologies) if channels is None else channels
    clocks = clocks or [ClockSchedule(1, 1)] * n
    streams = Streams(seed)
    obj = laplacian_objective(objective_topologies or topologies, block)
    x0 = [sample_annulus(streams.get("init", i), block, 500, 1000) for i in range(n)]
    algo = DistributedGradientDescent(obj, schedule, x0, streams=streams, **kw)
    net = Network(SwitchingProcess(topologies), channels)
    return Simulation(net, clocks, algo, streams)


def ring(n):
    return Digraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


class StampOnly:
    """Minimal algorithm: every local update just restamps the agent's entry.

    Delays depend only on the protocol, so this isolates them cheaply.
    """

    mode = "optimize"

    def __init__(self, n):
        self.n_agents = n

    def initial_lists(self):
        from asyncdgd.protocol import EstimateList
        return [EstimateList.initial([np.zeros(1)] * self.n_agents)] * self.n_agents

    def update(self, sim, i):
        from asyncdgd.protocol import stamp_own
        sim.lists[i] = stamp_own(sim.lists[i], i, np.array([float(sim.nu[i])]), int(sim.nu[i]), sim.n)


def delay_histograms(topologies, channels, ticks, seed=0, clocks=None, algorithm=None):
    """Run ``ticks`` ticks and return {(j, i): bincount of tau_ji}."""
    n = topologies[0].vertex_count
    net = Network(SwitchingProcess(topologies), channels)
    sim = Simulation(net, clocks or [ClockSchedule(1, 1)] * n, algorithm or StampOnly(n), Streams(seed))
    taus = np.empty((ticks, n, n), dtype=np.int64)
    for t in range(ticks):
        sim.advance_tick()
        taus[t] = sim.delay_matrix()
    return {(j, i): np.bincount(taus[:, j, i]) for j in range(n) for i in range(n) if i != j}
