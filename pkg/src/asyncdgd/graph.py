"""Agent communication digraphs: connectivity, unions, shortest paths and
block Laplacians.

Vertices are 0-based internally; config files use 1-based agent ids and are
converted at the boundary (see :mod:`asyncdgd.config`).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Digraph:
    vertex_count: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.vertex_count < 1:
            raise GraphError("a digraph needs at least one vertex")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise GraphError(f"self-loop on vertex {i}")
            if not (0 <= i < self.vertex_count and 0 <= j < self.vertex_count):
                raise GraphError(f"edge {(i, j)} out of range for {self.vertex_count} vertices")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, vertex_count: int, edges: Iterable[Sequence[int]]) -> "Digraph":
        edges = [tuple(e) for e in edges]
        if len(set(edges)) != len(edges):
            raise GraphError("duplicate edges")
        return cls(vertex_count, frozenset(edges))

    @classmethod
    def complete(cls, vertex_count: int) -> "Digraph":
        return cls(vertex_count, frozenset(
            (i, j) for i in range(vertex_count) for j in range(vertex_count) if i != j))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def out_neighbors(self, i: int) -> list[int]:
        return sorted(j for a, j in self.edges if a == i)

    def in_neighbors(self, i: int) -> list[int]:
        return sorted(a for a, j in self.edges if j == i)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.vertex_count, self.vertex_count), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = True
        return adj

    def reversed(self) -> "Digraph":
        return Digraph(self.vertex_count, frozenset((j, i) for i, j in self.edges))


def _reach_from(g: Digraph, source: int) -> set[int]:
    succ: dict[int, list[int]] = {}
    for i, j in g.edges:
        succ.setdefault(i, []).append(j)
    seen = {source}
    stack = [source]
    while stack:
        u = stack.pop()
        for v in succ.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def is_strongly_connected(g: Digraph) -> bool:
    """True iff every vertex reaches every other vertex.

    Forward and backward reachability from vertex 0 both covering the graph
    is equivalent to strong connectivity.
    """
    everything = g.vertex_count
    return (len(_reach_from(g, 0)) == everything
            and len(_reach_from(g.reversed(), 0)) == everything)


def union_graph(gs: Sequence[Digraph]) -> Digraph:
    if not gs:
        raise GraphError("union of an empty list of graphs")
    counts = {g.vertex_count for g in gs}
    if len(counts) != 1:
        raise GraphError(f"mismatched vertex counts {sorted(counts)}")
    edges: set = set()
    for g in gs:
        edges |= g.edges
    return Digraph(gs[0].vertex_count, frozenset(edges))


def shortest_path_lengths(g: Digraph) -> np.ndarray:
    """All-pairs hop counts by BFS; unreachable pairs are -1, diagonal 0."""
    n = g.vertex_count
    succ = [g.out_neighbors(i) for i in range(n)]
    dist = np.full((n, n), -1, dtype=int)
    for s in range(n):
        dist[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in succ[u]:
                if dist[s, v] < 0:
                    dist[s, v] = dist[s, u] + 1
                    queue.append(v)
    return dist


def diameter(g: Digraph) -> int:
    """Longest shortest path; raises if the graph is not strongly connected."""
    dist = shortest_path_lengths(g)
    if (dist < 0).any():
        raise GraphError("diameter undefined: graph is not strongly connected")
    return int(dist.max())


def laplacian(g: Digraph, block: int = 1) -> np.ndarray:
    """Laplacian of the undirected support of ``g``, expanded as ``L ⊗ I_block``.

    An edge in either direction joins the pair once; the result is symmetric
    positive semi-definite with zero row sums.
    """
    if block < 1:
        raise GraphError("block dimension must be positive")
    adj = g.adjacency()
    sym = (adj | adj.T).astype(float)
    lap = np.diag(sym.sum(axis=1)) - sym
    if block == 1:
        return lap
    return np.kron(lap, np.eye(block))


def random_topologies(vertex_count: int, count: int, edges_per_graph: int,
                      rng: np.random.Generator, max_tries: int = 10_000) -> list[Digraph]:
    """Draw ``count`` digraphs with exactly ``edges_per_graph`` edges each.

    Edges are sampled uniformly without replacement from all ordered pairs;
    whole batches are rejected until their union is strongly connected.
    """
    pairs = [(i, j) for i in range(vertex_count) for j in range(vertex_count) if i != j]
    if edges_per_graph > len(pairs):
        raise GraphError("more edges requested than ordered pairs available")
    if count * edges_per_graph < vertex_count:
        raise GraphError("too few edges for a strongly connected union")
    for _ in range(max_tries):
        gs = []
        for _ in range(count):
            picks = rng.choice(len(pairs), size=edges_per_graph, replace=False)
            gs.append(Digraph(vertex_count, frozenset(pairs[k] for k in picks)))
        if is_strongly_connected(union_graph(gs)):
            return gs
    raise GraphError(f"no strongly connected union after {max_tries} draws")
