"""Timestamped estimate lists and the max-stamp merge rule.

A list holds one entry per agent: the latest value known for that agent, the
producer's local update count (the stamp) and the global tick the value was
produced at. Lists are immutable; entry arrays are frozen, so a list can be
handed to any number of receivers without copying.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ProtocolError(ValueError):
    pass


def _frozen(value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EstimateList:
    values: tuple
    stamps: tuple
    origins: tuple
    # Global tick of the point a gradient entry was evaluated at (consensus
    # mode); -1 where not applicable.
    bases: tuple = ()

    def __post_init__(self):
        n = len(self.values)
        if not (len(self.stamps) == len(self.origins) == n):
            raise ProtocolError("entry fields have different lengths")
        if not self.bases:
            object.__setattr__(self, "bases", (-1,) * n)
        elif len(self.bases) != n:
            raise ProtocolError("entry fields have different lengths")

    @classmethod
    def initial(cls, values: Sequence, origin: int = 0) -> "EstimateList":
        vals = tuple(_frozen(v) for v in values)
        return cls(vals, (0,) * len(vals), (origin,) * len(vals))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def dims(self) -> tuple:
        return tuple(v.shape[0] for v in self.values)

    def stacked(self) -> np.ndarray:
        """All entry values appended into one vector."""
        return np.concatenate(self.values)

    def entry(self, k: int) -> tuple:
        return self.values[k], self.stamps[k], self.origins[k], self.bases[k]


def stamp_own(lst: EstimateList, i: int, value, stamp: int, tick: int,
              basis: int = -1) -> EstimateList:
    """Replace entry ``i`` with a freshly produced value."""
    if stamp <= lst.stamps[i]:
        raise ProtocolError(
            f"stamp for agent {i} must increase: {stamp} <= {lst.stamps[i]}")
    value = _frozen(value)
    if value.shape != lst.values[i].shape:
        raise ProtocolError(f"dimension mismatch for agent {i}")
    values, stamps = list(lst.values), list(lst.stamps)
    origins, bases = list(lst.origins), list(lst.bases)
    values[i], stamps[i], origins[i], bases[i] = value, int(stamp), int(tick), int(basis)
    return EstimateList(tuple(values), tuple(stamps), tuple(origins), tuple(bases))


def merge(local: EstimateList, received: Iterable[EstimateList]) -> EstimateList:
    """Per agent, keep the entry with the strictly largest stamp.

    Ties go to the local entry, then to the earliest received list. Under the
    protocol a (agent, stamp) pair identifies a single produced value, so the
    tie-break never changes the result in a simulation.
    """
    received = list(received)
    if not received:
        return local
    dims = local.dims
    for other in received:
        if other.dims != dims:
            raise ProtocolError("cannot merge lists with different entry dimensions")
    values, stamps = list(local.values), list(local.stamps)
    origins, bases = list(local.origins), list(local.bases)
    changed = False
    for other in received:
        for k, s in enumerate(other.stamps):
            if s > stamps[k]:
                values[k], stamps[k] = other.values[k], s
                origins[k], bases[k] = other.origins[k], other.bases[k]
                changed = True
    if not changed:
        return local
    return EstimateList(tuple(values), tuple(stamps), tuple(origins), tuple(bases))
