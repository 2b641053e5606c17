"""Markov fading channels (Gilbert-Elliott style) parameterized by a
transition matrix and a per-state drop (crossover) probability."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np


class ChannelError(ValueError):
    pass


def steady_state(transition: np.ndarray) -> np.ndarray:
    """Stationary vector p with pᵀT = pᵀ and Σp = 1 (least squares)."""
    t = np.asarray(transition, dtype=float)
    k = t.shape[0]
    system = np.vstack([t.T - np.eye(k), np.ones((1, k))])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    p, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


@dataclass
class FadingChannel:
    transition: np.ndarray
    crossover: np.ndarray
    state: int = 0
    steady: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.array(self.transition, dtype=float)
        e = np.array(self.crossover, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 1:
            raise ChannelError("transition matrix must be square and non-empty")
        if e.shape != (t.shape[0],):
            raise ChannelError("crossover vector length must match the state count")
        if (t < 0).any() or (t > 1).any():
            raise ChannelError("transition entries must lie in [0, 1]")
        if np.abs(t.sum(axis=1) - 1.0).max() > 1e-12:
            raise ChannelError("transition rows must sum to 1")
        if (e < 0).any() or (e > 1).any():
            raise ChannelError("crossover probabilities must lie in [0, 1]")
        if not 0 <= self.state < t.shape[0]:
            raise ChannelError(f"initial state {self.state} out of range")
        self.transition, self.crossover = t, e
        self.steady = steady_state(t)
        if np.abs(self.steady @ t - self.steady).max() > 1e-9:
            raise ChannelError("could not solve for a stationary distribution")
        self._cum_rows = [list(np.cumsum(row)) for row in t]
        self._drop = [float(x) for x in e]

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def step_state(self, rng: np.random.Generator) -> int:
        row = self._cum_rows[self.state]
        u = rng.random() * row[-1]
        self.state = min(bisect.bisect_right(row, u), len(row) - 1)
        return self.state

    def attempt_transmission(self, rng: np.random.Generator) -> bool:
        # The Markov state is advanced separately, once per network tick.
        return rng.random() >= self._drop[self.state]

    def worst_success(self) -> float:
        """Minimum success probability over states with positive stationary mass."""
        live = self.steady > 0
        return float((1.0 - self.crossover[live]).min())

    def mean_success(self) -> float:
        return float(self.steady @ (1.0 - self.crossover))


REFERENCE_TRANSITION = [[0.9, 0.1], [0.2, 0.8]]
REFERENCE_CROSSOVER = [0.05, 0.6]


def reference_channel(state: int = 0) -> FadingChannel:
    """Two-state good/bad channel used by the presets."""
    return FadingChannel(REFERENCE_TRANSITION, REFERENCE_CROSSOVER, state)


def frozen_channel(drop: float) -> FadingChannel:
    """Single-state channel with a constant drop probability."""
    return FadingChannel([[1.0]], [drop])
