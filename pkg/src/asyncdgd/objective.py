"""Objectives: sampled quadratic forms (including the perturbed network
Laplacian), per-agent consensus quadratics and the SPSA-C estimator."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .graph import Digraph, laplacian


class ObjectiveError(ValueError):
    pass


def _offsets(dims: Sequence[int]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(dims)]).astype(int)


class QuadraticFormObjective:
    """f(x, ξ) = xᵀ M_ξ x with ξ drawn from a categorical law over the matrices.

    ``dims`` splits the decision vector into per-agent blocks.
    """

    def __init__(self, matrices: Sequence, dims: Sequence[int], probs: Sequence[float] | None = None):
        self.dims = tuple(int(d) for d in dims)
        self.offsets = _offsets(self.dims)
        size = int(self.offsets[-1])
        self.matrices = [np.array(m, dtype=float) for m in matrices]
        if not self.matrices:
            raise ObjectiveError("need at least one matrix")
        for m in self.matrices:
            if m.shape != (size, size):
                raise ObjectiveError(f"matrix shape {m.shape} does not match dimension {size}")
        if probs is None:
            probs = np.full(len(self.matrices), 1.0 / len(self.matrices))
        self.probs = np.asarray(probs, dtype=float)
        if self.probs.shape != (len(self.matrices),) or abs(self.probs.sum() - 1) > 1e-12:
            raise ObjectiveError("noise probabilities must match the matrices and sum to 1")
        self._cdf = np.cumsum(self.probs)
        self.mean_matrix = sum(p * m for p, m in zip(self.probs, self.matrices))

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_agents(self) -> int:
        return len(self.dims)

    def block(self, x: np.ndarray, i: int) -> np.ndarray:
        return x[self.offsets[i]:self.offsets[i + 1]]

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise ObjectiveError(f"expected a vector of length {self.size}, got {x.shape}")
        return x

    def value(self, x, xi: int) -> float:
        x = self._check(x)
        return float(x @ self.matrices[xi] @ x)

    def expected_value(self, x) -> float:
        x = self._check(x)
        return float(x @ self.mean_matrix @ x)

    def partial_gradient(self, x, xi: int, i: int) -> np.ndarray:
        """Exact ∂f(x, ξ)/∂x_i; valid because every M_ξ is symmetric.

        Sliced from the full product rather than a row-block product so the
        result is bit-identical to a centralized evaluation of the gradient.
        """
        x = self._check(x)
        return self.block(2.0 * (self.matrices[xi] @ x), i)

    def gradient(self, x, xi: int) -> np.ndarray:
        x = self._check(x)
        return 2.0 * (self.matrices[xi] @ x)

    def expected_gradient(self, x) -> np.ndarray:
        return 2.0 * (self.mean_matrix @ self._check(x))

    def sample_noise(self, rng: np.random.Generator) -> int:
        return int(min(np.searchsorted(self._cdf, rng.random(), side="right"), len(self._cdf) - 1))

    def minimizer(self) -> np.ndarray:
        # Positive definite mean matrix: the origin is the unique minimizer.
        return np.zeros(self.size)


def laplacian_objective(topologies: Sequence[Digraph], block: int = 2,
                        perturbation: float = 0.1,
                        probs: Sequence[float] | None = None) -> QuadraticFormObjective:
    """Perturbed average network distance xᵀ[L_ξ + perturbation·I]x."""
    if perturbation <= 0:
        raise ObjectiveError("perturbation must be positive for a unique minimizer")
    d = topologies[0].vertex_count * block
    mats = [laplacian(g, block) + perturbation * np.eye(d) for g in topologies]
    return QuadraticFormObjective(mats, [block] * topologies[0].vertex_count, probs)


class ConsensusQuadratics:
    """Local objectives f_i(x) = xᵀA_i x + b_iᵀx + c_i over a shared x ∈ R^d."""

    def __init__(self, a: Sequence, b: Sequence, c: Sequence[float]):
        self.a = [np.array(m, dtype=float) for m in a]
        self.b = [np.array(v, dtype=float) for v in b]
        self.c = [float(s) for s in c]
        if not (len(self.a) == len(self.b) == len(self.c)) or not self.a:
            raise ObjectiveError("A, b and c must have one entry per agent")
        d = self.b[0].shape[0]
        for m, v in zip(self.a, self.b):
            if m.shape != (d, d) or v.shape != (d,):
                raise ObjectiveError("inconsistent consensus dimensions")
            if not np.allclose(m, m.T, rtol=0, atol=1e-12):
                raise ObjectiveError("A_i must be symmetric")
            if np.linalg.eigvalsh(m).min() <= 0:
                raise ObjectiveError("A_i must be positive definite")
        self.dim = d

    @classmethod
    def generate(cls, n_agents: int, dim: int, rng: np.random.Generator,
                 shift: float = 0.1, scale: float | None = None) -> "ConsensusQuadratics":
        """Random instance with A_i = scale·(MᵀM/d + shift·I), M, b_i, c_i standard normal.

        ``scale`` defaults to 1/n_agents, which keeps the spectrum of ΣA_i near
        [shift, 4 + shift] whatever the agent count; unscaled sums make the
        arbiter's stale-gradient iteration unstable at the usual step sizes.
        """
        if scale is None:
            scale = 1.0 / n_agents
        if scale <= 0 or shift <= 0:
            raise ObjectiveError("scale and shift must be positive")
        a, b, c = [], [], []
        for _ in range(n_agents):
            m = rng.standard_normal((dim, dim))
            mat = scale * (m.T @ m / dim + shift * np.eye(dim))
            a.append(0.5 * (mat + mat.T))
            b.append(rng.standard_normal(dim))
            c.append(float(rng.standard_normal()))
        return cls(a, b, c)

    @property
    def n_agents(self) -> int:
        return len(self.a)

    def local_value(self, i: int, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.a[i] @ x + self.b[i] @ x + self.c[i])

    def local_gradient(self, i: int, x) -> np.ndarray:
        return 2.0 * (self.a[i] @ np.asarray(x, dtype=float)) + self.b[i]

    def total_value(self, x) -> float:
        return sum(self.local_value(i, x) for i in range(self.n_agents))

    def total_gradient(self, x) -> np.ndarray:
        return sum(self.local_gradient(i, x) for i in range(self.n_agents))

    def solution(self) -> np.ndarray:
        return consensus_analytic_solution(self.a, self.b)

    def to_dict(self) -> dict:
        return {"A": [m.tolist() for m in self.a], "b": [v.tolist() for v in self.b], "c": list(self.c)}

    @classmethod
    def from_dict(cls, data: dict) -> "ConsensusQuadratics":
        return cls(data["A"], data["b"], data["c"])


def consensus_analytic_solution(a: Sequence, b: Sequence) -> np.ndarray:
    """Minimizer of Σ xᵀA_i x + b_iᵀx: x* = -½ (ΣA_i)⁻¹ Σb_i."""
    total_a = np.sum([np.asarray(m, dtype=float) for m in a], axis=0)
    total_b = np.sum([np.asarray(v, dtype=float) for v in b], axis=0)
    return -0.5 * np.linalg.solve(total_a, total_b)


def rademacher(rng: np.random.Generator, d: int) -> np.ndarray:
    return np.where(rng.random(d) < 0.5, -1.0, 1.0)


def spsa_gradient(value: Callable[[np.ndarray], float], x, c: float, signs) -> np.ndarray:
    """Two-sided simultaneous-perturbation gradient estimate.

    The perturbation is Δ = c·signs (so Δ_i = ±c) and component i is
    (f(x+Δ) - f(x-Δ)) / (2Δ_i). ``value`` is f(·, ξ) with ξ held fixed.
    """
    if c <= 0:
        raise ObjectiveError("perturbation size c must be positive")
    x = np.asarray(x, dtype=float)
    signs = np.asarray(signs, dtype=float)
    if signs.shape != x.shape or not np.all(np.abs(signs) == 1.0):
        raise ObjectiveError("signs must be a ±1 vector matching x")
    delta = c * signs
    return (value(x + delta) - value(x - delta)) / (2.0 * delta)
