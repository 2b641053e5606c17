import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asyncdgd.graph import random_topologies
from asyncdgd.objective import (ConsensusQuadratics, ObjectiveError, consensus_analytic_solution,
                                laplacian_objective, rademacher, spsa_gradient)

from oracles import all_sign_patterns, central_difference


@pytest.fixture(scope="module")
def lap():
    return laplacian_objective(random_topologies(16, 4, 8, np.random.default_rng(2019)), 2)


def test_gradient_zero_at_origin(lap):
    for xi in range(4):
        assert np.array_equal(lap.gradient(np.zeros(32), xi), np.zeros(32))


def test_partial_gradients_tile_full_gradient(lap):
    x = np.random.default_rng(0).standard_normal(32)
    for xi in range(4):
        parts = np.concatenate([lap.partial_gradient(x, xi, i) for i in range(16)])
        assert np.array_equal(parts, lap.gradient(x, xi))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_laplacian_lower_bound(seed):
    obj = laplacian_objective(random_topologies(6, 3, 4, np.random.default_rng(seed % 97)), 2)
    x = np.random.default_rng(seed).standard_normal(12) * 10
    for xi in range(3):
        assert obj.value(x, xi) >= 0.1 * (x @ x) * (1 - 1e-12)


def test_laplacian_minimizer(lap):
    assert lap.expected_value(lap.minimizer()) == 0.0
    assert np.linalg.eigvalsh(lap.mean_matrix).min() >= 0.1 - 1e-12


def test_perturbation_must_be_positive():
    with pytest.raises(ObjectiveError):
        laplacian_objective(random_topologies(4, 2, 3, np.random.default_rng(0)), 2, perturbation=0.0)


def test_consensus_analytic_examples():
    assert np.array_equal(consensus_analytic_solution([np.eye(2)] * 3, [np.zeros(2)] * 3), np.zeros(2))
    assert np.allclose(consensus_analytic_solution([np.eye(2)], [np.array([2.0, 4.0])]), [-1.0, -2.0])


def test_consensus_gradient_vanishes_at_solution():
    prob = ConsensusQuadratics.generate(16, 32, np.random.default_rng(4))
    x = prob.solution()
    assert np.linalg.norm(prob.total_gradient(x)) <= 1e-9


def test_consensus_solution_matches_long_descent():
    prob = ConsensusQuadratics.generate(4, 6, np.random.default_rng(8), scale=1.0)
    H = 2 * sum(prob.a)
    step = 1.0 / np.linalg.eigvalsh(H).max()
    x = np.zeros(6)
    for _ in range(200_000):
        x = x - step * prob.total_gradient(x)
        if np.linalg.norm(prob.total_gradient(x)) < 1e-12:
            break
    assert np.linalg.norm(x - prob.solution()) <= 1e-6


def test_consensus_roundtrip_and_validation():
    prob = ConsensusQuadratics.generate(3, 4, np.random.default_rng(1))
    again = ConsensusQuadratics.from_dict(prob.to_dict())
    assert np.array_equal(again.solution(), prob.solution())
    with pytest.raises(ObjectiveError):
        ConsensusQuadratics([-np.eye(2)], [np.zeros(2)], [0.0])
    with pytest.raises(ObjectiveError):
        ConsensusQuadratics([np.array([[1.0, 0.5], [0.0, 1.0]])], [np.zeros(2)], [0.0])


def test_spsa_scalar_linear_exact():
    for c in (1e-3, 0.5, 7.0):
        for s in (-1.0, 1.0):
            g = spsa_gradient(lambda x: 3.5 * x[0] + 2.0, np.array([0.3]), c, np.array([s]))
            assert g[0] == pytest.approx(3.5, rel=1e-12)


def test_spsa_quartic_bias_shrinks_quadratically():
    # cubic terms leave an O(c^2) bias after averaging over all sign patterns
    def f(x):
        return float(np.sum(x ** 4) + x[0] * x[1] * x[2])

    def grad(x):
        g = 4 * x ** 3
        g += np.array([x[1] * x[2], x[0] * x[2], x[0] * x[1]])
        return g

    x = np.array([0.7, -0.4, 1.1])
    biases = []
    for c in (1e-1, 1e-2, 1e-3):
        mean = np.mean([spsa_gradient(f, x, c, s) for s in all_sign_patterns(3)], axis=0)
        biases.append(np.linalg.norm(mean - grad(x)))
    assert biases[0] / biases[1] >= 50 and biases[1] / biases[2] >= 50


def test_spsa_rejects_bad_input():
    with pytest.raises(ObjectiveError):
        spsa_gradient(lambda x: 0.0, np.zeros(2), 0.0, np.ones(2))
    with pytest.raises(ObjectiveError):
        spsa_gradient(lambda x: 0.0, np.zeros(2), 0.1, np.array([1.0, 0.5]))


def test_rademacher_signs():
    s = rademacher(np.random.default_rng(0), 10_000)
    assert set(np.unique(s)) == {-1.0, 1.0} and abs(s.mean()) < 0.05


def test_noise_sampling_follows_probabilities():
    gs = random_topologies(4, 3, 3, np.random.default_rng(0))
    obj = laplacian_objective(gs, 1, probs=[0.5, 0.3, 0.2])
    rng = np.random.default_rng(1)
    draws = np.bincount([obj.sample_noise(rng) for _ in range(50_000)], minlength=3) / 50_000
    assert np.allclose(draws, [0.5, 0.3, 0.2], atol=0.01)


def test_gradient_fd_spot_check(lap):
    rng = np.random.default_rng(3)
    x = rng.standard_normal(32)
    fd = central_difference(lambda z: lap.value(z, 1), x, 1e-4)
    assert np.allclose(fd, lap.gradient(x, 1), rtol=1e-7, atol=1e-7)
