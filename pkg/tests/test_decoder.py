"""Primal-dual decoder: known answers, optimality, certificates."""

import numpy as np
import pytest

from _oracle import grid_objective, random_tiny_instance
from sparse_lab.decoder import (
    DecoderConfig,
    ProblemInstance,
    decode,
    estimate_operator_norm,
    evaluate_objective,
)


class TestOperatorNorm:
    def test_identity(self):
        assert estimate_operator_norm(np.eye(3)) == 1.0

    def test_diagonal(self):
        a = np.diag([0.5, -3.0, 2.0])
        np.testing.assert_allclose(estimate_operator_norm(a), 3.0, rtol=1e-12)

    def test_zero_matrix(self):
        assert estimate_operator_norm(np.zeros((4, 6))) == 0.0

    def test_matches_svd(self):
        rng = np.random.default_rng(42)
        a = rng.normal(size=(64, 128))
        exact = np.linalg.svd(a, compute_uv=False)[0]
        np.testing.assert_allclose(estimate_operator_norm(a), exact, rtol=1e-8)

    def test_rank_one(self):
        u = np.array([3.0, 4.0])
        v = np.array([1.0, 2.0, 2.0])
        a = np.outer(u, v)
        np.testing.assert_allclose(estimate_operator_norm(a), 15.0, rtol=1e-10)


class TestKnownAnswers:
    def test_zero_data(self):
        instance = ProblemInstance(A=np.eye(4), y=np.zeros(4))
        result = decode(instance, 1.0)
        assert result.converged
        assert result.objective == 0.0
        np.testing.assert_array_equal(result.x_hat, np.zeros(4))

    def test_identity_small_penalty(self):
        """For A = I and lam < 1 the data term wins: x = y exactly."""
        rng = np.random.default_rng(42)
        y = rng.normal(size=8)
        result = decode(ProblemInstance(A=np.eye(8), y=y), 0.5)
        assert result.converged
        np.testing.assert_allclose(result.x_hat, y, atol=1e-8)
        np.testing.assert_allclose(result.objective, 0.5 * np.sum(np.abs(y)), rtol=1e-10)

    def test_tall_consistent_column(self):
        """Two consistent rows outvote the penalty."""
        instance = ProblemInstance(A=np.array([[1.0], [2.0]]), y=np.array([1.0, 2.0]))
        result = decode(instance, 0.5)
        assert result.converged
        np.testing.assert_allclose(result.x_hat, [1.0], atol=1e-8)
        np.testing.assert_allclose(result.objective, 0.5, atol=1e-8)

    def test_balanced_rows(self):
        instance = ProblemInstance(A=np.array([[1.0], [1.0]]), y=np.array([1.0, 1.0]))
        result = decode(instance, 1.0)
        assert result.converged
        np.testing.assert_allclose(result.objective, 1.0, rtol=1e-9)


class TestOptimality:
    def test_never_worse_than_zero(self):
        """x = 0 is always feasible, so the objective is at most ||y||_1."""
        rng = np.random.default_rng(7)
        for _ in range(10):
            a = rng.normal(size=(6, 12))
            y = rng.normal(size=6)
            result = decode(ProblemInstance(A=a, y=y), 1.0)
            assert result.objective <= np.sum(np.abs(y)) + 1e-12

    def test_local_perturbations_do_not_improve(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(12, 8))
        y = rng.normal(size=12)
        instance = ProblemInstance(A=a, y=y)
        result = decode(instance, 0.8)
        assert result.converged
        scale = 1e-3 * (1.0 + np.linalg.norm(result.x_hat))
        for _ in range(100):
            direction = rng.normal(size=8)
            direction *= scale / np.linalg.norm(direction)
            perturbed = evaluate_objective(instance, result.x_hat + direction, 0.8)
            assert perturbed >= result.objective - 1e-10

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(2025)
        for _ in range(8):
            a, y, lam = random_tiny_instance(rng)
            reference = grid_objective(a, y, lam)
            result = decode(ProblemInstance(A=a, y=y), lam)
            assert result.converged
            np.testing.assert_allclose(result.objective, reference, atol=1e-5)

    def test_converged_residuals_meet_tolerances(self):
        rng = np.random.default_rng(13)
        cfg = DecoderConfig(primal_tol=1e-9, dual_tol=1e-9)
        a = rng.normal(size=(16, 10))
        y = rng.normal(size=16)
        result = decode(ProblemInstance(A=a, y=y), 1.2, cfg)
        assert result.converged
        assert result.primal_residual <= cfg.primal_tol
        assert result.dual_residual <= cfg.dual_tol


class TestBehavior:
    def test_trace_nonincreasing(self):
        rng = np.random.default_rng(17)
        a = rng.normal(size=(20, 14))
        y = rng.normal(size=20)
        result = decode(ProblemInstance(A=a, y=y), 1.0)
        trace = result.objective_trace
        assert all(u >= v for u, v in zip(trace, trace[1:]))
        assert trace[-1] == result.objective

    def test_deterministic(self):
        rng = np.random.default_rng(19)
        a = rng.normal(size=(10, 6))
        y = rng.normal(size=10)
        first = decode(ProblemInstance(A=a, y=y), 0.9)
        second = decode(ProblemInstance(A=a, y=y), 0.9)
        np.testing.assert_array_equal(first.x_hat, second.x_hat)
        assert first.objective == second.objective
        assert first.iterations == second.iterations

    def test_budget_exhaustion_is_quiet(self):
        rng = np.random.default_rng(23)
        a = rng.normal(size=(30, 20))
        y = rng.normal(size=30)
        result = decode(ProblemInstance(A=a, y=y), 1.0, DecoderConfig(max_iters=3))
        assert not result.converged
        assert result.iterations == 3
        assert result.objective <= np.sum(np.abs(y)) + 1e-12

    def test_invalid_penalty(self):
        instance = ProblemInstance(A=np.eye(2), y=np.ones(2))
        with pytest.raises(ValueError):
            decode(instance, 0.0)
        with pytest.raises(ValueError):
            decode(instance, -1.0)

    def test_zero_matrix_rejected(self):
        instance = ProblemInstance(A=np.zeros((3, 3)), y=np.ones(3))
        with pytest.raises(ValueError):
            decode(instance, 1.0)


class TestProblemInstance:
    def test_shape_checks(self):
        with pytest.raises(ValueError):
            ProblemInstance(A=np.ones(3), y=np.ones(3))
        with pytest.raises(ValueError):
            ProblemInstance(A=np.ones((2, 3)), y=np.ones(3))
        with pytest.raises(ValueError):
            ProblemInstance(A=np.ones((2, 3)), y=np.ones(2), x0=np.ones(2))
        with pytest.raises(ValueError):
            ProblemInstance(A=np.ones((2, 3)), y=np.ones(2), w=np.ones(3))
        with pytest.raises(ValueError):
            ProblemInstance(A=np.ones((2, 0)), y=np.ones(2))

    def test_dimensions(self):
        instance = ProblemInstance(A=np.ones((4, 7)), y=np.ones(4))
        assert instance.m == 4
        assert instance.n == 7

    def test_objective_evaluation(self):
        instance = ProblemInstance(A=np.eye(2), y=np.array([1.0, -2.0]))
        value = evaluate_objective(instance, np.zeros(2), 1.0)
        assert value == 3.0
