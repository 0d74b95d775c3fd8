import numpy as np
import pytest

from oracles import brute_force_assignment_cost, brute_force_transport
from otsc.errors import SinkhornUnderflowError
from otsc.transport import (
    diagonal_free_marginals,
    exact_ot_oracle,
    sinkhorn_algorithm1,
    sinkhorn_marginal,
)


class TestAlgorithm1:
    def test_uniform_logits_give_uniform_plan(self):
        plan = sinkhorn_algorithm1(np.zeros((4, 3)), eta=0.7, iterations=3)
        assert np.abs(plan.plan - 1.0 / 3.0).max() <= 1e-12

    def test_strong_diagonal_recovers_permutation(self):
        logits = np.array([[10.0, 0.0], [0.0, 10.0]])
        plan = sinkhorn_algorithm1(logits, eta=0.05, iterations=5)
        want = exact_ot_oracle(-logits, np.ones(2), np.ones(2)).plan
        assert np.abs(want - np.eye(2)).max() == 0.0
        assert np.abs(plan.plan - want).max() <= 1e-6

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        plan = sinkhorn_algorithm1(rng.normal(size=(7, 5)), eta=0.3, iterations=4)
        assert np.abs(plan.plan.sum(axis=1) - 1.0).max() <= 1e-12

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(6, 4))
        a = sinkhorn_algorithm1(logits, eta=0.2, iterations=6).plan
        b = sinkhorn_algorithm1(logits + 17.25, eta=0.2, iterations=6).plan
        assert np.abs(a - b).max() <= 1e-12

    def test_determinism(self):
        rng = np.random.default_rng(2)
        logits = rng.normal(size=(5, 5))
        a = sinkhorn_algorithm1(logits, eta=0.05, iterations=5).plan
        b = sinkhorn_algorithm1(logits, eta=0.05, iterations=5).plan
        assert (a == b).all()

    def test_underflow_reports_eta_and_index(self):
        logits = np.array([[0.0, 2000.0], [0.0, 2000.0]])
        with pytest.raises(SinkhornUnderflowError) as exc:
            sinkhorn_algorithm1(logits, eta=1.0, iterations=2)
        assert exc.value.eta == 1.0
        assert exc.value.index == 0

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            sinkhorn_algorithm1(np.zeros((2, 2)), eta=0.0, iterations=1)
        with pytest.raises(ValueError):
            sinkhorn_algorithm1(np.zeros((2, 2)), eta=0.1, iterations=0)


class TestMarginalVariant:
    def test_constant_cost_gives_product_plan(self):
        r = np.array([1.0, 2.0, 1.0])
        c = np.array([2.0, 2.0])
        plan, _ = sinkhorn_marginal(np.full((3, 2), 3.5), r, c, eta=0.4, tol=1e-12)
        want = np.outer(r, c) / r.sum()
        assert np.abs(plan.plan - want).max() <= 1e-10

    def test_converges_to_requested_tolerance(self):
        rng = np.random.default_rng(3)
        cost = rng.random((32, 32))
        plan, _ = sinkhorn_marginal(cost, np.ones(32), np.ones(32), eta=0.05, tol=1e-8)
        assert plan.row_marginal_residual <= 1e-8
        assert plan.col_marginal_residual <= 1e-8

    def test_matches_exact_oracle_at_small_eta(self):
        rng = np.random.default_rng(4)
        cost = rng.random((3, 3))
        plan, _ = sinkhorn_marginal(
            cost, np.ones(3), np.ones(3), eta=0.001, tol=1e-10, max_iter=5000
        )
        oracle = exact_ot_oracle(cost, np.ones(3), np.ones(3))
        assert plan.cost(cost) <= 1.01 * oracle.cost(cost) + 1e-12

    def test_state_reconstructs_plan(self):
        rng = np.random.default_rng(5)
        cost = rng.random((6, 4))
        r = np.full(6, 2.0)
        c = np.full(4, 3.0)
        for eta in (0.5, 0.05, 0.001):
            plan, state = sinkhorn_marginal(cost, r, c, eta=eta, tol=1e-12, max_iter=20000)
            assert np.abs(state.reconstruct(cost) - plan.plan).max() <= 1e-10
            assert (state.alpha > 0).all() and (state.beta > 0).all()

    def test_residuals_nonincreasing_per_sweep(self):
        rng = np.random.default_rng(6)
        cost = rng.random((8, 8))
        prev = np.inf
        for k in range(1, 12):
            plan, _ = sinkhorn_marginal(
                cost, np.ones(8), np.ones(8), eta=0.05, tol=0.0, max_iter=k
            )
            res = max(plan.row_marginal_residual, plan.col_marginal_residual)
            assert res <= prev + 1e-15
            prev = res

    def test_diagonal_free_marginals_are_consistent(self):
        r, c = diagonal_free_marginals(6)
        assert abs(r.sum() - c.sum()) <= 1e-12
        rng = np.random.default_rng(7)
        plan, _ = sinkhorn_marginal(rng.normal(size=(6, 5)), r, c, eta=0.05, tol=1e-9)
        assert plan.row_marginal_residual <= 1e-9
        assert plan.col_marginal_residual <= 1e-9

    def test_inconsistent_totals_raise(self):
        with pytest.raises(ValueError, match="infeasible"):
            sinkhorn_marginal(np.ones((2, 2)), np.ones(2), np.array([1.0, 1.5]), eta=0.1)

    def test_determinism(self):
        rng = np.random.default_rng(8)
        cost = rng.random((5, 5))
        a, _ = sinkhorn_marginal(cost, np.ones(5), np.ones(5), eta=0.05, tol=1e-9)
        b, _ = sinkhorn_marginal(cost, np.ones(5), np.ones(5), eta=0.05, tol=1e-9)
        assert (a.plan == b.plan).all()


class TestExactOracle:
    def test_zero_cost_matching(self):
        cost = 1.0 - np.eye(4)
        plan = exact_ot_oracle(cost, np.ones(4), np.ones(4))
        assert np.abs(plan.plan - np.eye(4)).max() == 0.0
        assert plan.cost(cost) == 0.0

    def test_matches_permutation_brute_force(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            cost = rng.random((3, 3))
            plan = exact_ot_oracle(cost, np.ones(3), np.ones(3))
            assert abs(plan.cost(cost) - brute_force_assignment_cost(cost)) <= 1e-12

    def test_rectangular_matches_vertex_enumeration(self):
        rng = np.random.default_rng(10)
        cost = rng.random((2, 3))
        r = np.array([2.0, 1.0])
        c = np.array([1.0, 1.0, 1.0])
        plan = exact_ot_oracle(cost, r, c)
        assert abs(plan.cost(cost) - brute_force_transport(cost, r, c)) <= 1e-9
        assert plan.row_marginal_residual <= 1e-9
        assert plan.col_marginal_residual <= 1e-9

    def test_size_limit(self):
        with pytest.raises(ValueError, match="m\\*n"):
            exact_ot_oracle(np.ones((20, 20)), np.ones(20), np.ones(20))


class TestEntropicLimit:
    def test_objective_approaches_exact_on_8x8(self):
        for seed in range(8):
            rng = np.random.default_rng(100 + seed)
            cost = rng.random((8, 8))
            plan, _ = sinkhorn_marginal(
                cost, np.ones(8), np.ones(8), eta=1e-3, tol=1e-10, max_iter=5000
            )
            oracle = exact_ot_oracle(cost, np.ones(8), np.ones(8))
            gap = abs(plan.cost(cost) - oracle.cost(cost))
            assert gap <= 0.01 * oracle.cost(cost)
