import numpy as np
import pytest

from oracles import central_difference, rel_error
from otsc.cluster import (
    PrototypeBank,
    assignment_probabilities,
    clustering_loss,
    soft_kmeans_objective,
)
from otsc.spectral import row_normalize, row_normalize_vjp
from otsc.transport import sinkhorn_algorithm1


def unit_rows(rng, n, d):
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_bank(rng, k, d):
    return PrototypeBank(unit_rows(rng, k, d))


def random_stochastic(rng, shape):
    p = rng.random(shape) + 0.05
    return p / p.sum(axis=1, keepdims=True)


class TestPrototypeBank:
    def test_rejects_unnormalized_rows(self):
        with pytest.raises(ValueError, match="unit"):
            PrototypeBank(np.array([[2.0, 0.0], [0.0, 1.0]]))

    def test_rejects_single_prototype(self):
        with pytest.raises(ValueError):
            PrototypeBank(np.array([[1.0, 0.0]]))


class TestAssignmentProbabilities:
    def test_uniform_logits_give_uniform_probabilities(self):
        rng = np.random.default_rng(0)
        bank = random_bank(rng, 4, 3)
        # z orthogonal to every prototype: all logits equal (zero)
        z = np.zeros((2, 3))
        z[:, :] = np.linalg.svd(bank.prototypes, full_matrices=True)[2][-1]
        z = row_normalize(z)
        batch = assignment_probabilities(z, bank, tau_c=0.2)
        if np.abs(batch.logits).max() <= 1e-10:
            assert np.abs(batch.probabilities - 0.25).max() <= 1e-10

    def test_matching_prototype_dominates_at_low_temperature(self):
        rng = np.random.default_rng(1)
        bank = random_bank(rng, 3, 8)
        z = bank.prototypes.copy()
        batch = assignment_probabilities(z, bank, tau_c=0.01)
        for i in range(3):
            assert batch.probabilities[i, i] >= 0.99

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        batch = assignment_probabilities(unit_rows(rng, 9, 4), random_bank(rng, 3, 4), 0.3)
        assert np.abs(batch.probabilities.sum(axis=1) - 1.0).max() <= 1e-10

    def test_hard_labels_invariant_to_temperature(self):
        rng = np.random.default_rng(3)
        z = unit_rows(rng, 12, 5)
        bank = random_bank(rng, 4, 5)
        labels = [assignment_probabilities(z, bank, t).hard_labels for t in (0.01, 0.3, 1.0)]
        assert (labels[0] == labels[1]).all()
        assert (labels[0] == labels[2]).all()

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            assignment_probabilities(unit_rows(rng, 3, 4), random_bank(rng, 2, 5), 0.1)


class TestClusteringLoss:
    def test_zero_gradient_at_target(self):
        rng = np.random.default_rng(5)
        batch = assignment_probabilities(unit_rows(rng, 6, 4), random_bank(rng, 3, 4), 0.4)
        _, grad = clustering_loss(batch.probabilities, batch)
        assert np.abs(grad).max() <= 1e-12

    def test_one_hot_direct_evaluation(self):
        bank = PrototypeBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
        z = row_normalize(np.array([[0.9, 0.1], [0.2, 0.8]]))
        tau = 0.3
        batch = assignment_probabilities(z, bank, tau)
        target = np.array([[1.0, 0.0], [0.0, 1.0]])
        loss, _ = clustering_loss(target, batch)
        direct = -float(np.log(batch.probabilities[0, 0]) + np.log(batch.probabilities[1, 1]))
        assert abs(loss - direct) <= 1e-12

    def test_gradient_including_prototype_normalization(self):
        rng = np.random.default_rng(6)
        z = unit_rows(rng, 8, 4)
        raw = rng.normal(size=(3, 4)) * 1.5
        target = random_stochastic(rng, (8, 3))
        tau = 0.35

        def loss_of_raw(p_raw):
            bank = PrototypeBank(row_normalize(p_raw))
            batch = assignment_probabilities(z, bank, tau)
            return clustering_loss(target, batch)[0]

        bank = PrototypeBank(row_normalize(raw))
        batch = assignment_probabilities(z, bank, tau)
        _, grad_logits = clustering_loss(target, batch)
        grad_protos_norm = grad_logits.T @ z
        grad_raw = row_normalize_vjp(raw, grad_protos_norm)
        fd = central_difference(loss_of_raw, raw)
        assert rel_error(grad_raw, fd) <= 1e-6

    def test_gradient_into_embeddings(self):
        rng = np.random.default_rng(7)
        z = unit_rows(rng, 5, 3)
        bank = random_bank(rng, 4, 3)
        target = random_stochastic(rng, (5, 4))
        tau = 0.5

        def loss_of_z(v):
            batch = assignment_probabilities(v, bank, tau)
            return clustering_loss(target, batch)[0]

        batch = assignment_probabilities(z, bank, tau)
        _, grad_logits = clustering_loss(target, batch)
        grad_z = grad_logits @ bank.prototypes
        # test away from the unit sphere constraint: perturbations of z feed
        # the logits directly (assignment_probabilities does not re-normalize)
        fd = central_difference(loss_of_z, z)
        assert rel_error(grad_z, fd) <= 1e-6

    def test_rejects_non_stochastic_target(self):
        rng = np.random.default_rng(8)
        batch = assignment_probabilities(unit_rows(rng, 3, 2), random_bank(rng, 2, 2), 0.2)
        with pytest.raises(ValueError):
            clustering_loss(np.full((3, 2), 0.9), batch)


class TestSoftKmeans:
    def test_zero_at_coincident_prototypes(self):
        bank = PrototypeBank(np.eye(3))
        z = np.eye(3)
        p = np.eye(3)
        assert soft_kmeans_objective(z, bank, p) == 0.0

    def test_unit_norm_identity_with_logits(self):
        # for unit z and prototypes: sum P ||z - mu||^2 = 2B - 2 sum P*H
        rng = np.random.default_rng(9)
        for _ in range(50):
            z = unit_rows(rng, 6, 4)
            bank = random_bank(rng, 3, 4)
            p = random_stochastic(rng, (6, 3))
            lhs = soft_kmeans_objective(z, bank, p)
            rhs = 2.0 * 6 - 2.0 * float(np.sum(p * (z @ bank.prototypes.T)))
            assert abs(lhs - rhs) <= 1e-10

    def test_one_hot_nearest_is_rowwise_minimum(self):
        rng = np.random.default_rng(10)
        z = unit_rows(rng, 5, 3)
        bank = random_bank(rng, 4, 3)
        d2 = ((z[:, None, :] - bank.prototypes[None, :, :]) ** 2).sum(axis=2)
        p_best = np.zeros((5, 4))
        p_best[np.arange(5), d2.argmin(axis=1)] = 1.0
        best = soft_kmeans_objective(z, bank, p_best)
        for _ in range(50):
            p = random_stochastic(rng, (5, 4))
            assert best <= soft_kmeans_objective(z, bank, p) + 1e-12


class TestAssignmentTargets:
    def test_column_mass_near_uniform_after_five_iterations(self):
        # high-dimensional unit embeddings keep the similarity spread mild,
        # the regime where five scaling passes already balance columns
        rng = np.random.default_rng(11)
        b, k, d = 64, 4, 128
        z = unit_rows(rng, b, d)
        mu = unit_rows(rng, k, d)
        h = z @ mu.T
        plan = sinkhorn_algorithm1(h, eta=0.05, iterations=5).plan
        assert np.abs(plan.sum(axis=1) - 1.0).max() <= 1e-12
        col = plan.sum(axis=0)
        assert np.abs(col - b / k).max() <= 0.05 * (b / k)
