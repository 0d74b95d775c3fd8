"""Prototype-based cluster assignment and its loss.

A bank of unit-norm prototypes scores each embedding by cosine similarity;
assignment probabilities are the row-softmax of those scores at temperature
``tau_c``. The soft k-means objective ties the assignment target back to
fuzzy clustering: for unit-norm embeddings and prototypes the two are the
same problem up to an affine transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix
from .spectral import softmax_cross_entropy

__all__ = [
    "PrototypeBank",
    "AssignmentBatch",
    "assignment_probabilities",
    "clustering_loss",
    "soft_kmeans_objective",
]


@dataclass(frozen=True)
class PrototypeBank:
    """K unit-norm prototype rows, K >= 2."""

    prototypes: np.ndarray

    def __post_init__(self):
        p = as_matrix(self.prototypes, "prototypes")
        if p.shape[0] < 2:
            raise ValueError("need at least 2 prototypes")
        norms = np.linalg.norm(p, axis=1)
        if np.abs(norms - 1.0).max() > 1e-8:
            raise ValueError("prototype rows must be unit-norm")
        object.__setattr__(self, "prototypes", p)

    @property
    def count(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


@dataclass(frozen=True)
class AssignmentBatch:
    """Assignment logits H = z @ mu.T, their softmax, and the temperature."""

    logits: np.ndarray
    probabilities: np.ndarray
    temperature: float

    @property
    def hard_labels(self) -> np.ndarray:
        """Row argmax with lowest-index tie-break."""
        return np.argmax(self.probabilities, axis=1)


def assignment_probabilities(z, bank: PrototypeBank, tau_c: float) -> AssignmentBatch:
    """Probabilistic cluster assignments of unit-norm embeddings.

    ``logits[i, k] = z_i . mu_k``; probabilities are the row-softmax of
    ``logits / tau_c``.
    """
    z = as_matrix(z, "z")
    if z.shape[1] != bank.dim:
        raise ValueError(
            f"embedding dim {z.shape[1]} does not match prototype dim {bank.dim}"
        )
    if tau_c <= 0:
        raise ValueError("tau_c must be positive")
    logits = z @ bank.prototypes.T
    scaled = logits / tau_c
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return AssignmentBatch(logits=logits, probabilities=probs, temperature=tau_c)


def clustering_loss(target, batch: AssignmentBatch) -> tuple[float, np.ndarray]:
    """Cross entropy of the predicted assignments against a target.

    Returns the summed loss and its gradient with respect to the logits,
    ``(P - target) / tau_c``. Chaining into embeddings and prototypes is the
    trainer's job.
    """
    return softmax_cross_entropy(target, batch.logits, batch.temperature)


def soft_kmeans_objective(z, bank: PrototypeBank, p) -> float:
    """Fuzzy clustering objective sum_ik P_ik ||z_i - mu_k||^2."""
    z = as_matrix(z, "z")
    p = as_matrix(p, "p")
    if p.shape != (z.shape[0], bank.count):
        raise ValueError("p must be B x K")
    diffs = z[:, None, :] - bank.prototypes[None, :, :]
    return float(np.sum(p * np.sum(diffs**2, axis=2)))
