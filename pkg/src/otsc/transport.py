"""Entropic optimal transport via Sinkhorn scaling.

Two solver variants live here. ``sinkhorn_algorithm1`` is the fixed-count
form used to build training targets: exponentiate similarities divided by
``eta``, then alternate column- and row-normalization a fixed number of
times, ending on rows. ``sinkhorn_marginal`` is the tolerance-driven solver
for prescribed marginals; it reports its scaling vectors and is the variant
used for analysis and testing. ``exact_ot_oracle`` solves small instances
exactly and exists for verification only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.special import logsumexp

from .errors import SinkhornUnderflowError
from .linalg import as_matrix

__all__ = [
    "TransportPlan",
    "SinkhornState",
    "sinkhorn_algorithm1",
    "sinkhorn_marginal",
    "exact_ot_oracle",
    "diagonal_free_marginals",
]

# kernel-domain scaling is safe above this eta; below it exp(cost/eta)
# under/overflows and the solver switches to log-domain updates
_LOG_DOMAIN_ETA = 0.01


@dataclass(frozen=True)
class TransportPlan:
    """A transport plan plus the marginal residuals it actually achieved.

    ``row_marginal_residual`` / ``col_marginal_residual`` are max-norm
    deviations from the requested marginals; they are reported as computed,
    never clipped.
    """

    plan: np.ndarray
    row_marginal_residual: float
    col_marginal_residual: float
    iterations_used: int

    def __post_init__(self):
        if (self.plan < 0).any() or not np.isfinite(self.plan).all():
            raise ValueError("transport plan must be nonnegative and finite")

    def cost(self, cost_matrix) -> float:
        """Linear transport objective sum(plan * cost)."""
        return float(np.sum(self.plan * np.asarray(cost_matrix, dtype=np.float64)))


@dataclass(frozen=True)
class SinkhornState:
    """Row/column scalings of a converged marginal-constrained solve.

    Scalings are kept in log form so the state stays representable at small
    ``eta``; ``alpha``/``beta`` expose the positive vectors themselves.
    ``reconstruct(cost)`` rebuilds the plan as
    ``diag(alpha) @ exp(-cost/eta) @ diag(beta)`` evaluated in log space.
    """

    log_alpha: np.ndarray
    log_beta: np.ndarray
    eta: float

    @property
    def alpha(self) -> np.ndarray:
        return np.exp(self.log_alpha)

    @property
    def beta(self) -> np.ndarray:
        return np.exp(self.log_beta)

    def reconstruct(self, cost) -> np.ndarray:
        cost = as_matrix(cost, "cost")
        return np.exp(
            self.log_alpha[:, None] - cost / self.eta + self.log_beta[None, :]
        )


def _check_positive(w: np.ndarray, axis_name: str, axis: int, eta: float) -> np.ndarray:
    sums = w.sum(axis=axis)
    bad = np.flatnonzero(sums <= 0.0)
    if bad.size:
        raise SinkhornUnderflowError(axis_name, int(bad[0]), eta)
    return sums


def sinkhorn_algorithm1(logits, eta: float, iterations: int) -> TransportPlan:
    """Fixed-iteration Sinkhorn on a similarity matrix.

    Computes ``exp(logits/eta)`` (stabilized by subtracting the per-matrix
    max, which cancels in the first normalization) and then alternates
    column-normalize / row-normalize exactly ``iterations`` times. The final
    step is a row normalization, so rows of the result sum to 1 and columns
    are approximately uniform at total mass ``m/n`` each.

    Residuals are reported against those implied marginals: 1 per row and
    ``m/n`` per column.
    """
    logits = as_matrix(logits, "logits")
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    m, n = logits.shape
    scaled = logits / eta
    w = np.exp(scaled - scaled.max())
    for _ in range(iterations):
        w = w / _check_positive(w, "column", 0, eta)[None, :]
        w = w / _check_positive(w, "row", 1, eta)[:, None]
    row_res = float(np.abs(w.sum(axis=1) - 1.0).max())
    col_res = float(np.abs(w.sum(axis=0) - m / n).max())
    return TransportPlan(
        plan=w,
        row_marginal_residual=row_res,
        col_marginal_residual=col_res,
        iterations_used=iterations,
    )


def _check_marginals(row_marginals, col_marginals) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(row_marginals, dtype=np.float64)
    c = np.asarray(col_marginals, dtype=np.float64)
    if r.ndim != 1 or c.ndim != 1:
        raise ValueError("marginals must be 1-D vectors")
    if (r <= 0).any() or (c <= 0).any():
        raise ValueError("marginals must be strictly positive")
    total_r, total_c = float(r.sum()), float(c.sum())
    if abs(total_r - total_c) > 1e-9 * max(1.0, total_r, total_c):
        raise ValueError(
            f"infeasible marginals: row total {total_r!r} != column total {total_c!r}"
        )
    return r, c


def sinkhorn_marginal(
    cost,
    row_marginals,
    col_marginals,
    eta: float,
    tol: float = 1e-9,
    max_iter: int = 10_000,
) -> tuple[TransportPlan, SinkhornState]:
    """Sinkhorn solve of the entropy-regularized transport problem.

    Minimizes ``sum(Q * cost) + eta * sum(Q * log Q)`` subject to the given
    row/column marginals. Sweeps alternate the row and column scaling
    updates until both max-norm marginal residuals fall to ``tol`` or
    ``max_iter`` sweeps elapse; residuals achieved are reported either way.

    Runs in the kernel domain for moderate ``eta`` and switches to
    log-domain updates when ``eta <= 0.01``, where ``exp(-cost/eta)`` is no
    longer representable.
    """
    cost = as_matrix(cost, "cost")
    r, c = _check_marginals(row_marginals, col_marginals)
    m, n = cost.shape
    if r.size != m or c.size != n:
        raise ValueError("marginal lengths must match the cost matrix shape")
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")

    if eta <= _LOG_DOMAIN_ETA:
        plan, log_a, log_b, used = _sinkhorn_log(cost, r, c, eta, tol, max_iter)
    else:
        plan, log_a, log_b, used = _sinkhorn_kernel(cost, r, c, eta, tol, max_iter)

    row_res = float(np.abs(plan.sum(axis=1) - r).max())
    col_res = float(np.abs(plan.sum(axis=0) - c).max())
    state = SinkhornState(log_alpha=log_a, log_beta=log_b, eta=eta)
    return (
        TransportPlan(
            plan=plan,
            row_marginal_residual=row_res,
            col_marginal_residual=col_res,
            iterations_used=used,
        ),
        state,
    )


def _sinkhorn_kernel(cost, r, c, eta, tol, max_iter):
    kernel = np.exp(-cost / eta)
    u = np.ones_like(r)
    v = np.ones_like(c)
    used = 0
    for sweep in range(1, max_iter + 1):
        kv = kernel @ v
        if (kv <= 0).any():
            raise SinkhornUnderflowError("row", int(np.flatnonzero(kv <= 0)[0]), eta)
        u = r / kv
        ku = kernel.T @ u
        if (ku <= 0).any():
            raise SinkhornUnderflowError("column", int(np.flatnonzero(ku <= 0)[0]), eta)
        v = c / ku
        used = sweep
        plan = u[:, None] * kernel * v[None, :]
        if (
            np.abs(plan.sum(axis=1) - r).max() <= tol
            and np.abs(plan.sum(axis=0) - c).max() <= tol
        ):
            break
    plan = u[:, None] * kernel * v[None, :]
    return plan, np.log(u), np.log(v), used


def _sinkhorn_log(cost, r, c, eta, tol, max_iter):
    log_kernel = -cost / eta
    log_r, log_c = np.log(r), np.log(c)
    f = np.zeros_like(r)
    g = np.zeros_like(c)
    used = 0
    for sweep in range(1, max_iter + 1):
        f = log_r - logsumexp(log_kernel + g[None, :], axis=1)
        g = log_c - logsumexp(log_kernel + f[:, None], axis=0)
        used = sweep
        plan = np.exp(f[:, None] + log_kernel + g[None, :])
        if (
            np.abs(plan.sum(axis=1) - r).max() <= tol
            and np.abs(plan.sum(axis=0) - c).max() <= tol
        ):
            break
    plan = np.exp(f[:, None] + log_kernel + g[None, :])
    return plan, f, g, used


def diagonal_free_marginals(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Consistent marginals for an n x (n-1) diagonal-free affinity target.

    Rows carry mass 1; the n-1 columns carry ``n/(n-1)`` each so both sides
    total ``n`` (the literal 1-per-column constraint is infeasible).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    return np.ones(n), np.full(n - 1, n / (n - 1))


def exact_ot_oracle(cost, row_marginals, col_marginals) -> TransportPlan:
    """Exact minimizer of the linear transport objective; tests only.

    Unit square marginals are solved as a linear assignment (the optimum is
    a permutation); general small rectangular instances go through an exact
    LP solve of the transportation polytope. Instances above ``m*n = 256``
    are refused.
    """
    cost = as_matrix(cost, "cost")
    r, c = _check_marginals(row_marginals, col_marginals)
    m, n = cost.shape
    if r.size != m or c.size != n:
        raise ValueError("marginal lengths must match the cost matrix shape")
    if m * n > 256:
        raise ValueError(f"oracle limited to m*n <= 256, got {m}x{n}")

    unit_square = m == n and np.allclose(r, 1.0, atol=1e-12) and np.allclose(c, 1.0, atol=1e-12)
    if unit_square:
        rows, cols = linear_sum_assignment(cost)
        plan = np.zeros_like(cost)
        plan[rows, cols] = 1.0
    else:
        plan = _transportation_lp(cost, r, c)

    row_res = float(np.abs(plan.sum(axis=1) - r).max())
    col_res = float(np.abs(plan.sum(axis=0) - c).max())
    return TransportPlan(
        plan=plan,
        row_marginal_residual=row_res,
        col_marginal_residual=col_res,
        iterations_used=0,
    )


def _transportation_lp(cost, r, c):
    m, n = cost.shape
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        a_eq[m + j, j::n] = 1.0
    b_eq = np.concatenate([r, c])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise ValueError(f"exact transport LP failed: {res.message}")
    return np.clip(res.x.reshape(m, n), 0.0, None)
