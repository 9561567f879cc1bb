"""Wasserstein-2 between equal-size point clouds: exact assignment and Sinkhorn."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

EXACT_CAP = 2048


class SinkhornNotConverged(RuntimeError):
    def __init__(self, residual: float, n_iter: int):
        super().__init__(f"Sinkhorn did not converge in {n_iter} iterations (marginal residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class TransportPlan:
    """Optimal matching ``B[perm[i]]`` for ``A[i]``; ``cost`` is the mean squared distance."""

    perm: np.ndarray
    cost: float

    def coupling(self) -> np.ndarray:
        n = self.perm.size
        p = np.zeros((n, n))
        p[np.arange(n), self.perm] = 1.0 / n
        return p


def _points(a) -> np.ndarray:
    a = np.asarray(getattr(a, "points", a), dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    return a


def sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def _pair(A, B, cap):
    a, b = _points(A), _points(B)
    if a.shape != b.shape:
        raise ValueError(f"point sets must have equal size and dimension: {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        raise ValueError("point sets must be non-empty")
    if cap is not None and a.shape[0] > cap:
        raise ValueError(f"exact solver capped at {cap} points, got {a.shape[0]}")
    return a, b


def wasserstein2_exact(A, B, cap: int | None = EXACT_CAP) -> tuple[float, TransportPlan]:
    """W2 = sqrt(min over permutations of the mean squared distance)."""
    a, b = _pair(A, B, cap)
    c = sq_dists(a, b)
    rows, cols = linear_sum_assignment(c)
    perm = cols[np.argsort(rows)]
    cost = float(c[np.arange(len(perm)), perm].mean())
    return float(np.sqrt(cost)), TransportPlan(perm, cost)


def sinkhorn_plan(c: np.ndarray, epsilon: float, max_iter: int = 50_000, tol: float = 1e-4):
    """Sinkhorn with uniform marginals; returns (log plan, residual, iterations).

    Dual potentials are kept in the log domain and the inner loop runs on
    scaling vectors against a kernel stabilized by those potentials; the
    scalings are absorbed back whenever they drift far from 1. The
    regularization is annealed geometrically from the cost scale down to
    ``epsilon`` first, which cuts the iteration count at small ``epsilon`` by
    orders of magnitude. Only iterations at the target ``epsilon`` count
    towards ``max_iter``; ``residual`` is the L1 error of the row marginal.
    """
    n, m = c.shape
    a, b = np.full(n, 1.0 / n), np.full(m, 1.0 / m)
    f, g = np.zeros(n), np.zeros(m)

    def kernel(eps):
        return np.exp((f[:, None] + g[None, :] - c) / eps)

    def absorb(u, v, eps):
        nonlocal f, g
        f = f + eps * np.log(u)
        g = g + eps * np.log(v)

    def iterate(eps, n_iter, check):
        K = kernel(eps)
        u, v = np.ones(n), np.ones(m)
        residual = np.inf
        for it in range(1, n_iter + 1):
            Kv = K @ v
            if not np.all(Kv > 0):
                raise FloatingPointError("Sinkhorn kernel underflow")
            u = a / Kv
            v = b / (K.T @ u)
            if max(np.abs(np.log(u)).max(), np.abs(np.log(v)).max()) > 50.0:
                absorb(u, v, eps)
                K = kernel(eps)
                u, v = np.ones(n), np.ones(m)
            if check and (it % 10 == 0 or it == n_iter):
                residual = float(np.abs(u * (K @ v) - a).sum())
                if residual < tol:
                    absorb(u, v, eps)
                    return residual, it
        absorb(u, v, eps)
        return residual, n_iter

    eps = max(float(c.max()), epsilon)
    while eps > epsilon:
        iterate(eps, 10, False)
        eps = max(eps / 2.0, epsilon)
    residual, it = iterate(epsilon, max_iter, True)
    if residual >= tol:
        raise SinkhornNotConverged(residual, max_iter)
    return (f[:, None] + g[None, :] - c) / epsilon, residual, it


def wasserstein2_sinkhorn(A, B, epsilon: float = 1e-3, max_iter: int = 50_000, tol: float = 1e-4,
                          return_cost: bool = False) -> float:
    """sqrt of the transport cost <P_eps, C> of the entropic plan.

    ``epsilon`` is absolute (same units as the squared distances).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    a, b = _pair(A, B, None)
    c = sq_dists(a, b)
    log_p, _, _ = sinkhorn_plan(c, epsilon, max_iter, tol)
    cost = float((np.exp(log_p) * c).sum())
    return cost if return_cost else float(np.sqrt(cost))
