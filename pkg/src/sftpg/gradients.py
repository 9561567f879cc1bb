"""Generator-gradient estimators for the IPM objective.

All estimators return the gradient of E[f(x_0)] with respect to the policy
parameters (flat vector), i.e. the direction the generator should descend.
Critic and baseline values enter as constants.

A *policy* is anything exposing ``T``, ``data_dim``, ``leaves()``,
``mean(x_next, t, weights) -> Tensor``, ``mean_np(x_next, t)`` and
``sampler_var(t)``; :class:`~sftpg.diffusion.GeneratorNet` is the main one.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .adversary import PgBatch
from .nn import autograd as ag
from .nn.mlp import param_grad


class EstimatorKind(str, Enum):
    pathwise_gp = "pathwise_gp"
    pg = "pg"
    pg_baseline = "pg_baseline"


def gaussian_logprob_grad_mu(x, mu, var) -> np.ndarray:
    """d/d mu of log N(x; mu, var I) = (x - mu) / var."""
    var = np.asarray(var, dtype=np.float64)
    if np.any(var <= 0):
        raise ValueError("variance must be positive")
    x, mu = np.asarray(x, dtype=np.float64), np.asarray(mu, dtype=np.float64)
    if x.ndim == 2 and var.ndim == 1:
        var = var[:, None]
    return (x - mu) / var


def _score_weighted_grad(policy, batch: PgBatch, weights: np.ndarray) -> np.ndarray:
    """T/m * sum_i w_i d/dtheta log p(x_t | x_{t+1}) over the transitions."""
    m = len(batch)
    leaves = policy.leaves()
    mu = policy.mean(batch.x_next, batch.t, leaves)
    score_mu = gaussian_logprob_grad_mu(batch.x_t, mu.data, policy.sampler_var(batch.t))
    seed = score_mu * weights[:, None] * (policy.T / m)
    # d/dtheta sum(mu * seed) is exactly the vector-Jacobian product we want
    return param_grad(ag.tsum(mu * seed), leaves)


def _weights(critic, batch, baseline=None) -> np.ndarray:
    w = np.asarray(critic.value(batch.x0), dtype=np.float64)
    if baseline is not None:
        w = w - np.asarray(baseline.value(batch.x_next, batch.t + 1), dtype=np.float64)
    return w


def policy_grad(policy, critic, samples) -> np.ndarray:
    """Score-function estimate of grad E[f(x_0)].

    Each transition contributes ``f(x_0) * grad log p_t(x_t | x_{t+1})``.
    Contributions are averaged and multiplied by T, so for transitions drawn
    uniformly over steps (or whole chains) this estimates the full sum over t.
    """
    batch = PgBatch.from_samples(samples)
    if len(batch) == 0:
        raise ValueError("policy_grad needs at least one transition")
    return _score_weighted_grad(policy, batch, _weights(critic, batch))


def policy_grad_baseline(policy, critic, baseline, samples) -> np.ndarray:
    """As :func:`policy_grad` with weights f(x_0) - V(x_{t+1}, t+1)."""
    batch = PgBatch.from_samples(samples)
    if len(batch) == 0:
        raise ValueError("policy_grad_baseline needs at least one transition")
    return _score_weighted_grad(policy, batch, _weights(critic, batch, baseline))


def pathwise_grad(policy, critic, n_traj: int, rng: np.random.Generator) -> np.ndarray:
    """Reparameterized estimate: differentiate f(x_0) through the whole chain.

    ``critic`` must provide ``graph(x, weights)``; its own parameters are held
    fixed, only its input carries gradient.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    leaves = policy.leaves()
    x = ag.Tensor(rng.standard_normal((n_traj, policy.data_dim)))
    for t in range(policy.T - 1, -1, -1):
        noise = rng.standard_normal((n_traj, policy.data_dim)) * np.sqrt(policy.sampler_var(t))
        x = policy.mean(x, t, leaves) + noise
    return param_grad(ag.mean(critic.graph(x)), leaves)


def global_norm(grad) -> float:
    return float(np.sqrt(np.sum(np.square(grad))))


def clip_global_norm(grad: np.ndarray, gamma: float) -> np.ndarray:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    norm = global_norm(grad)
    if norm > gamma:
        return grad * (gamma / norm)
    return grad


class LinearGaussianPolicy:
    """Reference chain mu_t(x_{t+1}) = c * x_{t+1} + theta_t with fixed variance.

    With ``f(x) = sum(x)`` and c = 1 the gradient of E[f(x_0)] with respect to
    every theta entry is exactly 1 (for c = 0 only theta_0 matters).
    """

    def __init__(self, T: int, data_dim: int = 1, c: float = 1.0, var: float = 1.0, theta=None):
        self.T, self.data_dim, self.c, self.var = T, data_dim, c, var
        self.theta = np.zeros((T, data_dim)) if theta is None else np.array(theta, dtype=np.float64).reshape(T, data_dim)

    def leaves(self):
        return [ag.Tensor(self.theta, requires_grad=True)]

    def mean(self, x_next, t, weights=None) -> ag.Tensor:
        theta = (weights or self.leaves())[0]
        x_next = ag.as_tensor(x_next)
        t = np.broadcast_to(np.asarray(t), (x_next.shape[0],))
        return x_next * self.c + ag.getitem(theta, t)

    def mean_np(self, x_next, t) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t), (np.shape(x_next)[0],))
        return self.c * np.asarray(x_next) + self.theta[t]

    def sampler_var(self, t):
        return np.full(np.shape(t), self.var) if np.ndim(t) else self.var


class SumCritic:
    """f(x) = scale * sum(x) (+ offset): linear critic for oracle checks."""

    def __init__(self, scale: float = 1.0, offset: float = 0.0):
        self.scale, self.offset = scale, offset

    def value(self, x) -> np.ndarray:
        return self.scale * np.asarray(x, dtype=np.float64).sum(axis=1) + self.offset

    def graph(self, x, weights=None) -> ag.Tensor:
        return ag.tsum(ag.as_tensor(x), axis=1) * self.scale + self.offset


class ConstantBaseline:
    """V(x_{t+1}, t+1) = c everywhere."""

    def __init__(self, c: float):
        self.c = c

    def value(self, x_next, t_next) -> np.ndarray:
        return np.full(np.shape(x_next)[0], float(self.c))


class LinearBaseline:
    """Per-step affine value V(x, t) = x . a_t + b_t, fit by least squares."""

    def __init__(self, coef: np.ndarray, bias: np.ndarray):
        self.coef, self.bias = coef, bias  # rows indexed by t_next - 1

    @classmethod
    def fit(cls, batch: PgBatch, critic) -> "LinearBaseline":
        target = np.asarray(critic.value(batch.x0), dtype=np.float64)
        T = int(batch.t.max()) + 1
        d = batch.x_next.shape[1]
        coef, bias = np.zeros((T, d)), np.zeros(T)
        for t in range(T):
            sel = batch.t == t
            A = np.hstack([batch.x_next[sel], np.ones((sel.sum(), 1))])
            sol = np.linalg.lstsq(A, target[sel], rcond=None)[0]
            coef[t], bias[t] = sol[:d], sol[d]
        return cls(coef, bias)

    def value(self, x_next, t_next) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t_next), (np.shape(x_next)[0],)) - 1
        return np.einsum("nd,nd->n", np.asarray(x_next), self.coef[t]) + self.bias[t]
