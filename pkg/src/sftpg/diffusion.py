"""Noise schedules, forward/posterior processes and the Gaussian reverse sampler.

Indexing follows the usual DDPM convention: ``x_0`` is data, ``x_T`` is noise,
and the reverse step ``t`` maps ``x_{t+1}`` to ``x_t`` for ``t = 0..T-1``.
Schedule vectors are stored 1-based in spirit (``beta[t-1]`` is beta_t);
use the accessor methods to avoid off-by-one mistakes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import autograd as ag
from .nn.embed import timestep_embedding
from .nn.mlp import MlpNet, MlpSpec, mlp_forward

VARIANCE_KINDS = ("beta", "posterior_beta")


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    sampler_variance: str = "posterior_beta"
    alpha: np.ndarray = field(init=False, repr=False)
    alpha_bar: np.ndarray = field(init=False, repr=False)
    posterior_beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a non-empty vector")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise ValueError("every beta_t must lie in (0, 1)")
        if self.sampler_variance not in VARIANCE_KINDS:
            raise ValueError(f"sampler_variance must be one of {VARIANCE_KINDS}")
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        ab_prev = np.concatenate([[1.0], alpha_bar[:-1]])
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "posterior_beta", (1.0 - ab_prev) / (1.0 - alpha_bar) * beta)

    @property
    def T(self) -> int:
        return self.beta.size

    def abar(self, t):
        """alpha_bar_t with alpha_bar_0 = 1; accepts ints or integer arrays."""
        return np.concatenate([[1.0], self.alpha_bar])[t]

    def step_variance(self, t):
        """Variance of the reverse step x_{t+1} -> x_t, i.e. Sigma_{t+1}.

        With posterior variances the t = 0 entry would be exactly zero, which
        leaves the last transition without a density; it is replaced by
        beta~_2 (or beta_1 when T = 1) so every step stays Gaussian.
        """
        if self.sampler_variance == "beta":
            var = self.beta
        else:
            first = self.posterior_beta[1] if self.T > 1 else self.beta[0]
            var = np.concatenate([[first], self.posterior_beta[1:]])
        return var[t]


def make_schedule(T: int, beta_min: float, beta_max: float, sampler_variance: str = "posterior_beta"):
    """Linearly spaced betas from ``beta_min`` to ``beta_max``."""
    if T < 1:
        raise ValueError("T must be at least 1")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    return NoiseSchedule(np.linspace(beta_min, beta_max, T), sampler_variance)


def default_betas(T: int, cap: float = 0.999) -> tuple[float, float]:
    """The 1000-step linear DDPM range (1e-4, 0.02) stretched to T steps."""
    scale = 1000.0 / T
    return min(1e-4 * scale, cap), min(0.02 * scale, cap)


def _check_step(t, lo: int, hi: int) -> np.ndarray:
    t = np.asarray(t)
    if np.any(t < lo) or np.any(t > hi):
        raise ValueError(f"timestep out of range [{lo}, {hi}]: {t}")
    return t


def _col(v):
    v = np.asarray(v, dtype=np.float64)
    return v[:, None] if v.ndim == 1 else v


def forward_marginal_sample(x0, t, noise, s: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise, for t in 1..T."""
    t = _check_step(t, 1, s.T)
    x0, noise = np.asarray(x0, dtype=np.float64), np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ValueError("noise must have the same shape as x0")
    ab = s.abar(t)
    if x0.ndim == 2 and np.ndim(ab) == 1:
        ab = ab[:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def posterior_coefficients(t, s: NoiseSchedule):
    """Coefficients (c_x0, c_xnext) of the posterior mean of x_t given x_{t+1}, x_0."""
    t = _check_step(t, 0, s.T - 1)
    ab_t, ab_n = s.abar(t), s.abar(t + 1)
    beta_n, alpha_n = s.beta[t], s.alpha[t]
    c0 = np.sqrt(ab_t) * beta_n / (1.0 - ab_n)
    cx = np.sqrt(alpha_n) * (1.0 - ab_t) / (1.0 - ab_n)
    return c0, cx


def posterior_mean(x0, x_next, t, s: NoiseSchedule) -> np.ndarray:
    c0, cx = posterior_coefficients(t, s)
    x0, x_next = np.asarray(x0, dtype=np.float64), np.asarray(x_next, dtype=np.float64)
    if x0.ndim == 2 and np.ndim(c0) == 1:
        c0, cx = c0[:, None], cx[:, None]
    return c0 * x0 + cx * x_next


class GeneratorNet:
    """Noise-prediction network plus schedule, exposed as a Gaussian policy.

    ``mean(x_next, t)`` is mu_theta for the step x_{t+1} -> x_t, derived from
    the predicted noise eps_hat(x_{t+1}, t+1).
    """

    def __init__(self, net: MlpNet, schedule: NoiseSchedule):
        if net.spec.input_dim != net.spec.output_dim:
            raise ValueError("generator input and output dimensions must match")
        self.net = net
        self.schedule = schedule

    @classmethod
    def build(cls, data_dim: int, schedule: NoiseSchedule, rng, hidden=(128, 128, 128),
              time_embed_dim: int = 16, activation: str = "softplus") -> "GeneratorNet":
        spec = MlpSpec(data_dim, hidden, data_dim, activation, time_embed_dim=time_embed_dim)
        return cls(MlpNet.init(spec, rng), schedule)

    @property
    def T(self) -> int:
        return self.schedule.T

    @property
    def data_dim(self) -> int:
        return self.net.spec.input_dim

    def copy(self) -> "GeneratorNet":
        return GeneratorNet(self.net.copy(), self.schedule)

    def leaves(self) -> list[ag.Tensor]:
        return self.net.weights(requires_grad=True)

    def _embed(self, t_next, n: int) -> np.ndarray | None:
        d = self.net.spec.time_embed_dim
        if not d:
            return None
        t_next = np.broadcast_to(np.asarray(t_next), (n,))
        return timestep_embedding(t_next, d)

    def eps(self, x, t_next) -> np.ndarray:
        """Predicted noise at step t_next (1..T), untracked."""
        x = np.asarray(x, dtype=np.float64)
        return self.net(x, self._embed(t_next, x.shape[0]))

    def eps_graph(self, x, t_next, weights=None) -> ag.Tensor:
        x = ag.as_tensor(x)
        return mlp_forward(self.net, x, self._embed(t_next, x.shape[0]), weights)

    def _mean_coefs(self, t, n):
        t = _check_step(t, 0, self.T - 1)
        t = np.broadcast_to(t, (n,))
        s = self.schedule
        inv_sqrt_alpha = 1.0 / np.sqrt(s.alpha[t])
        eps_coef = s.beta[t] / np.sqrt(1.0 - s.abar(t + 1))
        return t, inv_sqrt_alpha[:, None], (inv_sqrt_alpha * eps_coef)[:, None]

    def mean(self, x_next, t, weights=None) -> ag.Tensor:
        """mu_theta(x_{t+1}) as a recorded graph (``weights`` from ``leaves()``)."""
        x_next = ag.as_tensor(x_next)
        t, a, b = self._mean_coefs(t, x_next.shape[0])
        return x_next * a - self.eps_graph(x_next, t + 1, weights) * b

    def mean_np(self, x_next, t) -> np.ndarray:
        x_next = np.asarray(x_next, dtype=np.float64)
        t, a, b = self._mean_coefs(t, x_next.shape[0])
        return x_next * a - self.eps(x_next, t + 1) * b

    def sampler_var(self, t):
        return self.schedule.step_variance(_check_step(t, 0, self.T - 1))


def predicted_mean(g: GeneratorNet, x_next, t, weights=None) -> ag.Tensor:
    return g.mean(x_next, t, weights)


def pretrain_loss(g: GeneratorNet, x0_batch, rng: np.random.Generator, weights=None) -> ag.Tensor:
    """Simplified epsilon-matching loss: mean ||eps - eps_hat(x_t, t)||^2.

    The per-step KL weights of the full variational objective are dropped.
    """
    x0 = np.asarray(x0_batch, dtype=np.float64)
    if x0.ndim != 2 or x0.shape[0] == 0:
        raise ValueError("pretrain_loss needs a non-empty (batch, dim) array")
    t = rng.integers(1, g.T + 1, size=x0.shape[0])
    noise = rng.standard_normal(x0.shape)
    xt = forward_marginal_sample(x0, t, noise, g.schedule)
    diff = g.eps_graph(xt, t, weights) - noise
    return ag.tsum(ag.square(diff)) * (1.0 / x0.shape[0])


@dataclass
class Trajectory:
    """States x_T, x_{T-1}, ..., x_0, each of shape (batch, dim)."""

    states: list[np.ndarray]
    seed: int | None = None

    @property
    def T(self) -> int:
        return len(self.states) - 1

    @property
    def x0(self) -> np.ndarray:
        return self.states[-1]

    def state(self, t: int) -> np.ndarray:
        return self.states[self.T - t]


def sample_trajectory(policy, rng: np.random.Generator, n: int = 1, var_override=None) -> Trajectory:
    """Ancestral sampling; every reverse step, including the last, adds noise.

    ``policy`` needs ``T``, ``data_dim``, ``mean_np(x_next, t)`` and
    ``sampler_var(t)``. ``var_override`` replaces every step variance (0 gives
    the deterministic mean recursion).
    """
    x = rng.standard_normal((n, policy.data_dim))
    states = [x]
    for t in range(policy.T - 1, -1, -1):
        mu = policy.mean_np(x, t)
        var = policy.sampler_var(t) if var_override is None else var_override
        x = mu + np.sqrt(var) * rng.standard_normal(mu.shape)
        states.append(x)
    return Trajectory(states)


def sample(policy, rng: np.random.Generator, n: int, chunk: int = 4096) -> np.ndarray:
    """Final samples x_0 only, generated in chunks to bound memory."""
    out = []
    for start in range(0, n, chunk):
        out.append(sample_trajectory(policy, rng, min(chunk, n - start)).x0)
    return np.concatenate(out, axis=0)


def write_paths(traj: Trajectory, path) -> None:
    """Dump a trajectory as rows ``traj_id,t,x,y`` (2-D data only)."""
    with open(path, "w") as fh:
        fh.write("traj_id,t,x,y\n")
        n = traj.states[0].shape[0]
        for i in range(n):
            for t in range(traj.T, -1, -1):
                p = traj.state(t)[i]
                fh.write(f"{i},{t},{p[0]:.10g},{p[1]:.10g}\n")
