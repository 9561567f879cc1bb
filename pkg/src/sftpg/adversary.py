"""Critic, value baseline and the objectives they are trained on."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import autograd as ag
from .nn.embed import timestep_embedding
from .nn.mlp import MlpNet, MlpSpec, mlp_forward, mlp_input_grad


@dataclass(frozen=True)
class PgSample:
    x_next: np.ndarray
    x_t: np.ndarray
    x0: np.ndarray
    t: int


@dataclass
class PgBatch:
    """Transitions (x_{t+1}, x_t, x_0, t) stored column-wise."""

    x_next: np.ndarray
    x_t: np.ndarray
    x0: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        m = self.t.shape[0]
        if not (self.x_next.shape == self.x_t.shape == self.x0.shape) or self.x0.shape[0] != m:
            raise ValueError("transition fields must share their leading dimension and shape")

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, idx):
        if np.isscalar(idx):
            return PgSample(self.x_next[idx], self.x_t[idx], self.x0[idx], int(self.t[idx]))
        return PgBatch(self.x_next[idx], self.x_t[idx], self.x0[idx], self.t[idx])

    @classmethod
    def from_samples(cls, samples) -> "PgBatch":
        if isinstance(samples, PgBatch):
            return samples
        samples = list(samples)
        if not samples:
            raise ValueError("no transitions given")
        return cls(
            np.stack([s.x_next for s in samples]),
            np.stack([s.x_t for s in samples]),
            np.stack([s.x0 for s in samples]),
            np.array([s.t for s in samples]),
        )

    @classmethod
    def from_trajectory(cls, traj) -> "PgBatch":
        """All T transitions of every chain in ``traj`` (ordered by t, then chain)."""
        T, x0 = traj.T, traj.x0
        n = x0.shape[0]
        ts = np.arange(T - 1, -1, -1)
        return cls(
            np.concatenate([traj.state(t + 1) for t in ts]),
            np.concatenate([traj.state(t) for t in ts]),
            np.tile(x0, (T, 1)),
            np.repeat(ts, n),
        )


def _points(batch) -> np.ndarray | ag.Tensor:
    if isinstance(batch, ag.Tensor):
        pts = batch
    else:
        pts = np.asarray(getattr(batch, "points", batch), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("sample batches must be non-empty (m, n) arrays")
    return pts


class CriticNet:
    def __init__(self, net: MlpNet):
        if net.spec.output_dim != 1 or net.spec.time_embed_dim:
            raise ValueError("critic must map data points to a scalar")
        self.net = net

    @classmethod
    def build(cls, data_dim: int, rng, hidden=(128, 128), activation: str = "relu") -> "CriticNet":
        return cls(MlpNet.init(MlpSpec(data_dim, hidden, 1, activation), rng))

    def leaves(self) -> list[ag.Tensor]:
        return self.net.weights(requires_grad=True)

    def value(self, x) -> np.ndarray:
        return self.net(np.asarray(x, dtype=np.float64))[:, 0]

    def graph(self, x, weights=None) -> ag.Tensor:
        return ag.tsum(mlp_forward(self.net, x, None, weights), axis=1)


class BaselineNet:
    """V(x_{t+1}, t+1): expected critic value of the chain's endpoint."""

    def __init__(self, net: MlpNet):
        if net.spec.output_dim != 1 or not net.spec.time_embed_dim:
            raise ValueError("baseline must be time-conditioned with scalar output")
        self.net = net

    @classmethod
    def build(cls, data_dim: int, rng, hidden=(128, 128), time_embed_dim: int = 16,
              activation: str = "relu") -> "BaselineNet":
        spec = MlpSpec(data_dim, hidden, 1, activation, time_embed_dim=time_embed_dim)
        return cls(MlpNet.init(spec, rng))

    def leaves(self) -> list[ag.Tensor]:
        return self.net.weights(requires_grad=True)

    def _embed(self, t_next, n):
        return timestep_embedding(np.broadcast_to(np.asarray(t_next), (n,)), self.net.spec.time_embed_dim)

    def value(self, x_next, t_next) -> np.ndarray:
        x_next = np.asarray(x_next, dtype=np.float64)
        return self.net(x_next, self._embed(t_next, x_next.shape[0]))[:, 0]

    def graph(self, x_next, t_next, weights=None) -> ag.Tensor:
        x_next = np.asarray(x_next, dtype=np.float64)
        out = mlp_forward(self.net, x_next, self._embed(t_next, x_next.shape[0]), weights)
        return ag.tsum(out, axis=1)


def ipm_gap(critic: CriticNet, gen_batch, data_batch, weights=None) -> ag.Tensor:
    """mean f(generated) - mean f(data); ``gen_batch`` may be a tracked Tensor."""
    gen, data = _points(gen_batch), _points(data_batch)
    return ag.mean(critic.graph(gen, weights)) - ag.mean(critic.graph(data, weights))


def gradient_penalty(critic: CriticNet, gen_batch, data_batch, rng: np.random.Generator,
                     weights=None) -> ag.Tensor:
    """mean (||grad_x f(x_hat)|| - 1)^2 on random points between shuffled pairs."""
    gen, data = _points(gen_batch), _points(data_batch)
    gen = gen.data if isinstance(gen, ag.Tensor) else gen
    m = min(gen.shape[0], data.shape[0])
    gen = gen[rng.permutation(gen.shape[0])[:m]]
    data = data[rng.permutation(data.shape[0])[:m]]
    u = rng.uniform(size=(m, 1))
    x_hat = u * gen + (1.0 - u) * data
    g = mlp_input_grad(critic.net, x_hat, weights)
    # tiny offset keeps the norm differentiable at a zero gradient
    norm = ag.sqrt(ag.tsum(ag.square(g), axis=1) + 1e-12)
    return ag.mean(ag.square(norm - 1.0))


def baseline_reg(critic: CriticNet, baseline: BaselineNet, buffer_batch,
                 critic_weights=None, baseline_weights=None) -> ag.Tensor:
    """mean (f(x_0) - V(x_{t+1}, t+1))^2 over transitions."""
    batch = PgBatch.from_samples(buffer_batch)
    if len(batch) == 0:
        raise ValueError("baseline_reg needs at least one transition")
    # buffer tuples share endpoints (T per chain), so score each x_0 once
    uniq, inv = np.unique(batch.x0, axis=0, return_inverse=True)
    f0 = ag.getitem(critic.graph(uniq, critic_weights), inv.reshape(-1))
    resid = f0 - baseline.graph(batch.x_next, batch.t + 1, baseline_weights)
    return ag.mean(ag.square(resid))


def critic_objective(critic, baseline, gen_batch, data_batch, buffer_batch, lam: float,
                     critic_weights=None, baseline_weights=None) -> ag.Tensor:
    """L = ipm_gap - lam * baseline_reg, to be ascended in (alpha, omega)."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    gap = ipm_gap(critic, gen_batch, data_batch, critic_weights)
    if lam == 0:
        return gap
    reg = baseline_reg(critic, baseline, buffer_batch, critic_weights, baseline_weights)
    return gap - reg * lam


def gp_objective(critic, gen_batch, data_batch, eta: float, rng, weights=None) -> ag.Tensor:
    """ipm_gap - eta * gradient_penalty, the Lipschitz-regularized alternative."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    gap = ipm_gap(critic, gen_batch, data_batch, weights)
    return gap - gradient_penalty(critic, gen_batch, data_batch, rng, weights) * eta
