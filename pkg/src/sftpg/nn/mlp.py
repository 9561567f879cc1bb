"""Multilayer perceptrons stored as one flat parameter vector.

Parameters are laid out layer-major: for each layer the weight matrix
(``fan_in x fan_out``, row-major) followed by its bias.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag

ACTIVATIONS = ("softplus", "relu", "leaky_relu")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple[int, ...] = field(default_factory=tuple)
    output_dim: int = 1
    activation: str = "relu"
    slope: float = 0.2
    time_embed_dim: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, self.output_dim, *self.hidden_dims)
        if any(d <= 0 for d in dims) or self.time_embed_dim < 0:
            raise ValueError(f"all layer sizes must be positive: {self}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError("leaky_relu slope must lie in (0, 1)")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        sizes = [self.input_dim + self.time_embed_dim, *self.hidden_dims, self.output_dim]
        return list(zip(sizes[:-1], sizes[1:]))

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_dims)


class MlpNet:
    """An MLP whose weights are views into ``self.params``.

    Updating ``params`` in place (as the optimizer does) updates every layer.
    """

    def __init__(self, spec: MlpSpec, params: np.ndarray | None = None):
        self.spec = spec
        if params is None:
            params = np.zeros(spec.n_params)
        params = np.ascontiguousarray(params, dtype=ag.DTYPE)
        if params.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {params.shape}")
        if not np.all(np.isfinite(params)):
            raise ValueError("parameters must be finite")
        self.params = params

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator) -> "MlpNet":
        """Kaiming fan-in init for (leaky) ReLU, Xavier for softplus; zero biases."""
        net = cls(spec)
        for w, _ in net.layers():
            fan_in, fan_out = w.shape
            if spec.activation == "softplus":
                std = np.sqrt(2.0 / (fan_in + fan_out))
            else:
                std = np.sqrt(2.0 / fan_in)
            w[...] = rng.normal(0.0, std, size=w.shape)
        return net

    def copy(self) -> "MlpNet":
        return MlpNet(self.spec, self.params.copy())

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out, k = [], 0
        for i, o in self.spec.layer_dims:
            w = self.params[k : k + i * o].reshape(i, o)
            k += i * o
            b = self.params[k : k + o]
            k += o
            out.append((w, b))
        return out

    def weights(self, requires_grad: bool = True) -> list[ag.Tensor]:
        """Fresh leaf tensors (W1, b1, W2, b2, ...) over the parameter views."""
        return [ag.Tensor(a, requires_grad) for pair in self.layers() for a in pair]

    def __call__(self, x: np.ndarray, t_embed: np.ndarray | None = None) -> np.ndarray:
        """Untracked forward pass on plain arrays."""
        h = _join_input(self.spec, np.asarray(x, dtype=ag.DTYPE), t_embed)
        layers = self.layers()
        for w, b in layers[:-1]:
            h = _act_np(self.spec, h @ w + b)
        w, b = layers[-1]
        return h @ w + b


def _join_input(spec: MlpSpec, x, t_embed):
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"input must have shape (batch, {spec.input_dim}), got {x.shape}")
    if spec.time_embed_dim:
        if t_embed is None:
            raise ValueError("this network expects a timestep embedding")
        te = t_embed.data if isinstance(t_embed, ag.Tensor) else np.asarray(t_embed)
        if te.shape != (x.shape[0], spec.time_embed_dim):
            raise ValueError(f"t_embed must have shape ({x.shape[0]}, {spec.time_embed_dim})")
    elif t_embed is not None:
        raise ValueError("this network takes no timestep embedding")
    if not spec.time_embed_dim:
        return x
    if isinstance(x, ag.Tensor) or isinstance(t_embed, ag.Tensor):
        return ag.concat([x, t_embed], axis=1)
    return np.concatenate([x, t_embed], axis=1)


def _act_np(spec: MlpSpec, z):
    if spec.activation == "softplus":
        return ag.softplus_np(z)
    if spec.activation == "relu":
        return np.maximum(z, 0.0)
    return np.where(z > 0, z, spec.slope * z)


def _act(spec: MlpSpec, z: ag.Tensor) -> ag.Tensor:
    if spec.activation == "softplus":
        return ag.softplus(z)
    if spec.activation == "relu":
        return ag.relu(z)
    return ag.leaky_relu(z, spec.slope)


def _act_deriv(spec: MlpSpec, z: ag.Tensor) -> ag.Tensor:
    """Activation derivative as a graph node (piecewise-constant ones are constants)."""
    if spec.activation == "softplus":
        return ag.sigmoid(z)
    if spec.activation == "relu":
        return ag.Tensor((z.data > 0).astype(ag.DTYPE))
    return ag.Tensor(np.where(z.data > 0, 1.0, spec.slope))


def mlp_forward(net: MlpNet, x, t_embed=None, weights: list[ag.Tensor] | None = None) -> ag.Tensor:
    """Recorded forward pass.

    ``weights`` defaults to fresh untracked leaves, which is what you want when
    only the input carries gradient (e.g. a frozen critic in pathwise mode).
    """
    if weights is None:
        weights = net.weights(requires_grad=False)
    x = ag.as_tensor(x)
    h = _join_input(net.spec, x, t_embed)
    n = len(weights) // 2
    for i in range(n):
        h = h @ weights[2 * i] + weights[2 * i + 1]
        if i < n - 1:
            h = _act(net.spec, h)
    return h


def mlp_input_grad(net: MlpNet, x, weights: list[ag.Tensor] | None = None) -> ag.Tensor:
    """d f / d x for a scalar-output net, as a graph differentiable in the weights.

    Returns shape (batch, input_dim). The time-embedding slice is dropped.
    """
    if net.spec.output_dim != 1:
        raise ValueError("input gradient is only defined here for scalar outputs")
    if net.spec.time_embed_dim:
        raise ValueError("input gradient is not supported for time-conditioned nets")
    if weights is None:
        weights = net.weights(requires_grad=False)
    x = ag.as_tensor(x)
    _join_input(net.spec, x, None)
    n = len(weights) // 2
    pre = []
    h = x
    for i in range(n - 1):
        z = h @ weights[2 * i] + weights[2 * i + 1]
        pre.append(z)
        h = _act(net.spec, z)
    # reverse sweep written with recorded ops so it can itself be differentiated
    batch = x.shape[0]
    g = ag.matmul(ag.Tensor(np.ones((batch, 1))), ag.transpose(weights[2 * (n - 1)]))
    for i in range(n - 2, -1, -1):
        g = g * _act_deriv(net.spec, pre[i])
        g = ag.matmul(g, ag.transpose(weights[2 * i]))
    return g


def flat_grad(weights: list[ag.Tensor]) -> np.ndarray:
    """Concatenate leaf gradients in parameter order (missing ones are zero)."""
    return np.concatenate(
        [(w.grad if w.grad is not None else np.zeros_like(w.data)).ravel() for w in weights]
    )


def param_grad(loss: ag.Tensor, weights: list[ag.Tensor]) -> np.ndarray:
    """Run backward on a scalar loss and return d loss / d params as a flat vector."""
    ag.backward(loss)
    return flat_grad(weights)


# checkpoint format ---------------------------------------------------------
MAGIC = b"SFTN"
VERSION = 1
_HEAD = struct.Struct("<4sBBdIIII")


def save_mlp(net: MlpNet, path) -> None:
    s = net.spec
    buf = _HEAD.pack(
        MAGIC, VERSION, ACTIVATIONS.index(s.activation), s.slope,
        s.input_dim, s.output_dim, s.time_embed_dim, len(s.hidden_dims),
    )
    buf += struct.pack(f"<{len(s.hidden_dims)}I", *s.hidden_dims)
    buf += struct.pack("<Q", s.n_params)
    buf += net.params.astype("<f8").tobytes()
    Path(path).write_bytes(buf)


def load_mlp(path) -> MlpNet:
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size or raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an MLP checkpoint")
    magic, version, act, slope, din, dout, temb, nh = _HEAD.unpack_from(raw)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = _HEAD.size
    hidden = struct.unpack_from(f"<{nh}I", raw, off)
    off += 4 * nh
    (count,) = struct.unpack_from("<Q", raw, off)
    off += 8
    spec = MlpSpec(din, hidden, dout, ACTIVATIONS[act], slope, temb)
    if count != spec.n_params or len(raw) - off != 8 * count:
        raise ValueError(f"{path}: parameter block does not match header")
    params = np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(ag.DTYPE)
    return MlpNet(spec, params)
