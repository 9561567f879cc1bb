from __future__ import annotations

from typing import Callable

import numpy as np

from . import autograd as ag
from .mlp import MlpNet, param_grad


def finite_diff_check(
    net: MlpNet,
    loss_fn: Callable[[list[ag.Tensor]], ag.Tensor],
    eps: float = 1e-5,
    floor: float = 1e-6,
) -> float:
    """Max relative error between backward() and central differences.

    ``loss_fn`` receives the leaf weight tensors of ``net`` and must return a
    scalar built from them. The relative error of each coordinate is
    ``|a - n| / max(|a|, |n|, floor)``, so gradients far below ``floor`` are
    compared in absolute terms.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    weights = net.weights()
    analytic = param_grad(loss_fn(weights), weights)
    numeric = np.empty_like(analytic)
    p = net.params
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + eps
        up = float(loss_fn(net.weights(False)).data)
        p[i] = orig - eps
        down = float(loss_fn(net.weights(False)).data)
        p[i] = orig
        numeric[i] = (up - down) / (2.0 * eps)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))
