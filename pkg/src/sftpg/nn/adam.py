"""Adam with bias-corrected moment estimates, operating on flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray | None = field(default=None, repr=False)
    second_moment: np.ndarray | None = field(default=None, repr=False)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> None:
    """Descend ``params`` in place along ``grad``."""
    grad = np.asarray(grad, dtype=params.dtype)
    if grad.shape != params.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameters {params.shape}")
    if state.first_moment is None:
        state.first_moment = np.zeros_like(params)
        state.second_moment = np.zeros_like(params)
    elif state.first_moment.shape != params.shape:
        raise ValueError("optimizer state belongs to a different parameter vector")
    state.step_count += 1
    m, v = state.first_moment, state.second_moment
    m *= state.beta1
    m += (1.0 - state.beta1) * grad
    v *= state.beta2
    v += (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**state.step_count)
    v_hat = v / (1.0 - state.beta2**state.step_count)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
