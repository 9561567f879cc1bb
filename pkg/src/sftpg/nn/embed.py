from __future__ import annotations

import numpy as np


def timestep_embedding(t, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal embedding with interleaved (sin, cos) pairs.

    Frequencies are ``max_period ** (-k / (dim/2))`` for ``k = 0..dim/2-1``.
    A scalar ``t`` gives shape (dim,); an array of n steps gives (n, dim).
    """
    if dim <= 0 or dim % 2:
        raise ValueError(f"embedding dim must be positive and even, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError("timesteps must be non-negative")
    half = dim // 2
    freqs = max_period ** (-np.arange(half) / half)
    ang = t_arr[..., None] * freqs
    out = np.empty(t_arr.shape + (dim,))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out
