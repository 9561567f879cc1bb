from __future__ import annotations

import numpy as np

from ..diffusion import sample
from .ot import wasserstein2_exact, wasserstein2_sinkhorn


def subsampled_cost(a: np.ndarray, b: np.ndarray, size: int, repeats: int, rng: np.random.Generator) -> float:
    """Mean exact transport cost (mean squared distance) over random equal-size subsamples."""
    costs = []
    for _ in range(repeats):
        ia = rng.choice(a.shape[0], size, replace=False)
        ib = rng.choice(b.shape[0], size, replace=False)
        costs.append(wasserstein2_exact(a[ia], b[ib])[1].cost)
    return float(np.mean(costs))


def eval_w2(gen, data, config, rng: np.random.Generator, samples: np.ndarray | None = None) -> float:
    """Distance between generated samples and ``data`` under the configured protocol.

    Draws ``config.eval_samples`` points from the sampler (unless ``samples``
    is given) and compares them with the data points, averaging the exact
    optimal-transport cost over ``eval_repeats`` subsamples of size
    ``eval_subsample``. ``config.eval_sinkhorn`` switches to one Sinkhorn
    solve on the full sets.

    The value is the optimal mean squared distance, i.e. W2 squared, which is
    what POT's ``emd2`` reports for a squared-Euclidean cost. Set
    ``config.eval_root`` for W2 itself.
    """
    pts = np.asarray(getattr(data, "points", data), dtype=np.float64)
    n = min(config.eval_samples, pts.shape[0])
    if samples is None:
        samples = sample(gen, rng, n)
    if pts.shape[0] > n:
        pts = pts[rng.choice(pts.shape[0], n, replace=False)]
    if config.eval_sinkhorn:
        cost = wasserstein2_sinkhorn(samples[:n], pts, epsilon=1e-3, max_iter=20000, return_cost=True)
    else:
        cost = subsampled_cost(samples, pts, min(config.eval_subsample, n), config.eval_repeats, rng)
    return float(np.sqrt(cost)) if config.eval_root else cost
