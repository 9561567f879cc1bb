"""Toy 2-D datasets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.datasets import make_moons, make_swiss_roll

KINDS = ("swiss_roll", "two_moons", "gaussian_cluster")

SWISS_ROLL_SCALE = 0.1
CLUSTER_CENTER = (0.5, 0.5)
DEFAULT_NOISE = {"swiss_roll": 0.1, "two_moons": 0.05, "gaussian_cluster": 0.01}


@dataclass(frozen=True)
class Dataset:
    kind: str
    n: int
    noise: float
    seed: int
    points: np.ndarray = field(repr=False)

    @property
    def meta(self) -> dict:
        meta = {"kind": self.kind, "n": self.n, "noise": self.noise, "seed": self.seed}
        if self.kind == "swiss_roll":
            meta["scale"] = SWISS_ROLL_SCALE
        return meta


def gen_dataset(kind: str, n: int, noise: float | None = None, seed: int = 0) -> Dataset:
    """Regenerating from the same (kind, n, noise, seed) is bit-identical.

    swiss_roll takes coordinates (0, 2) of the classical 3-D roll, noise
    applied before the 1/10 rescale. two_moons is centred on the origin.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if noise is None:
        noise = DEFAULT_NOISE[kind]
    if noise < 0:
        raise ValueError("noise must be >= 0")
    if kind == "swiss_roll":
        pts = make_swiss_roll(n, noise=noise, random_state=seed)[0][:, [0, 2]] * SWISS_ROLL_SCALE
    elif kind == "two_moons":
        pts, _ = make_moons(n, noise=noise, random_state=seed)
        pts = pts - np.array([0.5, 0.25])
    else:
        rng = np.random.default_rng(seed)
        pts = np.asarray(CLUSTER_CENTER) + noise * rng.standard_normal((n, 2))
    return Dataset(kind, n, float(noise), seed, np.ascontiguousarray(pts, dtype=np.float64))
