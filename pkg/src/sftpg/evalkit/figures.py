"""SVG plots for a finished run: sample overlay, distance curve, sampling paths."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

REQUIRED = ("metrics.csv", "samples.csv", "paths.csv")


def _rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _scatter(rows, out: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    for src, color in (("data", "#999999"), ("generated", "#c0392b")):
        pts = np.array([[float(r["x"]), float(r["y"])] for r in rows if r["source"] == src]).reshape(-1, 2)
        ax.scatter(pts[:, 0], pts[:, 1], s=2, alpha=0.5, color=color, label=src, rasterized=False)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", markerscale=4)
    fig.savefig(out, format="svg")
    plt.close(fig)


def _curve(rows, out: Path) -> None:
    it = [int(float(r["outer_iter"])) for r in rows]
    w2 = [float(r["w2"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(it, w2, marker="o", ms=3)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("evaluation distance")
    if min(w2) > 0:
        ax.set_yscale("log")
    fig.savefig(out, format="svg")
    plt.close(fig)


def _paths(rows, out: Path) -> None:
    by_traj: dict[int, list[tuple[int, float, float]]] = {}
    for r in rows:
        by_traj.setdefault(int(r["traj_id"]), []).append((int(r["t"]), float(r["x"]), float(r["y"])))
    T = max(t for pts in by_traj.values() for t, _, _ in pts)
    fig, ax = plt.subplots(figsize=(5, 5))
    cmap = plt.get_cmap("Blues")
    for pts in by_traj.values():
        pts.sort(key=lambda p: -p[0])
        ax.plot([p[1] for p in pts], [p[2] for p in pts], color="#cccccc", lw=0.5, zorder=1)
    # one group per step; darker means later in the chain (closer to x_0)
    for k, t in enumerate(range(T, -1, -1)):
        xy = np.array([(x, y) for pts in by_traj.values() for s, x, y in pts if s == t]).reshape(-1, 2)
        sc = ax.scatter(xy[:, 0], xy[:, 1], s=6, color=cmap(0.25 + 0.75 * k / max(T, 1)), zorder=2)
        sc.set_gid(f"step-{t}")
    ax.set_aspect("equal")
    fig.savefig(out, format="svg")
    plt.close(fig)


def emit_figures(run_dir) -> list[Path]:
    """Write samples.svg, w2_curve.svg and paths.svg next to the run's CSVs."""
    run_dir = Path(run_dir)
    missing = [name for name in REQUIRED if not (run_dir / name).is_file()]
    if missing:
        raise FileNotFoundError(f"missing inputs in {run_dir}: {', '.join(missing)}")
    tables = {name: _rows(run_dir / name) for name in REQUIRED}
    empty = [name for name, rows in tables.items() if not rows]
    if empty:
        raise ValueError(f"no data rows in: {', '.join(empty)}")
    outs = [run_dir / "samples.svg", run_dir / "w2_curve.svg", run_dir / "paths.svg"]
    _scatter(tables["samples.csv"], outs[0])
    _curve(tables["metrics.csv"], outs[1])
    _paths(tables["paths.csv"], outs[2])
    return outs
