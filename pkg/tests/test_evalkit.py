import itertools
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sftpg.config import TrainConfig
from sftpg.evalkit import (SinkhornNotConverged, emit_figures, eval_w2, gen_dataset, subsampled_cost,
                           wasserstein2_exact, wasserstein2_sinkhorn)
from sftpg.evalkit.ot import EXACT_CAP, sinkhorn_plan, sq_dists
from sftpg.finetune import MetricsRow, write_metrics, write_samples


def brute_force_w2(a, b):
    n = a.shape[0]
    best = min(np.mean(((a - b[list(p)]) ** 2).sum(1)) for p in itertools.permutations(range(n)))
    return np.sqrt(best)


# exact solver ----------------------------------------------------------------------
def test_exact_identical_sets():
    a = np.random.default_rng(0).normal(size=(20, 2))
    w, plan = wasserstein2_exact(a, a[::-1])
    assert w == 0.0 and plan.cost == 0.0


def test_exact_single_pair():
    assert wasserstein2_exact(np.array([[0.0, 0.0]]), np.array([[3.0, 0.0]]))[0] == pytest.approx(3.0)


def test_exact_two_pairs():
    w, plan = wasserstein2_exact(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[0.0, 1.0], [1.0, 1.0]]))
    assert w == pytest.approx(1.0, abs=1e-15)
    assert plan.perm.tolist() == [0, 1]


def test_exact_matches_brute_force():
    rng = np.random.default_rng(1)
    for trial in range(100):
        n = int(rng.integers(1, 9))
        a, b = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
        assert abs(wasserstein2_exact(a, b)[0] - brute_force_w2(a, b)) <= 1e-9


def test_plan_is_permutation_coupling():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
    _, plan = wasserstein2_exact(a, b)
    p = plan.coupling()
    assert np.allclose(p.sum(0), 1 / 7) and np.allclose(p.sum(1), 1 / 7)
    assert plan.cost == pytest.approx((p * sq_dists(a, b)).sum(), rel=1e-12)


def test_exact_errors():
    with pytest.raises(ValueError):
        wasserstein2_exact(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        wasserstein2_exact(np.zeros((EXACT_CAP + 1, 2)), np.zeros((EXACT_CAP + 1, 2)))
    with pytest.raises(ValueError):
        wasserstein2_exact(np.zeros((0, 2)), np.zeros((0, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31), st.floats(0.1, 10.0))
def test_exact_metric_properties(n, seed, scale):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.normal(size=(n, 2)) for _ in range(3))
    ab, ba = wasserstein2_exact(a, b)[0], wasserstein2_exact(b, a)[0]
    assert ab == pytest.approx(ba, abs=1e-12)
    assert ab <= wasserstein2_exact(a, c)[0] + wasserstein2_exact(c, b)[0] + 1e-12
    shift = rng.normal(size=2) * 5
    assert abs(wasserstein2_exact(a + shift, b + shift)[0] - ab) <= 1e-9
    assert wasserstein2_exact(scale * a, scale * b)[0] == pytest.approx(scale * ab, rel=1e-9)
    assert ab > 0  # distinct continuous draws never coincide as multisets


# sinkhorn -------------------------------------------------------------------------------
@pytest.fixture(scope="module")
def pair256():
    rng = np.random.default_rng(3)
    return rng.normal(size=(256, 2)), rng.normal(size=(256, 2))


def test_sinkhorn_self_distance_small():
    a = np.random.default_rng(4).normal(size=(256, 2))
    assert wasserstein2_sinkhorn(a, a, 1e-3) < 0.01


def test_sinkhorn_close_to_exact(pair256):
    a, b = pair256
    exact = wasserstein2_exact(a, b)[0]
    assert abs(wasserstein2_sinkhorn(a, b, 1e-3) - exact) / exact < 0.05


def test_sinkhorn_monotone_in_epsilon(pair256):
    a, b = pair256
    vals = [wasserstein2_sinkhorn(a, b, eps) for eps in (0.1, 0.03, 0.01)]
    assert vals[0] >= vals[1] >= vals[2] >= wasserstein2_exact(a, b)[0]


def test_sinkhorn_plan_marginals():
    rng = np.random.default_rng(5)
    c = sq_dists(rng.normal(size=(30, 2)), rng.normal(size=(30, 2)))
    log_p, residual, _ = sinkhorn_plan(c, 0.05, tol=1e-10)
    p = np.exp(log_p)
    assert np.allclose(p.sum(1), 1 / 30, atol=1e-10) and np.allclose(p.sum(0), 1 / 30, atol=1e-10)
    assert residual < 1e-10


def test_sinkhorn_reports_non_convergence(pair256):
    with pytest.raises(SinkhornNotConverged) as exc:
        wasserstein2_sinkhorn(*pair256, 1e-3, max_iter=5, tol=1e-12)
    assert exc.value.residual > 1e-12
    assert "residual" in str(exc.value)


def test_sinkhorn_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        wasserstein2_sinkhorn(np.zeros((2, 2)), np.zeros((2, 2)), 0.0)


# datasets ----------------------------------------------------------------------------------
def test_cluster_without_noise_is_a_point():
    d = gen_dataset("gaussian_cluster", 50, 0.0, 1)
    assert np.all(d.points == 0.5)


@pytest.mark.parametrize("kind", ["swiss_roll", "two_moons", "gaussian_cluster"])
def test_dataset_reproducible(kind):
    a, b = gen_dataset(kind, 500, seed=7), gen_dataset(kind, 500, seed=7)
    assert a.points.tobytes() == b.points.tobytes()
    assert not np.array_equal(a.points, gen_dataset(kind, 500, seed=8).points)
    assert a.points.shape == (500, 2) and np.all(np.isfinite(a.points))


def test_cluster_std():
    pts = gen_dataset("gaussian_cluster", 10_000, 0.01, 0).points
    assert np.all((pts.std(0) >= 0.008) & (pts.std(0) <= 0.012))


def test_swiss_roll_scale():
    d = gen_dataset("swiss_roll", 5000, seed=0)
    assert np.abs(d.points).max() < 1.6
    assert d.meta["scale"] == 0.1
    # the spiral: radius grows with the angle, so radii span a wide range
    r = np.linalg.norm(d.points, axis=1)
    assert r.min() < 0.6 and r.max() > 1.2


def test_two_moons_centred():
    d = gen_dataset("two_moons", 5000, seed=0)
    assert np.allclose(d.points.mean(0), 0.0, atol=0.05)


def test_dataset_errors():
    with pytest.raises(ValueError):
        gen_dataset("spiral", 10)
    with pytest.raises(ValueError):
        gen_dataset("two_moons", 0)
    with pytest.raises(ValueError):
        gen_dataset("two_moons", 10, noise=-1.0)


# evaluation protocol --------------------------------------------------------------------
class Replay:
    """Test double: a sampler that returns stored points."""

    T, data_dim = 1, 2

    def __init__(self, pts):
        self.pts = pts


def test_memorizing_generator_matches_self_distance():
    cfg = TrainConfig(eval_samples=4096, eval_subsample=1024, eval_repeats=3)
    data = gen_dataset("swiss_roll", 4096, seed=0).points
    memo = gen_dataset("swiss_roll", 4096, seed=0).points[::-1].copy()
    got = eval_w2(Replay(memo), data, cfg, np.random.default_rng(0), samples=memo)
    # the data compared with itself under independent subsampling
    floor = eval_w2(None, data, cfg, np.random.default_rng(1), samples=data)
    assert got == pytest.approx(floor, rel=0.35)


def test_subsampled_cost_of_identical_sets_is_small():
    a = gen_dataset("two_moons", 2000, seed=0).points
    assert subsampled_cost(a, a, 2000, 1, np.random.default_rng(0)) < 1e-15


def test_eval_root_option():
    data = gen_dataset("two_moons", 512, seed=0).points
    other = gen_dataset("two_moons", 512, seed=1).points
    cfg = TrainConfig(eval_samples=512, eval_subsample=256, eval_repeats=2)
    sq = eval_w2(None, data, cfg, np.random.default_rng(0), samples=other)
    root = eval_w2(None, data, cfg.replace(eval_root=True), np.random.default_rng(0), samples=other)
    assert root == pytest.approx(np.sqrt(sq), rel=1e-12)


# figures ------------------------------------------------------------------------------------
def _run_dir(tmp_path, rows=1, T=3, n_traj=50):
    rng = np.random.default_rng(0)
    write_metrics([MetricsRow(i * 10, i, 0.1 / (i + 1), 0.0, 0.0, 0.0) for i in range(rows)], tmp_path)
    write_samples(rng.normal(size=(20, 2)), rng.normal(size=(20, 2)), tmp_path / "samples.csv")
    with open(tmp_path / "paths.csv", "w") as fh:
        fh.write("traj_id,t,x,y\n")
        for i in range(n_traj):
            for t in range(T, -1, -1):
                fh.write(f"{i},{t},{rng.normal()},{rng.normal()}\n")
    return tmp_path


def test_figures_written(tmp_path):
    outs = emit_figures(_run_dir(tmp_path, rows=4))
    assert [p.name for p in outs] == ["samples.svg", "w2_curve.svg", "paths.svg"]
    for p in outs:
        assert p.read_text().lstrip().startswith("<?xml") and "</svg>" in p.read_text()


def test_single_row_curve_is_valid(tmp_path):
    outs = emit_figures(_run_dir(tmp_path, rows=1))
    assert "</svg>" in outs[1].read_text()


def test_path_plot_has_one_grade_per_step(tmp_path):
    run = _run_dir(tmp_path, T=10, n_traj=50)
    svg = emit_figures(run)[2].read_text()
    groups = set(re.findall(r'id="(step-\d+)"', svg))
    assert groups == {f"step-{t}" for t in range(11)}


def test_missing_inputs_listed(tmp_path):
    (tmp_path / "metrics.csv").write_text("outer_iter,epoch,w2\n0,0,0.1\n")
    with pytest.raises(FileNotFoundError) as exc:
        emit_figures(tmp_path)
    assert "samples.csv" in str(exc.value) and "paths.csv" in str(exc.value)


def test_empty_metrics_rejected(tmp_path):
    run = _run_dir(tmp_path)
    write_metrics([], run)
    with pytest.raises(ValueError):
        emit_figures(run)
