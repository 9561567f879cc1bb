import numpy as np
import pytest

from sftpg.adversary import (BaselineNet, CriticNet, PgBatch, PgSample, baseline_reg, critic_objective,
                             gp_objective, gradient_penalty, ipm_gap)
from sftpg.diffusion import GeneratorNet, make_schedule, sample_trajectory
from sftpg.nn import MlpNet, MlpSpec, finite_diff_check
from sftpg.nn import autograd as ag


def linear_critic(w, c=0.0):
    net = MlpNet(MlpSpec(len(w), (), 1))
    W, b = net.layers()[0]
    W[:, 0] = w
    b[0] = c
    return CriticNet(net)


def const_baseline(c, dim=2):
    net = MlpNet(MlpSpec(dim, (), 1, time_embed_dim=4))
    net.layers()[0][1][0] = c
    return BaselineNet(net)


def some_batch(n=3, T=4, seed=0):
    g = GeneratorNet.build(2, make_schedule(T, 0.05, 0.4), np.random.default_rng(seed), (8,), 4)
    return PgBatch.from_trajectory(sample_trajectory(g, np.random.default_rng(seed + 1), n))


@pytest.fixture
def pts():
    rng = np.random.default_rng(0)
    return rng.normal(size=(32, 2)), rng.normal(size=(32, 2)) + 0.5


# ipm gap -----------------------------------------------------------------------
def test_gap_identical_batches_is_zero(pts):
    critic = CriticNet.build(2, np.random.default_rng(1), (16, 16))
    assert float(ipm_gap(critic, pts[0], pts[0]).data) == 0.0


def test_gap_constant_critic_is_zero(pts):
    assert float(ipm_gap(linear_critic([0.0, 0.0], 3.0), *pts).data) == pytest.approx(0.0, abs=1e-15)


def test_gap_linear_oracle():
    gen = np.array([[1.0, 5.0], [1.0, -5.0]])
    data = np.array([[0.5, 1.0], [-0.5, 2.0]])
    assert float(ipm_gap(linear_critic([1.0, 0.0]), gen, data).data) == pytest.approx(1.0, abs=1e-15)


def test_gap_antisymmetry(pts):
    critic = CriticNet.build(2, np.random.default_rng(2), (16,))
    neg = CriticNet(MlpNet(critic.net.spec, critic.net.params.copy()))
    # negating the last layer negates the critic
    W, b = neg.net.layers()[-1]
    W *= -1
    b *= -1
    g = float(ipm_gap(critic, *pts).data)
    assert float(ipm_gap(neg, *pts).data) == -g
    assert float(ipm_gap(critic, pts[1], pts[0]).data) == -g


def test_gap_differentiable_in_generated_points(pts):
    x = ag.Tensor(pts[0], requires_grad=True)
    ag.backward(ipm_gap(linear_critic([2.0, -1.0]), x, pts[1]))
    assert np.allclose(x.grad, np.tile([2.0, -1.0], (32, 1)) / 32)


def test_gap_empty_batch():
    with pytest.raises(ValueError):
        ipm_gap(linear_critic([1.0, 0.0]), np.zeros((0, 2)), np.zeros((3, 2)))


# gradient penalty --------------------------------------------------------------------
@pytest.mark.parametrize("w,expected", [([0.6, 0.8], 0.0), ([0.0, 0.0], 1.0), ([2.0, 0.0], 1.0)])
def test_gp_linear_oracles(pts, w, expected):
    val = float(gradient_penalty(linear_critic(w, 0.7), *pts, np.random.default_rng(0)).data)
    # the norm is smoothed by sqrt(. + 1e-12), which shifts a zero gradient to 1e-6
    assert val == pytest.approx(expected, abs=3e-6)


def test_gp_invariant_to_constant_shift(pts):
    critic = CriticNet.build(2, np.random.default_rng(3), (16, 16))
    shifted = CriticNet(MlpNet(critic.net.spec, critic.net.params.copy()))
    shifted.net.layers()[-1][1][0] += 5.0
    a = gradient_penalty(critic, *pts, np.random.default_rng(4)).data
    b = gradient_penalty(shifted, *pts, np.random.default_rng(4)).data
    assert float(a) == float(b)


def test_gp_empty_batch():
    with pytest.raises(ValueError):
        gradient_penalty(linear_critic([1.0, 0.0]), np.zeros((2, 2)), np.zeros((0, 2)), np.random.default_rng(0))


# baseline regularizer ------------------------------------------------------------
def test_baseline_reg_perfect_baseline():
    assert float(baseline_reg(linear_critic([0, 0], 1.5), const_baseline(1.5), some_batch()).data) == 0.0


def test_baseline_reg_zero_baseline():
    val = float(baseline_reg(linear_critic([0, 0], 1.5), const_baseline(0.0), some_batch()).data)
    assert val == pytest.approx(1.5**2, rel=1e-14)


def test_baseline_reg_nonnegative_and_dedup_exact():
    batch = some_batch(n=5)
    critic = CriticNet.build(2, np.random.default_rng(5), (8,))
    base = BaselineNet.build(2, np.random.default_rng(6), (8,), 4)
    val = float(baseline_reg(critic, base, batch).data)
    # direct evaluation without the shared-endpoint shortcut
    direct = np.mean((critic.value(batch.x0) - base.value(batch.x_next, batch.t + 1)) ** 2)
    assert val >= 0 and val == pytest.approx(direct, rel=1e-13)


def test_baseline_reg_accepts_sample_lists():
    batch = some_batch()
    samples = [batch[i] for i in range(len(batch))]
    assert isinstance(samples[0], PgSample)
    critic, base = linear_critic([1.0, 2.0]), const_baseline(0.3)
    assert float(baseline_reg(critic, base, samples).data) == float(baseline_reg(critic, base, batch).data)


def test_baseline_reg_empty():
    with pytest.raises(ValueError):
        baseline_reg(linear_critic([1.0, 0.0]), const_baseline(0.0), [])


# combined objective ----------------------------------------------------------------
def test_objective_lambda_zero_is_gap(pts):
    critic = linear_critic([1.0, -0.5])
    got = critic_objective(critic, const_baseline(9.0), *pts, some_batch(), 0.0)
    assert float(got.data) == float(ipm_gap(critic, *pts).data)


def test_objective_vanishes_when_both_terms_do(pts):
    critic = linear_critic([0.0, 0.0], 2.0)
    assert float(critic_objective(critic, const_baseline(2.0), pts[0], pts[0], some_batch(), 0.1).data) == 0.0


def test_objective_arithmetic():
    # g = 0.5 from a linear critic, R_B = 2.0 from constant offsets
    critic = linear_critic([1.0, 0.0], 0.0)
    gen, data = np.array([[0.5, 0.0]]), np.array([[0.0, 0.0]])
    batch = PgBatch(np.zeros((1, 2)), np.zeros((1, 2)), np.array([[np.sqrt(2.0), 0.0]]), np.array([0]))
    val = float(critic_objective(critic, const_baseline(0.0), gen, data, batch, 0.1).data)
    assert val == pytest.approx(0.3, abs=1e-14)


def test_objective_rejects_negative_lambda(pts):
    with pytest.raises(ValueError):
        critic_objective(linear_critic([1.0, 0.0]), const_baseline(0.0), *pts, some_batch(), -0.1)
    with pytest.raises(ValueError):
        gp_objective(linear_critic([1.0, 0.0]), *pts, -1.0, np.random.default_rng(0))


# gradients ----------------------------------------------------------------------------
@pytest.fixture
def nets():
    rng = np.random.default_rng(7)
    return CriticNet.build(2, rng, (10, 10)), BaselineNet.build(2, rng, (10, 10), 4)


def test_objective_gradients_match_finite_differences(pts, nets):
    critic, base = nets
    batch = some_batch(n=4)
    assert finite_diff_check(critic.net, lambda w: ipm_gap(critic, *pts, w)) < 1e-4
    assert finite_diff_check(
        critic.net, lambda w: gradient_penalty(critic, *pts, np.random.default_rng(8), w)) < 1e-4
    assert finite_diff_check(critic.net, lambda w: baseline_reg(critic, base, batch, w, None)) < 1e-4
    assert finite_diff_check(base.net, lambda w: baseline_reg(critic, base, batch, None, w)) < 1e-4
    assert finite_diff_check(
        critic.net, lambda w: gp_objective(critic, *pts, 0.5, np.random.default_rng(9), w)) < 1e-4


def test_joint_objective_gradient_in_baseline(pts, nets):
    critic, base = nets
    batch = some_batch(n=4)
    cw = critic.leaves()
    bw = base.leaves()
    ag.backward(critic_objective(critic, base, *pts, batch, 0.1, cw, bw))
    # ascending L moves V toward f(x_0): the baseline gradient is -lam * dR/domega
    bw2 = base.leaves()
    ag.backward(baseline_reg(critic, base, batch, None, bw2))
    for a, b in zip(bw, bw2):
        assert np.allclose(a.grad, -0.1 * b.grad, rtol=1e-12, atol=1e-15)


# types --------------------------------------------------------------------------------
def test_pgbatch_from_trajectory_layout():
    g = GeneratorNet.build(2, make_schedule(3, 0.1, 0.3), np.random.default_rng(0), (4,), 4)
    traj = sample_trajectory(g, np.random.default_rng(1), 2)
    b = PgBatch.from_trajectory(traj)
    assert len(b) == 6
    assert sorted(b.t.tolist()) == [0, 0, 1, 1, 2, 2]
    for i in range(len(b)):
        t = b.t[i]
        j = i % 2
        assert np.array_equal(b.x_next[i], traj.state(t + 1)[j])
        assert np.array_equal(b.x_t[i], traj.state(t)[j])
        assert np.array_equal(b.x0[i], traj.x0[j])


def test_pgbatch_shape_check():
    with pytest.raises(ValueError):
        PgBatch(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 2)), np.zeros(2))


def test_net_shape_checks():
    with pytest.raises(ValueError):
        CriticNet(MlpNet(MlpSpec(2, (4,), 2)))
    with pytest.raises(ValueError):
        BaselineNet(MlpNet(MlpSpec(2, (4,), 1)))
