"""Finite-difference verification of every trainable network and objective."""

from __future__ import annotations

import numpy as np

from . import adversary as adv
from .adversary import BaselineNet, CriticNet, PgBatch
from .diffusion import GeneratorNet, make_schedule, predicted_mean, pretrain_loss, sample_trajectory
from .nn import autograd as ag
from .nn.gradcheck import finite_diff_check
from .nn.mlp import mlp_forward

TOLERANCE = 1e-4


def gradcheck_suite(seed: int = 0, hidden=(12, 12)) -> dict[str, float]:
    """Max relative error per check; small nets keep this to a few seconds.

    Keys name the quantity being differentiated and the parameters it is taken
    with respect to.
    """
    rng = np.random.default_rng(seed)
    sched = make_schedule(4, 0.05, 0.5)
    gen = GeneratorNet.build(2, sched, rng, hidden, time_embed_dim=4)
    critic = CriticNet.build(2, rng, hidden)
    base = BaselineNet.build(2, rng, hidden, time_embed_dim=4)
    x_gen = rng.normal(size=(6, 2))
    x_data = rng.normal(size=(6, 2))
    batch = PgBatch.from_trajectory(sample_trajectory(gen, rng, 3))
    target = rng.normal(size=(6, 2))
    gp_seed = int(rng.integers(2**31))
    loss_seed = int(rng.integers(2**31))

    out = {}
    for name, net in (("generator_net", gen.net), ("critic_net", critic.net), ("baseline_net", base.net)):
        te = np.tile(np.linspace(-1, 1, net.spec.time_embed_dim), (6, 1)) if net.spec.time_embed_dim else None
        y = rng.normal(size=(6, net.spec.output_dim))
        out[name] = finite_diff_check(
            net, lambda w, net=net, te=te, y=y: ag.tsum(ag.square(mlp_forward(net, x_gen, te, w) - y))
        )
    out["ipm_gap/critic"] = finite_diff_check(critic.net, lambda w: adv.ipm_gap(critic, x_gen, x_data, w))
    out["gradient_penalty/critic"] = finite_diff_check(
        critic.net,
        lambda w: adv.gradient_penalty(critic, x_gen, x_data, np.random.default_rng(gp_seed), w),
    )
    out["baseline_reg/critic"] = finite_diff_check(
        critic.net, lambda w: adv.baseline_reg(critic, base, batch, w, None)
    )
    out["baseline_reg/baseline"] = finite_diff_check(
        base.net, lambda w: adv.baseline_reg(critic, base, batch, None, w)
    )
    t = np.array([0, 1, 2, 3, 0, 3])
    out["predicted_mean/generator"] = finite_diff_check(
        gen.net, lambda w: ag.tsum(ag.square(predicted_mean(gen, x_gen, t, w) - target))
    )
    out["pretrain_loss/generator"] = finite_diff_check(
        gen.net, lambda w: pretrain_loss(gen, x_data, np.random.default_rng(loss_seed), w)
    )
    return out
