"""DDPM pretraining and alternating critic / generator fine-tuning."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import adversary as adv
from .adversary import BaselineNet, CriticNet, PgBatch
from .config import TrainConfig, dump_config
from .diffusion import GeneratorNet, make_schedule, pretrain_loss, sample, sample_trajectory, write_paths
from .evalkit.datasets import gen_dataset
from .evalkit.evaluate import eval_w2
from .gradients import (EstimatorKind, clip_global_norm, global_norm, pathwise_grad, policy_grad,
                        policy_grad_baseline)
from .nn import autograd as ag
from .nn.adam import AdamState, adam_step
from .nn.mlp import flat_grad, load_mlp, param_grad, save_mlp

log = logging.getLogger(__name__)

# independent RNG streams derived from the run seed
STREAM_INIT, STREAM_PRETRAIN, STREAM_FINETUNE, STREAM_EVAL, STREAM_DATA = range(5)


def stream(seed: int, which: int) -> np.random.Generator:
    return np.random.default_rng([seed, which])


class TrainingDiverged(RuntimeError):
    pass


class ReplayBuffer:
    """Transitions from the current generator; cleared every outer iteration."""

    def __init__(self):
        self._chunks: list[PgBatch] = []
        self._merged: PgBatch | None = None
        self.clears = 0

    def __len__(self) -> int:
        return sum(len(c) for c in self._chunks)

    def clear(self) -> None:
        self._chunks, self._merged = [], None
        self.clears += 1

    def push(self, traj) -> PgBatch:
        batch = PgBatch.from_trajectory(traj)
        self._chunks.append(batch)
        self._merged = None
        return batch

    def contents(self) -> PgBatch:
        if not self._chunks:
            raise RuntimeError("replay buffer is empty")
        if self._merged is None:
            c = self._chunks
            self._merged = PgBatch(
                np.concatenate([b.x_next for b in c]), np.concatenate([b.x_t for b in c]),
                np.concatenate([b.x0 for b in c]), np.concatenate([b.t for b in c]),
            )
        return self._merged

    def sample(self, m: int, rng: np.random.Generator) -> PgBatch:
        """``m`` transitions drawn uniformly with replacement."""
        if not self._chunks:
            raise RuntimeError("cannot sample from an empty replay buffer")
        allb = self.contents()
        return allb[rng.integers(0, len(allb), size=m)]


def buffer_push(buf: ReplayBuffer, traj) -> None:
    buf.push(traj)


def buffer_sample(buf: ReplayBuffer, m: int, rng) -> PgBatch:
    return buf.sample(m, rng)


@dataclass
class MetricsRow:
    outer_iter: int
    epoch: int
    w2: float
    ipm_gap_value: float
    critic_loss: float
    grad_norm_pre_clip: float
    wall_clock_s: float = 0.0

    # wall-clock lives in timing.csv so that metrics.csv is reproducible
    CSV_FIELDS = ("outer_iter", "epoch", "w2", "ipm_gap_value", "critic_loss", "grad_norm_pre_clip")

    def csv(self) -> str:
        return ",".join(_fmt(getattr(self, k)) for k in self.CSV_FIELDS)


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def write_metrics(rows: list[MetricsRow], run_dir) -> None:
    run_dir = Path(run_dir)
    with open(run_dir / "metrics.csv", "w") as fh:
        fh.write(",".join(MetricsRow.CSV_FIELDS) + "\n")
        for r in rows:
            fh.write(r.csv() + "\n")
    with open(run_dir / "timing.csv", "w") as fh:
        fh.write("outer_iter,wall_clock_s\n")
        for r in rows:
            fh.write(f"{r.outer_iter},{r.wall_clock_s:.3f}\n")


def read_metrics(path) -> list[dict]:
    lines = Path(path).read_text().strip().splitlines()
    if len(lines) < 2:
        return []
    head = lines[0].split(",")
    return [dict(zip(head, map(float, ln.split(",")))) for ln in lines[1:]]


# setup ---------------------------------------------------------------------
def build_generator(cfg: TrainConfig, rng=None) -> GeneratorNet:
    lo, hi = cfg.betas
    schedule = make_schedule(cfg.T, lo, hi, cfg.sampler_variance)
    rng = rng if rng is not None else stream(cfg.seed, STREAM_INIT)
    return GeneratorNet.build(cfg.data_dim, schedule, rng, cfg.gen_hidden, cfg.time_embed_dim)


def load_generator(cfg: TrainConfig, path) -> GeneratorNet:
    g = build_generator(cfg)
    net = load_mlp(path)
    if net.spec != g.net.spec:
        raise ValueError(f"checkpoint architecture {net.spec} does not match config {g.net.spec}")
    return GeneratorNet(net, g.schedule)


def training_data(cfg: TrainConfig) -> np.ndarray:
    return gen_dataset(cfg.dataset, cfg.n_data, cfg.dataset_noise, seed=cfg.seed).points


def eval_data(cfg: TrainConfig) -> np.ndarray:
    # held-out draw, independent of the training set
    return gen_dataset(cfg.dataset, cfg.eval_samples, cfg.dataset_noise, seed=cfg.seed + 7919).points


def run_dir_for(cfg: TrainConfig, root) -> Path:
    d = Path(root) / cfg.run_name()
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.txt").write_text(dump_config(cfg))
    meta = gen_dataset(cfg.dataset, 1, cfg.dataset_noise, cfg.seed).meta
    meta["n"] = cfg.n_data
    (d / "meta.json").write_text(json.dumps({"dataset": meta, "run": cfg.run_name()}, indent=2))
    return d


# pretraining -----------------------------------------------------------------
def pretrain(cfg: TrainConfig, rng=None, run_dir=None, data=None) -> GeneratorNet:
    """Adam on the epsilon-matching loss for ``cfg.pretrain_epochs`` epochs."""
    gen = build_generator(cfg)
    rng = rng if rng is not None else stream(cfg.seed, STREAM_PRETRAIN)
    data = training_data(cfg) if data is None else data
    opt = AdamState(lr=cfg.lr_pretrain)
    history = []
    n, bs = data.shape[0], cfg.pretrain_batch
    for epoch in range(cfg.pretrain_epochs):
        perm = rng.permutation(n)
        total, batches = 0.0, 0
        for i in range(0, n, bs):
            w = gen.leaves()
            loss = pretrain_loss(gen, data[perm[i : i + bs]], rng, w)
            adam_step(opt, gen.net.params, param_grad(loss, w))
            total += float(loss.data)
            batches += 1
        history.append(total / batches)
        if epoch % 100 == 0:
            log.info("pretrain epoch %d loss %.5f", epoch, history[-1])
    if run_dir is not None:
        run_dir = Path(run_dir)
        save_mlp(gen.net, run_dir / "pretrained.ckpt")
        with open(run_dir / "pretrain_loss.csv", "w") as fh:
            fh.write("epoch,loss\n")
            fh.writelines(f"{i},{v!r}\n" for i, v in enumerate(history))
    gen.pretrain_history = history
    return gen


# fine-tuning -----------------------------------------------------------------
@dataclass
class FinetuneResult:
    generator: GeneratorNet
    critic: CriticNet
    baseline: BaselineNet | None
    metrics: list[MetricsRow]
    applied_grad_norms: list[float] = field(default_factory=list)
    phases: list[str] = field(default_factory=list)
    buffer_sizes_at_start: list[int] = field(default_factory=list)

    @property
    def initial_w2(self) -> float:
        return self.metrics[0].w2

    @property
    def final_w2(self) -> float:
        return self.metrics[-1].w2


def iterations_per_epoch(cfg: TrainConfig) -> int:
    """Outer iterations whose critic rounds together draw the training set once."""
    return max(1, math.ceil(cfg.n_data / (cfg.batch_m * cfg.n_critic)))


def _critic_round(cfg, gen, critic, baseline, c_opt, b_opt, buf, data, rng):
    m = cfg.batch_m
    traj = sample_trajectory(gen, rng, m)
    batch = buf.push(traj)
    real = data[rng.integers(0, data.shape[0], size=m)]
    cw = critic.leaves()
    gap = adv.ipm_gap(critic, traj.x0, real, cw)
    if cfg.regularizer == "baseline":
        bw = baseline.leaves()
        obj = gap - adv.baseline_reg(critic, baseline, batch, cw, bw) * cfg.lam
        ag.backward(obj * -1.0)  # ascend L
        adam_step(c_opt, critic.net.params, flat_grad(cw))
        adam_step(b_opt, baseline.net.params, flat_grad(bw))
    else:
        obj = gap - adv.gradient_penalty(critic, traj.x0, real, rng, cw) * cfg.eta_gp
        ag.backward(obj * -1.0)
        adam_step(c_opt, critic.net.params, flat_grad(cw))
        if baseline is not None:
            # value fit only; the critic is not regularized by it here
            bw = baseline.leaves()
            ag.backward(adv.baseline_reg(critic, baseline, batch, None, bw))
            adam_step(b_opt, baseline.net.params, flat_grad(bw))
    return float(gap.data), float(obj.data)


def _generator_grad(cfg, gen, critic, baseline, buf, rng):
    kind = EstimatorKind(cfg.estimator)
    if kind is EstimatorKind.pathwise_gp:
        return pathwise_grad(gen, critic, cfg.batch_m, rng)
    samples = buf.sample(cfg.batch_m, rng)
    if kind is EstimatorKind.pg_baseline:
        return policy_grad_baseline(gen, critic, baseline, samples)
    return policy_grad(gen, critic, samples)


def finetune_sft_pg(cfg: TrainConfig, gen: GeneratorNet, rng=None, run_dir=None, data=None,
                    eval_points=None, audit: bool = False, progress=None) -> FinetuneResult:
    """Alternate n_critic critic(+baseline) rounds with n_generator generator steps.

    The generator passed in is copied, never modified. A metrics row (with the
    evaluation distance) is recorded before training and every
    ``cfg.eval_every`` epochs, plus once at the end.
    """
    if gen.T != cfg.T or gen.data_dim != cfg.data_dim:
        raise ValueError("generator does not match the configured T / data_dim")
    gen = gen.copy()
    rng = rng if rng is not None else stream(cfg.seed, STREAM_FINETUNE)
    eval_rng = stream(cfg.seed, STREAM_EVAL)
    init_rng = stream(cfg.seed, STREAM_INIT + 100)
    data = training_data(cfg) if data is None else data
    eval_points = eval_data(cfg) if eval_points is None else eval_points

    critic = CriticNet.build(cfg.data_dim, init_rng, cfg.critic_hidden)
    baseline = (BaselineNet.build(cfg.data_dim, init_rng, cfg.baseline_hidden, cfg.time_embed_dim)
                if cfg.uses_baseline else None)
    c_opt, b_opt = AdamState(lr=cfg.lr_critic), AdamState(lr=cfg.lr_critic)
    g_opt = AdamState(lr=cfg.lr_generator)
    buf = ReplayBuffer()
    result = FinetuneResult(gen, critic, baseline, [])

    per_epoch = iterations_per_epoch(cfg)
    total = per_epoch * cfg.finetune_epochs
    eval_iters = set(range(0, total + 1, per_epoch * cfg.eval_every)) | {total}
    t0 = time.perf_counter()
    gap = crit = gnorm = float("nan")

    def record(it):
        w2 = eval_w2(gen, eval_points, cfg, eval_rng)
        row = MetricsRow(it, it // per_epoch, w2, gap, crit, gnorm, time.perf_counter() - t0)
        result.metrics.append(row)
        log.info("iter %d epoch %d w2 %.5f gap %.4f", it, row.epoch, w2, gap)
        if progress:
            progress(row)
        if len(result.metrics) > 1 and w2 > cfg.divergence_factor * result.initial_w2:
            raise TrainingDiverged(
                f"evaluation distance {w2:.4g} exceeds {cfg.divergence_factor}x the initial "
                f"{result.initial_w2:.4g} at iteration {it}"
            )

    record(0)
    for it in range(1, total + 1):
        buf.clear()
        if audit:
            result.buffer_sizes_at_start.append(len(buf))
        for _ in range(cfg.n_critic):
            gap, crit = _critic_round(cfg, gen, critic, baseline, c_opt, b_opt, buf, data, rng)
            if audit:
                result.phases.append("critic")
        for _ in range(cfg.n_generator):
            grad = _generator_grad(cfg, gen, critic, baseline, buf, rng)
            gnorm = global_norm(grad)
            if cfg.gamma is not None:
                grad = clip_global_norm(grad, cfg.gamma)
            result.applied_grad_norms.append(global_norm(grad))
            adam_step(g_opt, gen.net.params, grad)
            if audit:
                result.phases.append("generator")
        if it in eval_iters:
            record(it)

    if run_dir is not None:
        write_outputs(result, cfg, run_dir, eval_points)
    return result


def write_outputs(result: FinetuneResult, cfg: TrainConfig, run_dir, eval_points) -> None:
    run_dir = Path(run_dir)
    write_metrics(result.metrics, run_dir)
    save_mlp(result.generator.net, run_dir / "finetuned.ckpt")
    save_mlp(result.critic.net, run_dir / "critic.ckpt")
    if result.baseline is not None:
        save_mlp(result.baseline.net, run_dir / "baseline.ckpt")
    rng = stream(cfg.seed, STREAM_EVAL + 10)
    write_samples(sample(result.generator, rng, min(cfg.eval_samples, 10_000)), eval_points, run_dir / "samples.csv")
    write_paths(sample_trajectory(result.generator, stream(cfg.seed, STREAM_EVAL + 11), 50), run_dir / "paths.csv")


def write_samples(generated: np.ndarray, data: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,source\n")
        for src, pts in (("generated", generated), ("data", data)):
            for p in pts:
                fh.write(f"{p[0]:.10g},{p[1]:.10g},{src}\n")
