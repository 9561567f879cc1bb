"""Command-line entry point: ``sftpg <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checks import TOLERANCE, gradcheck_suite
from .config import TrainConfig, apply_overrides, load_config
from .evalkit.evaluate import eval_w2
from .evalkit.figures import emit_figures
from .finetune import (STREAM_EVAL, STREAM_PRETRAIN, TrainingDiverged, eval_data, finetune_sft_pg,
                       load_generator, pretrain, run_dir_for, stream)
from .gradients import EstimatorKind

log = logging.getLogger("sftpg")


def _config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    return apply_overrides(cfg, args.set or [])


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting (repeatable)")
    p.add_argument("--runs", default="runs", help="root directory for run outputs (default: runs)")


def _pretrained(cfg: TrainConfig, run_dir: Path, init: str | None):
    if init:
        return load_generator(cfg, init)
    ckpt = run_dir / "pretrained.ckpt"
    if ckpt.exists():
        log.info("reusing %s", ckpt)
        return load_generator(cfg, ckpt)
    log.info("no pretrained checkpoint given; pretraining for %d epochs", cfg.pretrain_epochs)
    return pretrain(cfg, stream(cfg.seed, STREAM_PRETRAIN), run_dir)


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    run_dir = run_dir_for(cfg, args.runs)
    gen = pretrain(cfg, stream(cfg.seed, STREAM_PRETRAIN), run_dir)
    w2 = eval_w2(gen, eval_data(cfg), cfg, stream(cfg.seed, STREAM_EVAL))
    print(f"run_dir {run_dir}")
    print(f"pretrained w2 {w2:.6g}")
    return 0


def _progress(row) -> None:
    print(f"iter {row.outer_iter:6d}  epoch {row.epoch:4d}  w2 {row.w2:.6g}", flush=True)


def cmd_finetune(args) -> int:
    cfg = _config(args)
    run_dir = run_dir_for(cfg, args.runs)
    gen = _pretrained(cfg, run_dir, args.init)
    try:
        res = finetune_sft_pg(cfg, gen, run_dir=run_dir, progress=_progress)
    except TrainingDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 2
    if args.figures:
        emit_figures(run_dir)
    print(f"run_dir {run_dir}")
    print(f"w2 initial {res.initial_w2:.6g} final {res.final_w2:.6g} ratio {res.initial_w2 / res.final_w2:.3g}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    gen = load_generator(cfg, args.ckpt)
    w2 = eval_w2(gen, eval_data(cfg), cfg, stream(cfg.seed, STREAM_EVAL))
    print(f"w2 {w2:.6g}")
    return 0


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for name, err in gradcheck_suite(args.seed).items():
        ok = err < TOLERANCE
        worst = max(worst, err)
        print(f"{'ok  ' if ok else 'FAIL'} {name:28s} {err:.3e}")
    return 0 if worst < TOLERANCE else 1


def cmd_compare(args) -> int:
    cfg = _config(args)
    out_dir = Path(args.runs) / f"compare-{cfg.run_name()}"
    out_dir.mkdir(parents=True, exist_ok=True)
    gen = _pretrained(cfg, run_dir_for(cfg, args.runs), args.init)
    lines = ["estimator,outer_iter,epoch,w2"]
    status = 0
    for kind in args.estimators.split(","):
        ecfg = cfg.replace(estimator=EstimatorKind(kind.strip()).value)
        sub = out_dir / ecfg.estimator
        sub.mkdir(exist_ok=True)
        print(f"== {ecfg.estimator}", flush=True)
        try:
            res = finetune_sft_pg(ecfg, gen, run_dir=sub, progress=_progress)
            rows = res.metrics
        except TrainingDiverged as exc:
            print(f"diverged: {exc}", file=sys.stderr)
            status, rows = 2, []
        lines += [f"{ecfg.estimator},{r.outer_iter},{r.epoch},{r.w2!r}" for r in rows]
    (out_dir / "curves.csv").write_text("\n".join(lines) + "\n")
    print(f"curves {out_dir / 'curves.csv'}")
    return status


def cmd_figures(args) -> int:
    for p in emit_figures(args.run_dir):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sftpg", description="Few-step DDPM training and adversarial fine-tuning.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train a DDPM on the epsilon-matching loss")
    _add_config_args(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="adversarially fine-tune a pretrained sampler")
    _add_config_args(p)
    p.add_argument("--init", help="pretrained checkpoint (default: pretrain into the run directory)")
    p.add_argument("--figures", action="store_true", help="also write SVG figures")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluation distance of a checkpoint")
    _add_config_args(p)
    p.add_argument("ckpt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every network and objective")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("compare-estimators", help="fine-tune with several estimators from one pretrained net")
    _add_config_args(p)
    p.add_argument("--init", help="pretrained checkpoint")
    p.add_argument("--estimators", default="pg,pg_baseline,pathwise_gp")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("figures", help="render SVG figures for a finished run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_figures)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
