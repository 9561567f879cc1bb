"""Training configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .diffusion import VARIANCE_KINDS, default_betas
from .evalkit.datasets import KINDS
from .gradients import EstimatorKind

CRITIC_REGS = ("auto", "baseline", "gp")


@dataclass
class TrainConfig:
    # data / diffusion
    T: int = 10
    data_dim: int = 2
    dataset: str = "swiss_roll"
    dataset_noise: Optional[float] = None
    n_data: int = 10_000
    beta_min: Optional[float] = None
    beta_max: Optional[float] = None
    sampler_variance: str = "posterior_beta"
    # networks
    gen_hidden: tuple = (128, 128, 128)
    critic_hidden: tuple = (128, 128)
    baseline_hidden: tuple = (128, 128)
    time_embed_dim: int = 16
    # fine-tuning (Alg. 1)
    estimator: str = EstimatorKind.pg_baseline.value
    critic_reg: str = "auto"
    n_critic: int = 5
    n_generator: int = 1
    batch_m: int = 64
    lam: float = 0.1
    eta_gp: float = 0.001
    gamma: Optional[float] = None
    lr_generator: float = 5e-5
    lr_critic: float = 1e-3
    finetune_epochs: int = 300
    divergence_factor: float = 10.0
    # pretraining
    lr_pretrain: float = 1e-3
    pretrain_epochs: int = 2000
    pretrain_batch: int = 64
    # evaluation
    eval_samples: int = 10_000
    eval_subsample: int = 2048
    eval_repeats: int = 5
    eval_every: int = 25
    eval_sinkhorn: bool = False
    eval_root: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        counts = ("T", "data_dim", "n_data", "n_critic", "batch_m", "pretrain_batch", "eval_samples",
                  "eval_subsample", "eval_repeats", "eval_every")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("n_generator", "finetune_epochs", "pretrain_epochs", "time_embed_dim"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.lam < 0 or self.eta_gp < 0:
            raise ValueError("lambda and eta_gp must be >= 0")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive when set")
        if self.dataset not in KINDS:
            raise ValueError(f"dataset must be one of {KINDS}")
        if self.dataset != "gaussian_cluster" and self.data_dim != 2:
            raise ValueError("toy datasets are two-dimensional")
        EstimatorKind(self.estimator)
        if self.critic_reg not in CRITIC_REGS:
            raise ValueError(f"critic_reg must be one of {CRITIC_REGS}")
        if self.sampler_variance not in VARIANCE_KINDS:
            raise ValueError(f"sampler_variance must be one of {VARIANCE_KINDS}")
        if self.eval_subsample > self.eval_samples:
            raise ValueError("eval_subsample cannot exceed eval_samples")

    @property
    def betas(self) -> tuple[float, float]:
        lo, hi = default_betas(self.T)
        return (self.beta_min if self.beta_min is not None else lo,
                self.beta_max if self.beta_max is not None else hi)

    @property
    def regularizer(self) -> str:
        """Critic regularizer actually used: baseline fitting or gradient penalty."""
        if self.critic_reg != "auto":
            return self.critic_reg
        return "baseline" if self.estimator == EstimatorKind.pg_baseline.value else "gp"

    @property
    def uses_baseline(self) -> bool:
        return self.estimator == EstimatorKind.pg_baseline.value or self.regularizer == "baseline"

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def digest(self) -> str:
        """Short hash of every setting except the seed."""
        d = self.to_dict()
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:10]

    def run_name(self) -> str:
        return f"{self.digest()}-s{self.seed}"


# the paper writes lambda; accept it as an alias in config files
_ALIASES = {"lambda": "lam"}

PRESETS = {
    "toy": {},
    "image": {"lam": 1.0, "n_critic": 5, "n_generator": 10, "gamma": 0.1},
}


def _is_optional(f: dataclasses.Field) -> bool:
    # annotations are strings here (postponed evaluation)
    return str(f.type).startswith("Optional")


def _coerce(f: dataclasses.Field, raw: str):
    raw = raw.strip()
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    if raw.lower() in ("none", "null", ""):
        if _is_optional(f):
            return None
        raise ValueError(f"{f.name} cannot be empty")
    if isinstance(default, bool):
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{f.name}: expected a boolean, got {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    if isinstance(default, tuple):
        return tuple(int(x) for x in raw.replace(",", " ").split())
    if isinstance(default, int) and not _is_optional(f):
        return int(raw)
    if isinstance(default, str):
        return raw
    return float(raw)


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    by_name = {f.name: f for f in fields(TrainConfig)}
    values = (base or TrainConfig()).to_dict()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key == "preset":
            values.update(PRESETS[raw])
            continue
        if key not in by_name:
            raise ValueError(f"line {lineno}: unknown setting {key!r}")
        values[key] = _coerce(by_name[key], raw)
    return TrainConfig(**values)


def load_config(path) -> TrainConfig:
    return parse_config_text(Path(path).read_text())


def dump_config(cfg: TrainConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, tuple):
            v = " ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def apply_overrides(cfg: TrainConfig, pairs: list[str]) -> TrainConfig:
    return parse_config_text("\n".join(pairs), cfg) if pairs else cfg
