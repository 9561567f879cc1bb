"""Few-step DDPM samplers fine-tuned against a learned critic with policy gradients."""

from .config import TrainConfig, load_config
from .diffusion import GeneratorNet, NoiseSchedule, make_schedule, sample, sample_trajectory
from .finetune import finetune_sft_pg, pretrain

__version__ = "0.1.0"

__all__ = [
    "GeneratorNet", "NoiseSchedule", "TrainConfig", "finetune_sft_pg", "load_config",
    "make_schedule", "pretrain", "sample", "sample_trajectory",
]
