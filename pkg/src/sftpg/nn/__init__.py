"""Numeric substrate: autodiff, MLPs, Adam and timestep embeddings."""

from . import autograd
from .adam import AdamState, adam_step
from .autograd import Tensor, backward
from .embed import timestep_embedding
from .gradcheck import finite_diff_check
from .mlp import MlpNet, MlpSpec, flat_grad, load_mlp, mlp_forward, mlp_input_grad, param_grad, save_mlp

__all__ = [
    "AdamState", "MlpNet", "MlpSpec", "Tensor", "adam_step", "autograd", "backward",
    "finite_diff_check", "flat_grad", "load_mlp", "mlp_forward", "mlp_input_grad",
    "param_grad", "save_mlp", "timestep_embedding",
]
