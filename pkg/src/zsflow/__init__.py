"""Zero-shot recognition with an invertible flow over visual features.

The forward pass of a stack of permutation-coupling blocks maps features to a
semantic factor aligned with class attribute embeddings plus an independent
residual factor; the inverse pass of the same parameters generates features
conditioned on a class embedding. Training combines a conditional likelihood
term, a prototype centering term, and a negated kernel two-sample term that
pushes generated unseen data away from the seen distribution.
"""

from .errors import (ConfigError, ContractError, DataError, DimensionError,
                     NumericError)
from .flow import (CouplingLayer, FlowModel, LatentCode, PermutationLayer,
                   load_checkpoint, log_density, save_checkpoint)
from .losses import (KernelSpec, LossWeights, kernel_eval, loss_centralize,
                     loss_flow, loss_immd, loss_total)
from .numcore import Tensor, backward, no_grad, reset_tape
from .trainer import AdamState, EpochReport, TrainConfig, adam_step, train, train_epoch

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ConfigError",
    "ContractError",
    "CouplingLayer",
    "DataError",
    "DimensionError",
    "EpochReport",
    "FlowModel",
    "KernelSpec",
    "LatentCode",
    "LossWeights",
    "NumericError",
    "PermutationLayer",
    "Tensor",
    "TrainConfig",
    "adam_step",
    "backward",
    "kernel_eval",
    "load_checkpoint",
    "log_density",
    "loss_centralize",
    "loss_flow",
    "loss_immd",
    "loss_total",
    "no_grad",
    "reset_tape",
    "save_checkpoint",
    "train",
    "train_epoch",
]
