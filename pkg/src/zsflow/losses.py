"""The three training objectives and their weighted combination.

* ``loss_flow``: negative conditional log-likelihood of a batch under the
  factorized latent prior, a unit Gaussian on the semantic factor centered at
  the sample's class embedding and a standard Gaussian on the residual, plus
  the flow's volume term. Normalization constants are kept so the modeled
  density integrates to one.
* ``loss_centralize``: pulls each seen class's generated prototype (inverse
  of the embedding with a zero residual) toward that class's mean feature.
* ``loss_immd``: the negated kernel two-sample statistic between a real seen
  batch and a generated unseen batch; minimizing it pushes the generated
  cloud away from the seen data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import ContractError
from .flow import LOG_TWO_PI, FlowModel, LatentCode
from .numcore import Tensor

KERNEL_INVERSE_MULTIQUADRATIC = "inverse_multiquadratic"
KERNEL_GAUSSIAN = "gaussian"


@dataclass
class LossWeights:
    """Multipliers for the three loss terms.

    Nonnegative in normal operation; a negative lambda3 flips the sign of the
    discrepancy term, which is exactly the positive-MMD ablation.
    """

    lambda1: float = 2.0
    lambda2: float = 1.0
    lambda3: float = 0.1


@dataclass
class KernelSpec:
    """Kernel used by the two-sample term.

    ``inverse_multiquadratic`` is parameter free: k(a, b) = 2d / (2d + |a-b|^2)
    with d the feature width. ``gaussian`` uses exp(-|a-b|^2 / (2 bw^2)); its
    bandwidth defaults to sqrt(d) when left unset.
    """

    kind: str = KERNEL_INVERSE_MULTIQUADRATIC
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in (KERNEL_INVERSE_MULTIQUADRATIC, KERNEL_GAUSSIAN):
            raise ContractError(f"unknown kernel kind {self.kind!r}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ContractError(f"bandwidth must be positive, got {self.bandwidth}")


def gaussian_log_density(x: Tensor, mean_rows: Tensor | None = None) -> Tensor:
    """Row-wise log N(x | mean, I), constants included."""
    centered = x if mean_rows is None else x - mean_rows
    width = x.data.shape[1]
    quad = nc.sum(nc.square(centered), axis=1)
    return -0.5 * width * LOG_TWO_PI - 0.5 * quad


def loss_flow(model: FlowModel, v_batch: Tensor, c_batch: Tensor) -> Tensor:
    """Batch mean of the negative conditional log-likelihood.

    ``c_batch`` row i must be the class embedding of sample i's label.
    """
    latent, logdet = model.forward(v_batch)
    if c_batch.data.shape != latent.semantic.data.shape:
        raise ContractError(
            f"embedding batch shape {c_batch.shape} != semantic factor "
            f"shape {latent.semantic.shape}")
    log_lik = (gaussian_log_density(latent.semantic, c_batch)
               + gaussian_log_density(latent.residual)
               + logdet)
    return nc.mean(-log_lik)


def loss_centralize(model: FlowModel, class_embeddings: Tensor,
                    class_means: Tensor) -> Tensor:
    """Mean squared distance between each class prototype and its class mean.

    Prototypes are generated through the inverse pass with a zero residual, so
    gradients reach the model parameters through that pass.
    """
    if class_embeddings.data.shape[0] != class_means.data.shape[0]:
        raise ContractError(
            f"{class_embeddings.data.shape[0]} embeddings vs "
            f"{class_means.data.shape[0]} class means")
    n_classes = class_embeddings.data.shape[0]
    residual = Tensor(np.zeros((n_classes, model.residual_dim)))
    prototypes = model.inverse(LatentCode(class_embeddings, residual))
    gaps = nc.sum(nc.square(prototypes - class_means), axis=1)
    return nc.mean(gaps)


def kernel_eval(spec: KernelSpec, a: Tensor, b: Tensor) -> Tensor:
    """Pairwise kernel matrix between the rows of a and b."""
    distances = nc.sqdist(a, b)
    width = a.data.shape[1]
    if spec.kind == KERNEL_INVERSE_MULTIQUADRATIC:
        scale = 2.0 * width
        return Tensor(scale) / (distances + scale)
    bandwidth = spec.bandwidth if spec.bandwidth is not None else float(np.sqrt(width))
    return nc.exp(distances * (-1.0 / (2.0 * bandwidth * bandwidth)))


def loss_immd(spec: KernelSpec, v_seen: Tensor, v_gen_unseen: Tensor) -> Tensor:
    """Negated two-sample discrepancy between a seen batch and a generated
    unseen batch: 2/n^2 times the summed cross kernel minus 1/(n(n-1)) times
    each within-batch off-diagonal kernel sum."""
    n = v_seen.data.shape[0]
    if v_gen_unseen.data.shape[0] != n:
        raise ContractError(
            f"batch sizes differ: {n} seen vs {v_gen_unseen.data.shape[0]} generated")
    if n < 2:
        raise ContractError("discrepancy needs at least 2 samples per batch")
    k_cross = kernel_eval(spec, v_seen, v_gen_unseen)
    k_seen = kernel_eval(spec, v_seen, v_seen)
    k_gen = kernel_eval(spec, v_gen_unseen, v_gen_unseen)
    eye = Tensor(np.eye(n))
    off_diag = nc.sum(k_seen * (1.0 - eye)) + nc.sum(k_gen * (1.0 - eye))
    return (2.0 / (n * n)) * nc.sum(k_cross) - (1.0 / (n * (n - 1))) * off_diag


def loss_total(weights: LossWeights, l_flow: Tensor, l_c: Tensor,
               l_immd: Tensor) -> Tensor:
    """Weighted sum of the three terms."""
    return (weights.lambda1 * l_flow + weights.lambda2 * l_c
            + weights.lambda3 * l_immd)
