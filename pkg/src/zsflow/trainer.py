"""Adam training of the combined objective over seen data.

Each minibatch evaluates the likelihood term on the seen batch, the prototype
centering term over all seen classes, and the discrepancy term between the
seen batch and a freshly generated unseen batch of the same size, then takes
one Adam step. Ablation switches only rescale the term weights; every random
draw happens regardless of the active ablation so that an ablated run follows
the exact trajectory of the equivalent reweighted run.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import numcore as nc
from .data import ZslDataset
from .errors import ContractError, NumericError
from .flow import FlowModel, LatentCode, save_checkpoint
from .losses import KernelSpec, LossWeights, loss_centralize, loss_flow, loss_immd
from .numcore import Tensor

ABLATIONS = ("none", "no_lc", "no_immd", "no_lc_no_immd", "positive_mmd")

EPOCH_LOG_COLUMNS = ("epoch", "l_flow", "l_c", "l_immd", "total", "wall_seconds")


@dataclass
class TrainConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    learning_rate: float = 5e-4
    batch_size: int = 256
    epochs: int = 40
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    ablation: str = "none"
    clip_gradients: bool = True
    clip_norm: float = 10.0

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ContractError(f"unknown ablation {self.ablation!r}")
        if self.batch_size < 2:
            raise ContractError("batch size must be at least 2")

    def effective_weights(self) -> LossWeights:
        """Loss weights after applying the ablation switch."""
        w = self.weights
        if self.ablation == "no_lc":
            return replace(w, lambda2=0.0)
        if self.ablation == "no_immd":
            return replace(w, lambda3=0.0)
        if self.ablation == "no_lc_no_immd":
            return replace(w, lambda2=0.0, lambda3=0.0)
        if self.ablation == "positive_mmd":
            return replace(w, lambda3=-w.lambda3)
        return w


class AdamState:
    """Per-parameter first/second moment buffers plus the shared step count."""

    def __init__(self):
        self.first_moment: dict[str, np.ndarray] = {}
        self.second_moment: dict[str, np.ndarray] = {}
        self.step_count: int = 0


def adam_step(state: AdamState, named_params: list[tuple[str, Tensor]],
              config: TrainConfig) -> None:
    """One in-place Adam update with bias correction. A non-finite gradient
    aborts before any parameter is touched, naming the offending parameter."""
    for name, param in named_params:
        if param.grad is not None and not np.isfinite(param.grad).all():
            raise NumericError(f"non-finite gradient for parameter {name}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = config.adam_beta1, config.adam_beta2
    for name, param in named_params:
        grad = param.grad if param.grad is not None else np.zeros_like(param.data)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        param.data = param.data - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)


def clip_global_norm(params: list[Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


@dataclass
class EpochReport:
    epoch: int
    l_flow: float
    l_c: float
    l_immd: float
    total: float
    wall_seconds: float


def train_epoch(model: FlowModel, dataset: ZslDataset, config: TrainConfig,
                state: AdamState, rng: np.random.Generator,
                epoch: int = 0) -> EpochReport:
    """One seed-shuffled pass over the seen training split.

    Trailing samples that do not fill a batch are dropped, keeping the
    two-sample term's equal-batch-size requirement satisfied. Returns the
    per-term loss means over the processed batches.
    """
    started = time.perf_counter()
    train_idx = dataset.indices("train_seen")
    n_batches = len(train_idx) // config.batch_size
    if n_batches == 0:
        raise ContractError(
            f"{len(train_idx)} training samples cannot fill a batch of "
            f"{config.batch_size}")
    seen_ids, class_means = dataset.seen_class_means()
    seen_embeddings = dataset.embeddings_for(seen_ids)
    unseen_embeddings = dataset.embeddings_for(dataset.unseen_classes)
    weights = config.effective_weights()
    named_params = model.named_parameters()
    params = [p for _, p in named_params]

    order = rng.permutation(len(train_idx))
    sums = np.zeros(4)
    for b in range(n_batches):
        rows = train_idx[order[b * config.batch_size:(b + 1) * config.batch_size]]
        v_batch = Tensor(dataset.visual[rows])
        c_batch = Tensor(dataset.class_embeddings[dataset.labels[rows]])
        pick = rng.integers(0, len(unseen_embeddings), size=config.batch_size)
        z_residual = rng.standard_normal((config.batch_size, model.residual_dim))

        nc.reset_tape()
        model.zero_grad()
        try:
            l_flow = loss_flow(model, v_batch, c_batch)
            l_c = loss_centralize(model, Tensor(seen_embeddings), Tensor(class_means))
            generated = model.inverse(LatentCode(Tensor(unseen_embeddings[pick]),
                                                 Tensor(z_residual)))
            l_immd = loss_immd(config.kernel, v_batch, generated)
            total = (weights.lambda1 * l_flow + weights.lambda2 * l_c
                     + weights.lambda3 * l_immd)
            nc.backward(total)
        except NumericError as err:
            raise NumericError(f"epoch {epoch}, batch {b}: {err}") from err
        if config.clip_gradients:
            clip_global_norm(params, config.clip_norm)
        adam_step(state, named_params, config)
        sums += (l_flow.item(), l_c.item(), l_immd.item(), total.item())
    nc.reset_tape()

    means = sums / n_batches
    return EpochReport(epoch=epoch, l_flow=means[0], l_c=means[1],
                       l_immd=means[2], total=means[3],
                       wall_seconds=time.perf_counter() - started)


class EpochLogWriter:
    """Append-only CSV of per-epoch loss means."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh).writerow(EPOCH_LOG_COLUMNS)

    def append(self, report: EpochReport) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([
                report.epoch,
                f"{report.l_flow:.17g}",
                f"{report.l_c:.17g}",
                f"{report.l_immd:.17g}",
                f"{report.total:.17g}",
                f"{report.wall_seconds:.6f}",
            ])


def train(model: FlowModel, dataset: ZslDataset, config: TrainConfig,
          output_dir=None, checkpoint_every: int = 1,
          progress=None) -> list[EpochReport]:
    """Run the configured number of epochs. If ``output_dir`` is given, write
    the epoch log there plus a checkpoint every ``checkpoint_every`` epochs
    and a final one."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    state = AdamState()
    log = None
    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        log = EpochLogWriter(output_dir / "training_log.csv")
    reports = []
    for epoch in range(1, config.epochs + 1):
        report = train_epoch(model, dataset, config, state, rng, epoch=epoch)
        reports.append(report)
        if log is not None:
            log.append(report)
        if output_dir is not None and checkpoint_every > 0 and epoch % checkpoint_every == 0:
            save_checkpoint(model, output_dir / f"checkpoint_epoch{epoch:04d}.npz")
        if progress is not None:
            progress(report)
    if output_dir is not None:
        save_checkpoint(model, output_dir / "checkpoint_final.npz")
    return reports
