"""Invertible network: affine coupling layers interleaved with fixed
column permutations, an exact per-sample log-det, and the exact inverse.

The forward pass maps visual features to a latent split into a semantic part
(first ``semantic_dim`` coordinates) and a non-semantic residual. The inverse
pass maps a (semantic, residual) pair back to a visual feature with the same
parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import ContractError, DimensionError, NumericError
from .numcore import Tensor

CHECKPOINT_FORMAT_VERSION = 1

LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass
class LatentCode:
    """Output of the forward pass: semantic factor plus residual factor."""

    semantic: Tensor
    residual: Tensor

    @property
    def width(self) -> int:
        return self.semantic.data.shape[1] + self.residual.data.shape[1]


class TwoLayerNet:
    """width -> width perceptron with one hidden layer of the same width and
    a leaky-ReLU in between. Weights and biases start uniform in +-1/sqrt(width);
    ``final_scale`` shrinks the output layer."""

    def __init__(self, width: int, rng: np.random.Generator, leaky_slope: float,
                 final_scale: float = 1.0):
        bound = 1.0 / math.sqrt(width)
        self.leaky_slope = leaky_slope
        self.w1 = Tensor(rng.uniform(-bound, bound, (width, width)), requires_grad=True)
        self.b1 = Tensor(rng.uniform(-bound, bound, width), requires_grad=True)
        self.w2 = Tensor(final_scale * rng.uniform(-bound, bound, (width, width)),
                         requires_grad=True)
        self.b2 = Tensor(final_scale * rng.uniform(-bound, bound, width),
                         requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        hidden = nc.leaky_relu(nc.matmul(x, self.w1) + self.b1, self.leaky_slope)
        return nc.matmul(hidden, self.w2) + self.b2

    def named_parameters(self, prefix: str):
        return [(f"{prefix}.w1", self.w1), (f"{prefix}.b1", self.b1),
                (f"{prefix}.w2", self.w2), (f"{prefix}.b2", self.b2)]


class CouplingLayer:
    """Affine coupling: the first half of the columns passes through unchanged
    and parameterizes a scale and a shift applied to the second half.

    The raw scale output is squashed to (-s_clamp, s_clamp) via
    s_clamp * tanh(raw / s_clamp), which keeps exp(scale) bounded without
    breaking invertibility. The per-sample log-det is the row sum of the
    squashed scale.
    """

    def __init__(self, dim: int, rng: np.random.Generator, s_clamp: float = 2.0,
                 leaky_slope: float = 0.01, index: int = 0):
        if dim % 2 != 0:
            raise DimensionError(f"coupling layer width must be even, got {dim}")
        if s_clamp <= 0:
            raise ContractError(f"s_clamp must be positive, got {s_clamp}")
        self.dim = dim
        self.half = dim // 2
        self.s_clamp = float(s_clamp)
        self.index = index
        # Both output layers start small so the stack begins near the identity
        # map; hidden layers keep full-scale random weights.
        self.scale_net = TwoLayerNet(self.half, rng, leaky_slope, final_scale=0.01)
        self.shift_net = TwoLayerNet(self.half, rng, leaky_slope, final_scale=0.01)

    def _clamped_scale(self, anchor: Tensor) -> Tensor:
        raw = self.scale_net(anchor)
        return self.s_clamp * nc.tanh(raw / self.s_clamp)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.data.shape[1] != self.dim:
            raise DimensionError(f"expected width {self.dim}, got {x.data.shape[1]}")
        anchor = nc.slice_cols(x, 0, self.half)
        rest = nc.slice_cols(x, self.half, self.dim)
        scale = self._clamped_scale(anchor)
        shift = self.shift_net(anchor)
        try:
            moved = rest * nc.exp(scale) + shift
        except NumericError as err:
            raise NumericError(f"coupling layer {self.index} forward: {err}") from err
        out = nc.concat_cols(anchor, moved)
        logdet = nc.sum(scale, axis=1)
        return out, logdet

    def inverse(self, z: Tensor) -> Tensor:
        if z.data.shape[1] != self.dim:
            raise DimensionError(f"expected width {self.dim}, got {z.data.shape[1]}")
        anchor = nc.slice_cols(z, 0, self.half)
        moved = nc.slice_cols(z, self.half, self.dim)
        scale = self._clamped_scale(anchor)
        shift = self.shift_net(anchor)
        try:
            rest = (moved - shift) / nc.exp(scale)
        except NumericError as err:
            raise NumericError(f"coupling layer {self.index} inverse: {err}") from err
        return nc.concat_cols(anchor, rest)

    def named_parameters(self, prefix: str):
        return (self.scale_net.named_parameters(f"{prefix}.scale")
                + self.shift_net.named_parameters(f"{prefix}.shift"))


class PermutationLayer:
    """A fixed, seed-determined shuffle of the feature columns; log-det 0."""

    def __init__(self, dim: int, rng: np.random.Generator | None = None,
                 perm: np.ndarray | None = None):
        if perm is None:
            if rng is None:
                raise ContractError("PermutationLayer needs a generator or a permutation")
            perm = rng.permutation(dim)
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(dim)):
            raise ContractError("not a permutation of 0..dim-1")
        self.perm = perm
        self.inverse_perm = np.argsort(perm)

    def forward(self, x: Tensor) -> Tensor:
        return nc.permute_cols(x, self.perm)

    def inverse(self, z: Tensor) -> Tensor:
        return nc.permute_cols(z, self.inverse_perm)


class FlowModel:
    """Stack of (permutation, coupling) blocks over a visual space of even
    width ``visual_dim``, whose latent splits into ``semantic_dim`` semantic
    coordinates and a residual."""

    def __init__(self, visual_dim: int, semantic_dim: int, n_blocks: int = 5,
                 seed: int | np.random.SeedSequence = 0, s_clamp: float = 2.0,
                 leaky_slope: float = 0.01):
        if visual_dim % 2 != 0:
            raise DimensionError(f"visual width must be even, got {visual_dim}")
        if not 0 < semantic_dim < visual_dim:
            raise ContractError(
                f"semantic width must satisfy 0 < {semantic_dim} < {visual_dim}")
        if n_blocks < 1:
            raise ContractError("need at least one block")
        self.visual_dim = visual_dim
        self.semantic_dim = semantic_dim
        self.n_blocks = n_blocks
        self.s_clamp = float(s_clamp)
        self.leaky_slope = float(leaky_slope)
        rng = np.random.default_rng(seed)
        self.blocks: list[tuple[PermutationLayer, CouplingLayer]] = []
        for i in range(n_blocks):
            perm = PermutationLayer(visual_dim, rng)
            coupling = CouplingLayer(visual_dim, rng, s_clamp=s_clamp,
                                     leaky_slope=leaky_slope, index=i)
            self.blocks.append((perm, coupling))

    @property
    def residual_dim(self) -> int:
        return self.visual_dim - self.semantic_dim

    def forward_full(self, v: Tensor) -> tuple[Tensor, Tensor]:
        """Map visual rows to the unsplit latent; returns (z, per-row logdet)."""
        if v.data.ndim != 2 or v.data.shape[1] != self.visual_dim:
            raise DimensionError(f"expected (n, {self.visual_dim}) input, got {v.shape}")
        out = v
        logdet: Tensor | None = None
        for perm, coupling in self.blocks:
            out = perm.forward(out)
            out, block_logdet = coupling.forward(out)
            logdet = block_logdet if logdet is None else logdet + block_logdet
        return out, logdet

    def forward(self, v: Tensor) -> tuple[LatentCode, Tensor]:
        z, logdet = self.forward_full(v)
        latent = LatentCode(
            semantic=nc.slice_cols(z, 0, self.semantic_dim),
            residual=nc.slice_cols(z, self.semantic_dim, self.visual_dim),
        )
        return latent, logdet

    def inverse_full(self, z: Tensor) -> Tensor:
        if z.data.ndim != 2 or z.data.shape[1] != self.visual_dim:
            raise DimensionError(f"expected (n, {self.visual_dim}) latent, got {z.shape}")
        out = z
        for perm, coupling in reversed(self.blocks):
            out = coupling.inverse(out)
            out = perm.inverse(out)
        return out

    def inverse(self, latent: LatentCode) -> Tensor:
        if latent.semantic.data.shape[1] != self.semantic_dim:
            raise DimensionError(
                f"semantic width {latent.semantic.data.shape[1]} != {self.semantic_dim}")
        if latent.residual.data.shape[1] != self.residual_dim:
            raise DimensionError(
                f"residual width {latent.residual.data.shape[1]} != {self.residual_dim}")
        return self.inverse_full(nc.concat_cols(latent.semantic, latent.residual))

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        params = []
        for i, (_, coupling) in enumerate(self.blocks):
            params.extend(coupling.named_parameters(f"block{i}"))
        return params

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def log_density(model: FlowModel, v: Tensor) -> Tensor:
    """Exact log density of each row under the flow with a standard normal
    prior over the full latent space."""
    z, logdet = model.forward_full(v)
    quad = nc.sum(nc.square(z), axis=1)
    const = -0.5 * model.visual_dim * LOG_TWO_PI
    return const - 0.5 * quad + logdet


def save_checkpoint(model: FlowModel, path) -> None:
    """Write a versioned npz container with geometry, permutations, and all
    weights as little-endian float64; loading restores outputs bit-exactly."""
    payload: dict[str, np.ndarray] = {
        "format_version": np.array(CHECKPOINT_FORMAT_VERSION, dtype="<i8"),
        "visual_dim": np.array(model.visual_dim, dtype="<i8"),
        "semantic_dim": np.array(model.semantic_dim, dtype="<i8"),
        "n_blocks": np.array(model.n_blocks, dtype="<i8"),
        "s_clamp": np.array(model.s_clamp, dtype="<f8"),
        "leaky_slope": np.array(model.leaky_slope, dtype="<f8"),
    }
    for i, (perm, _) in enumerate(model.blocks):
        payload[f"perm{i}"] = perm.perm.astype("<i8")
    for name, param in model.named_parameters():
        payload[name] = param.data.astype("<f8")
    np.savez(path, **payload)


def load_checkpoint(path) -> FlowModel:
    with np.load(path) as archive:
        version = int(archive["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ContractError(f"unsupported checkpoint version {version}")
        model = FlowModel(
            visual_dim=int(archive["visual_dim"]),
            semantic_dim=int(archive["semantic_dim"]),
            n_blocks=int(archive["n_blocks"]),
            seed=0,
            s_clamp=float(archive["s_clamp"]),
            leaky_slope=float(archive["leaky_slope"]),
        )
        for i, (perm, _) in enumerate(model.blocks):
            stored = archive[f"perm{i}"].astype(np.int64)
            perm.perm = stored
            perm.inverse_perm = np.argsort(stored)
        for name, param in model.named_parameters():
            param.data = np.array(archive[name], dtype=np.float64, order="C")
            param.grad = None
    return model
