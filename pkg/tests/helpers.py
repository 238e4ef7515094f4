"""Shared oracles and model builders for the test suite."""

from __future__ import annotations

import numpy as np

from zsflow import numcore as nc
from zsflow.flow import FlowModel
from zsflow.numcore import Tensor


def finite_diff_grad(value_fn, param: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued rebuild function with
    respect to every entry of ``param``. ``value_fn`` must recompute the value
    from current parameter data."""
    flat = param.data.reshape(-1)
    grad = np.zeros_like(flat)
    with nc.no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            up = value_fn()
            flat[i] = original - step
            down = value_fn()
            flat[i] = original
            grad[i] = (up - down) / (2.0 * step)
    return grad.reshape(param.data.shape)


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst-case symmetric relative error; absolute near zero."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.abs(analytic) + np.abs(numeric) + 1e-6
    return float((np.abs(analytic - numeric) / denom).max())


def zero_weights(model: FlowModel) -> FlowModel:
    """All subnet parameters to zero: every coupling becomes the identity."""
    for p in model.parameters():
        p.data[...] = 0.0
    return model


def identity_permutations(model: FlowModel) -> FlowModel:
    for perm, _ in model.blocks:
        perm.perm = np.arange(model.visual_dim)
        perm.inverse_perm = np.arange(model.visual_dim)
    return model


def randomize_weights(model: FlowModel, rng: np.random.Generator,
                      scale: float = 1.0) -> FlowModel:
    """Fan-scaled uniform redraw of every subnet parameter, so wide models
    stay numerically sane (mirrors the constructor's +-1/sqrt(width) bounds
    without the small output-layer factor)."""
    for p in model.parameters():
        bound = scale / np.sqrt(p.data.shape[0])
        p.data = rng.uniform(-bound, bound, size=p.data.shape)
    return model
