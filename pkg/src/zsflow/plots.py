"""Figure rendering for the report paths.

Every CSV the commands emit has a matching PNG next to it; the CSVs stay the
canonical record, the figures are for eyeballing runs. Rendering is headless
(Agg) and uses a fixed style so repeated runs draw the same pixels.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_CLASS_COLORS = ["tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple",
                 "tab:brown", "tab:pink", "tab:gray", "tab:olive", "tab:cyan"]


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def class_scatter(features: np.ndarray, labels: np.ndarray, class_names: list[str],
                  path, title: str = "", highlight: tuple[float, float] | None = None,
                  ) -> Path:
    """Scatter of the first two feature dimensions, one color per class."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for k, cid in enumerate(np.unique(labels)):
        mask = labels == cid
        name = class_names[int(cid)] if int(cid) < len(class_names) else str(cid)
        ax.scatter(features[mask, 0], features[mask, 1], s=6, alpha=0.5,
                   color=_CLASS_COLORS[k % len(_CLASS_COLORS)], label=name)
    if highlight is not None:
        ax.plot([highlight[0]], [highlight[1]], marker="x", markersize=12,
                color="black", zorder=5)
    ax.set_xlabel("dim 0")
    ax.set_ylabel("dim 1")
    if title:
        ax.set_title(title)
    ax.legend(markerscale=2, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def loss_curves(epochs, series: dict[str, list[float]], path, title: str = "") -> Path:
    """Per-epoch loss terms on a shared axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in series.items():
        ax.plot(epochs, values, label=name, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def sweep_curve(values, scores: dict[str, list[float]], x_label: str, path,
                title: str = "") -> Path:
    """Metric-versus-grid-point lines for a hyperparameter sweep."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, ys in scores.items():
        ax.plot(values, ys, marker="o", label=name, linewidth=1.2)
    ax.set_xlabel(x_label)
    ax.set_ylabel("score")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def confusion_heatmap(matrix: np.ndarray, class_order, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    image = ax.imshow(matrix, cmap="viridis")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    labels = [str(c) for c in class_order]
    if len(labels) <= 20:
        ax.set_xticks(range(len(labels)), labels, fontsize=7, rotation=90)
        ax.set_yticks(range(len(labels)), labels, fontsize=7)
    if title:
        ax.set_title(title)
    fig.colorbar(image, ax=ax, shrink=0.85)
    fig.tight_layout()
    return _save(fig, path)
