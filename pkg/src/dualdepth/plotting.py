"""Report figures (matplotlib, Agg backend, written straight to PNG files)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evalkit import MetricReport, sobel_magnitude  # noqa: E402


def metrics_figure(rows: dict[str, MetricReport], path) -> Path:
    names = list(rows)
    x = np.arange(len(names))
    fig, (ax_err, ax_acc) = plt.subplots(1, 2, figsize=(10, 3.6))
    for k, metric in enumerate(("abs_rel", "rmse_log")):
        ax_err.bar(x + (k - 0.5) * 0.38, [getattr(rows[n], metric) for n in names], 0.38, label=metric)
    for k, metric in enumerate(MetricReport.ACCURACIES):
        ax_acc.bar(x + (k - 1) * 0.27, [getattr(rows[n], metric) for n in names], 0.27, label=metric)
    for ax, title in ((ax_err, "errors (lower is better)"), (ax_acc, "accuracy (higher is better)")):
        ax.set_xticks(x, names, rotation=20)
        ax.set_title(title)
        ax.legend(fontsize=8)
    ax_acc.set_ylim(0, 1)
    fig.tight_layout()
    return _save(fig, path)


def error_map_figure(pred: np.ndarray, gt: np.ndarray, path, title: str = "") -> Path:
    valid = gt > 0
    err = np.where(valid, np.abs(pred - gt) / np.where(valid, gt, 1), np.nan)
    fig, axes = plt.subplots(3, 1, figsize=(7, 7))
    for ax, img, label, cmap in ((axes[0], 1 / np.maximum(pred, 1e-6), "predicted inverse depth", "magma"),
                                 (axes[1], np.where(valid, 1 / np.maximum(gt, 1e-6), np.nan),
                                  "ground-truth inverse depth", "magma"),
                                 (axes[2], err, "absolute relative error", "viridis")):
        im = ax.imshow(img, cmap=cmap)
        ax.set_title(label, fontsize=9)
        ax.axis("off")
        fig.colorbar(im, ax=ax, fraction=0.02)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    return _save(fig, path)


def sharpness_figure(names: Sequence[str], scores: Sequence[float], sample: np.ndarray, path) -> Path:
    fig, (ax_bar, ax_map) = plt.subplots(2, 1, figsize=(8, 6))
    ax_bar.bar(np.arange(len(scores)), scores)
    ax_bar.axhline(float(np.mean(scores)), color="k", ls="--", lw=1, label="mean")
    ax_bar.set_xticks(np.arange(len(names)), names, rotation=60, fontsize=6)
    ax_bar.set_ylabel("Tenengrad")
    ax_bar.legend(fontsize=8)
    im = ax_map.imshow(sobel_magnitude(sample), cmap="inferno")
    ax_map.set_title(f"Sobel magnitude of {names[0]}", fontsize=9)
    ax_map.axis("off")
    fig.colorbar(im, ax=ax_map, fraction=0.02)
    fig.tight_layout()
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
