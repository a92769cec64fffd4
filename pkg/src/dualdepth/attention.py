"""Self-assembled attention over the low-resolution bottleneck."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .tensor_core import Tensor

NORM_MODES = ("raw", "mean", "softmax")


@dataclass(frozen=True)
class SAConfig:
    embed_dim: int = 64
    norm_mode: str = "mean"

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")


def coordinate_channels(n: int, h: int, w: int, dtype=np.float32) -> np.ndarray:
    """x and y channels spanning [-1, 1]; a length-1 axis sits at 0."""
    xs = np.linspace(-1, 1, w) if w > 1 else np.zeros(1)
    ys = np.linspace(-1, 1, h) if h > 1 else np.zeros(1)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    coords = np.stack([gx, gy])[None].astype(dtype)
    return np.repeat(coords, n, axis=0)


def assemble_input(features: Tensor, image: Tensor, h: int | None = None, w: int | None = None) -> Tensor:
    """Concatenate features, the image resized to the feature grid, and x/y coordinates."""
    n, _, fh, fw = features.shape
    h = fh if h is None else h
    w = fw if w is None else w
    rgb = tc.resize_bilinear(image.detach(), h, w)
    coords = Tensor(coordinate_channels(n, h, w, features.dtype))
    return tc.concat_channels([features, rgb, coords])


def sa_attention(assembled: Tensor, embed_weight: Tensor, embed_bias: Tensor, config: SAConfig) -> Tensor:
    """Embed with a 1x1 convolution, then rebuild each position as a
    dot-product-weighted sum of all embedded positions."""
    n, _, h, w = assembled.shape
    emb = tc.conv2d(assembled, embed_weight, embed_bias)
    d = emb.shape[1]
    N = h * w
    F = tc.reshape(emb, (n, 1, d, N))
    Ft = tc.permute(F, (0, 1, 3, 2))
    sim = tc.matmul(Ft, F)  # (n, 1, N, N); sim[i, j] = f_i . f_j
    if config.norm_mode == "softmax":
        sim = tc.softmax(sim, axis=2)
    out = tc.matmul(F, sim)  # out[:, j] = sum_i sim[i, j] f_i
    if config.norm_mode == "mean":
        out = tc.scale(out, 1.0 / N)
    return tc.reshape(out, (n, d, h, w))
