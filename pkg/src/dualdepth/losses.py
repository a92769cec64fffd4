"""Photometric, smoothness and feature-reconstruction losses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import tensor_core as tc
from .tensor_core import Tensor, ShapeError

C1 = 0.01 ** 2
C2 = 0.03 ** 2
# added to errors of invalid samples so they never win the per-pixel minimum
_EXCLUDED = 1e4


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.85
    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda3: float = 0.05
    scale_decay: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")


def ssim_map(a: Tensor, b: Tensor) -> Tensor:
    """Per-pixel (1 - SSIM) / 2 with 3x3 reflection-padded mean statistics, clamped to [0, 1]."""
    if a.shape != b.shape:
        raise ShapeError(f"ssim_map: shapes {a.shape} and {b.shape} differ")
    mu_a = tc.box_filter3(a)
    mu_b = tc.box_filter3(b)
    mu_aa = tc.square(mu_a)
    mu_bb = tc.square(mu_b)
    mu_ab = tc.mul(mu_a, mu_b)
    sig_a = tc.sub(tc.box_filter3(tc.square(a)), mu_aa)
    sig_b = tc.sub(tc.box_filter3(tc.square(b)), mu_bb)
    sig_ab = tc.sub(tc.box_filter3(tc.mul(a, b)), mu_ab)
    num = tc.mul(tc.add_scalar(tc.scale(mu_ab, 2), C1), tc.add_scalar(tc.scale(sig_ab, 2), C2))
    den = tc.mul(tc.add_scalar(tc.add(mu_aa, mu_bb), C1), tc.add_scalar(tc.add(sig_a, sig_b), C2))
    ssim = tc.div(num, den)
    return tc.clamp(tc.scale(tc.add_scalar(tc.neg(ssim), 1.0), 0.5), 0.0, 1.0)


def photometric_error(target: Tensor, warped: Tensor, alpha: float) -> Tensor:
    """alpha * SSIM term + (1 - alpha) * L1, both averaged over channels -> (n, 1, h, w)."""
    l1 = tc.mean(tc.abs_(tc.sub(target, warped)), axes=(1,))
    if alpha == 0:
        return l1
    ssim = tc.mean(ssim_map(target, warped), axes=(1,))
    return tc.add(tc.scale(ssim, alpha), tc.scale(l1, 1 - alpha))


def min_over_sources(errors: Sequence[tuple[Tensor, Tensor]]) -> Tensor:
    """Masked mean of the per-pixel minimum error over sources.

    ``errors`` holds (error map (n,1,h,w), valid mask) pairs.  Invalid
    samples are excluded from the minimum; pixels invalid in every source
    contribute nothing and are dropped from the denominator.
    """
    if not errors:
        raise ValueError("need at least one source")
    best = None
    covered = np.zeros(errors[0][0].shape, dtype=bool)
    for err, valid in errors:
        if err.shape != valid.shape:
            raise ShapeError(f"error map {err.shape} and valid mask {valid.shape} differ")
        v = valid.data > 0
        covered |= v
        penalty = Tensor(np.where(v, 0, _EXCLUDED).astype(err.dtype))
        cand = tc.add(err, penalty)
        best = cand if best is None else tc.min2(best, cand)
    count = int(covered.sum())
    if count == 0:
        return Tensor(np.zeros((1, 1, 1, 1), dtype=best.dtype))
    masked = tc.mul(best, Tensor(covered.astype(best.dtype)))
    return tc.scale(tc.sum_(masked), 1.0 / count)


def photometric_loss(target: Tensor, warped_sources: Sequence[tuple[Tensor, Tensor]],
                     alpha: float = 0.85) -> Tensor:
    if not warped_sources:
        raise ValueError("photometric_loss needs at least one warped source")
    errs = []
    for warped, valid in warped_sources:
        if warped.shape != target.shape:
            raise ShapeError(f"warped source {warped.shape} != target {target.shape}")
        errs.append((photometric_error(target, warped, alpha), valid))
    return min_over_sources(errs)


def _grad_x(x: Tensor) -> Tensor:
    return tc.sub(tc.slice_(x, np.s_[:, :, :, 1:]), tc.slice_(x, np.s_[:, :, :, :-1]))


def _grad_y(x: Tensor) -> Tensor:
    return tc.sub(tc.slice_(x, np.s_[:, :, 1:, :]), tc.slice_(x, np.s_[:, :, :-1, :]))


def smoothness_loss(depth: Tensor, image: Tensor) -> Tensor:
    """Edge-aware first-order smoothness of a (mean-normalised) disparity map."""
    if depth.shape[2:] != image.shape[2:]:
        raise ShapeError(f"depth {depth.shape} and image {image.shape} sizes differ")
    terms = []
    for grad_fn, axis in ((_grad_x, 3), (_grad_y, 2)):
        if depth.shape[axis] < 2:
            continue
        weight = tc.exp(tc.neg(tc.mean(tc.abs_(grad_fn(image)), axes=(1,))))
        terms.append(tc.mean(tc.mul(tc.abs_(grad_fn(depth)), weight)))
    if not terms:
        return Tensor(np.zeros((1, 1, 1, 1), dtype=depth.dtype))
    return terms[0] if len(terms) == 1 else tc.add(terms[0], terms[1])


def feature_recon_loss(target_feats: Tensor, warped_source_feats: Sequence[tuple[Tensor, Tensor]],
                       eps: float = 1e-12) -> Tensor:
    """Masked mean of the per-pixel minimum L2 feature distance over sources."""
    errs = []
    for feats, valid in warped_source_feats:
        if feats.shape != target_feats.shape:
            raise ShapeError(f"warped features {feats.shape} != target {target_feats.shape}")
        sq = tc.sum_(tc.square(tc.sub(target_feats, feats)), axes=(1,))
        errs.append((tc.sqrt(tc.add_scalar(sq, eps)), valid))
    return min_over_sources(errs)


class ScaleTerms(NamedTuple):
    photometric: Tensor
    smoothness: Tensor
    feature: Tensor | None = None


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full((1, 1, 1, 1), float(x), dtype=np.float32))


def total_loss(stage: str, per_scale_terms: Sequence[ScaleTerms], weights: LossWeights) -> Tensor:
    """Weighted sum over scales.

    Scale ``i`` smoothness is attenuated by ``scale_decay ** i``.  The
    feature term is used only in the ``lr`` stage.
    """
    if stage not in ("lr", "hr"):
        raise ValueError(f"stage must be 'lr' or 'hr', got {stage!r}")
    total = None
    for i, terms in enumerate(per_scale_terms):
        ph = tc.scale(_as_tensor(terms.photometric), weights.lambda1)
        sm = tc.scale(_as_tensor(terms.smoothness), weights.lambda2 * weights.scale_decay ** i)
        part = tc.add(ph, sm)
        if stage == "lr" and terms.feature is not None:
            part = tc.add(part, tc.scale(_as_tensor(terms.feature), weights.lambda3))
        total = part if total is None else tc.add(total, part)
    if total is None:
        return Tensor(np.zeros((1, 1, 1, 1), dtype=np.float32))
    return total
