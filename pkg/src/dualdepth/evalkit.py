"""Depth and pose evaluation: error/accuracy metrics, distance bands, region masks, Tenengrad."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .geometry import PoseVec, euler_to_rotation
from .tensor_core import Tensor

DEPTH_FLOOR = 1e-3
DEPTH_CAP = 100.0
FAR_THRESHOLD = 20.0


@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    pixel_count: int

    ERRORS = ("abs_rel", "sq_rel", "rmse", "rmse_log")
    ACCURACIES = ("delta1", "delta2", "delta3")

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _plain(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def depth_metrics(pred, gt, mask=None, median_scale: bool = False, cap: float = DEPTH_CAP) -> MetricReport:
    """Standard depth metrics over ``mask`` (default: every pixel with gt > 0)."""
    p = _plain(pred).astype(np.float64)
    g = _plain(gt).astype(np.float64)
    if p.shape != g.shape:
        raise ValueError(f"prediction shape {p.shape} != ground truth shape {g.shape}")
    m = g > 0 if mask is None else (_plain(mask).astype(bool) & (g > 0))
    if m.shape != g.shape:
        raise ValueError(f"mask shape {m.shape} != ground truth shape {g.shape}")
    if not m.any():
        raise ValueError("evaluation mask selects no pixels")
    p, g = p[m], g[m]
    if median_scale:
        p = p * (np.median(g) / np.median(p))
    p = np.clip(p, DEPTH_FLOOR, cap)
    g = np.clip(g, DEPTH_FLOOR, cap)
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return MetricReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        pixel_count=int(m.sum()),
    )


def band_split(gt, threshold: float = FAR_THRESHOLD) -> tuple[np.ndarray, np.ndarray]:
    """(near, far) masks over valid pixels; far means gt > threshold."""
    g = _plain(gt)
    valid = g > 0
    far = valid & (g > threshold)
    return valid & ~far, far


def region_metrics(pred, gt, region_mask, median_scale: bool = False, cap: float = DEPTH_CAP) -> MetricReport:
    region = _plain(region_mask).astype(bool)
    g = _plain(gt)
    if region.shape != g.shape:
        raise ValueError(f"region mask shape {region.shape} != ground truth shape {g.shape}")
    if not (region & (g > 0)).any():
        raise ValueError("region mask does not intersect the valid ground-truth pixels")
    return depth_metrics(pred, gt, region, median_scale=median_scale, cap=cap)


def sobel_magnitude(depth) -> np.ndarray:
    """Gradient magnitude over the interior pixels (no padding: output is (h-2, w-2))."""
    d = np.squeeze(_plain(depth)).astype(np.float64)
    if d.ndim != 2:
        raise ValueError(f"expected a single-channel map, got shape {_plain(depth).shape}")
    h, w = d.shape
    if h < 3 or w < 3:
        return np.zeros((max(h - 2, 0), max(w - 2, 0)))
    # difference first, then smooth: constant maps cancel exactly instead of to rounding error
    dx = d[:, 2:] - d[:, :-2]
    dy = d[2:, :] - d[:-2, :]
    gx = dx[:-2] + 2 * dx[1:-1] + dx[2:]
    gy = dy[:, :-2] + 2 * dy[:, 1:-1] + dy[:, 2:]
    return np.sqrt(gx ** 2 + gy ** 2)


def tenengrad(depth, t: float = 0.0) -> float:
    g = sobel_magnitude(depth)
    return float(g[g > t].sum())


def pose_error(pred: PoseVec, gt: PoseVec) -> tuple[float, float]:
    """(translation distance, rotation angle of R_pred R_gt^T in radians)."""
    dt = float(np.linalg.norm(np.subtract(pred.t, gt.t)))
    R = euler_to_rotation(pred.r) @ euler_to_rotation(gt.r).T
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    # arccos loses precision near 0; atan2 of (sin, cos) does not
    sin = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return dt, float(math.atan2(sin, cos))


# ---------------------------------------------------------------------------
# report text


def format_table(reports: dict[str, MetricReport]) -> str:
    cols = [f.name for f in fields(MetricReport)]
    width = max([len("region")] + [len(k) for k in reports])
    head = f"{'region':<{width}} " + " ".join(f"{c:>10}" for c in cols)
    lines = [head, "-" * len(head)]
    for name, r in reports.items():
        vals = [f"{getattr(r, c):>10d}" if c == "pixel_count" else f"{getattr(r, c):>10.4f}" for c in cols]
        lines.append(f"{name:<{width}} " + " ".join(vals))
    return "\n".join(lines)


def format_kv(report: MetricReport, prefix: str = "") -> str:
    """Machine-readable ``metric=value`` lines."""
    pre = f"{prefix}." if prefix else ""
    return "\n".join(f"{pre}{k}={v:.6g}" if isinstance(v, float) else f"{pre}{k}={v}"
                     for k, v in report.as_dict().items())


def mean_reports(reports: list[MetricReport]) -> MetricReport:
    """Pixel-weighted mean of per-image reports (RMSE values combine in the squared domain)."""
    if not reports:
        raise ValueError("no reports to combine")
    n = np.array([r.pixel_count for r in reports], dtype=np.float64)
    wts = n / n.sum()

    def avg(name, squared=False):
        v = np.array([getattr(r, name) for r in reports])
        return float(np.sqrt(wts @ v ** 2)) if squared else float(wts @ v)

    return MetricReport(avg("abs_rel"), avg("sq_rel"), avg("rmse", True), avg("rmse_log", True),
                        avg("delta1"), avg("delta2"), avg("delta3"), int(n.sum()))


def median_align(pred, gt, mask=None) -> np.ndarray:
    """Scale ``pred`` by median(gt) / median(pred) over ``mask`` (default gt > 0)."""
    p = _plain(pred).astype(np.float64)
    g = _plain(gt)
    m = g > 0 if mask is None else (_plain(mask).astype(bool) & (g > 0))
    if not m.any():
        raise ValueError("evaluation mask selects no pixels")
    return p * (np.median(g[m]) / np.median(p[m]))


def evaluate_pair(pred, gt, median_scale: bool = False, band: float | None = None,
                  region=None, cap: float = DEPTH_CAP) -> dict[str, MetricReport]:
    """Reports for the whole image and, optionally, near/far bands and inside/outside a region.

    Median scaling is computed once over all valid pixels and shared by
    every sub-report, so the bands see the same alignment as the whole image.
    """
    p = median_align(pred, gt) if median_scale else _plain(pred)
    g = _plain(gt)
    out = {"all": depth_metrics(p, g, cap=cap)}
    if band is not None:
        near, far = band_split(g, band)
        for name, m in ((f"near_le{band:g}", near), (f"far_gt{band:g}", far)):
            if m.any():
                out[name] = depth_metrics(p, g, m, cap=cap)
    if region is not None:
        r = _plain(region).astype(bool)
        if r.shape != g.shape:
            raise ValueError(f"region mask shape {r.shape} != ground truth shape {g.shape}")
        for name, m in (("region", r), ("outside", ~r)):
            if (m & (g > 0)).any():
                out[name] = depth_metrics(p, g, m, cap=cap)
    return out
