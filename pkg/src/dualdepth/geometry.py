"""Pinhole cameras, SE(3) poses and differentiable inverse warping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .tensor_core import Tensor, ShapeError, _result

Z_MIN = 1e-6
EDGE_TOL = 1e-6  # px; keeps border pixels valid when rounding lands them a hair outside


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1]], dtype=np.float64)

    def inverse(self) -> np.ndarray:
        return np.array([[1 / self.fx, 0, -self.cx / self.fx],
                         [0, 1 / self.fy, -self.cy / self.fy],
                         [0, 0, 1]], dtype=np.float64)

    def resized(self, in_hw: tuple[int, int], out_hw: tuple[int, int]) -> "Intrinsics":
        """Intrinsics after an align-corners-false resize from ``in_hw`` to ``out_hw``."""
        sy = out_hw[0] / in_hw[0]
        sx = out_hw[1] / in_hw[1]
        return Intrinsics(self.fx * sx, self.fy * sy, (self.cx + 0.5) * sx - 0.5, (self.cy + 0.5) * sy - 0.5)

    def flipped(self, width: int) -> "Intrinsics":
        return Intrinsics(self.fx, self.fy, (width - 1) - self.cx, self.cy)

    def to_line(self) -> str:
        return f"{self.fx!r} {self.fy!r} {self.cx!r} {self.cy!r}"

    @classmethod
    def from_line(cls, line: str) -> "Intrinsics":
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"intrinsics line needs 4 numbers 'fx fy cx cy', got {line!r}")
        return cls(*map(float, parts))


@dataclass(frozen=True)
class PoseVec:
    """Translation plus X-Y-Z Euler angles; rotation is Rz @ Ry @ Rx."""

    t: tuple[float, float, float] = (0.0, 0.0, 0.0)
    r: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([*self.t, *self.r], dtype=np.float64)

    @classmethod
    def from_array(cls, v) -> "PoseVec":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return cls(tuple(float(x) for x in v[:3]), tuple(float(x) for x in v[3:]))

    def to_line(self) -> str:
        return " ".join(repr(float(x)) for x in self.as_array())

    @classmethod
    def from_line(cls, line: str) -> "PoseVec":
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"pose line needs 6 numbers 'tx ty tz rx ry rz', got {line!r}")
        return cls.from_array([float(p) for p in parts])


def _rot_factors(rx, ry, rz):
    """Rx, Ry, Rz and their derivatives, batched over leading shape."""
    one = np.ones_like(rx)
    zero = np.zeros_like(rx)
    ca, sa = np.cos(rx), np.sin(rx)
    cb, sb = np.cos(ry), np.sin(ry)
    cc, sc = np.cos(rz), np.sin(rz)

    def m(rows):
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    Rx = m([[one, zero, zero], [zero, ca, -sa], [zero, sa, ca]])
    Ry = m([[cb, zero, sb], [zero, one, zero], [-sb, zero, cb]])
    Rz = m([[cc, -sc, zero], [sc, cc, zero], [zero, zero, one]])
    dRx = m([[zero, zero, zero], [zero, -sa, -ca], [zero, ca, -sa]])
    dRy = m([[-sb, zero, cb], [zero, zero, zero], [-cb, zero, -sb]])
    dRz = m([[-sc, -cc, zero], [cc, -sc, zero], [zero, zero, zero]])
    return Rx, Ry, Rz, dRx, dRy, dRz


def euler_to_rotation(r) -> np.ndarray:
    Rx, Ry, Rz, *_ = _rot_factors(*(np.asarray(x, dtype=np.float64) for x in r))
    return Rz @ Ry @ Rx


def rotation_to_euler(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_to_rotation` for |ry| < pi/2."""
    rx = math.atan2(R[2, 1], R[2, 2])
    ry = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    rz = math.atan2(R[1, 0], R[0, 0])
    return rx, ry, rz


def pose_to_matrix(pose):
    """4x4 rigid transform [R | t; 0 1].

    A :class:`PoseVec` gives a float64 ndarray.  A Tensor of shape (n, 6, 1, 1)
    (tx, ty, tz, rx, ry, rz) gives a differentiable Tensor of shape (n, 1, 4, 4).
    """
    if isinstance(pose, PoseVec):
        T = np.eye(4)
        T[:3, :3] = euler_to_rotation(pose.r)
        T[:3, 3] = pose.t
        return T
    if not isinstance(pose, Tensor) or pose.shape[1:] != (6, 1, 1):
        raise ShapeError("pose_to_matrix expects a PoseVec or a Tensor of shape (n, 6, 1, 1)")
    v = pose.data[:, :, 0, 0].astype(np.float64)
    Rx, Ry, Rz, dRx, dRy, dRz = _rot_factors(v[:, 3], v[:, 4], v[:, 5])
    n = v.shape[0]
    T = np.zeros((n, 1, 4, 4))
    T[:, 0, :3, :3] = Rz @ Ry @ Rx
    T[:, 0, :3, 3] = v[:, :3]
    T[:, 0, 3, 3] = 1
    jac = (Rz @ Ry @ dRx, Rz @ dRy @ Rx, dRz @ Ry @ Rx)
    dt = pose.dtype

    def grad_fn(g):
        g = g[:, 0].astype(np.float64)
        gv = np.zeros((n, 6))
        gv[:, :3] = g[:, :3, 3]
        for k in range(3):
            gv[:, 3 + k] = (g[:, :3, :3] * jac[k]).sum(axis=(1, 2))
        return (gv.astype(dt)[:, :, None, None],)

    return _result("pose_to_matrix", T.astype(dt), (pose,), grad_fn)


def invert_pose(T: np.ndarray) -> np.ndarray:
    R, t = T[:3, :3], T[:3, 3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ t
    return out


@dataclass
class SampleGrid:
    coords: Tensor  # (n, 2, h, w) source-pixel (u, v)
    valid: Tensor   # (n, 1, h, w) in {0, 1}


def _k_arrays(K, n: int, dtype=np.float64):
    ks = [K] * n if isinstance(K, Intrinsics) else list(K)
    if len(ks) != n:
        raise ShapeError(f"got {len(ks)} intrinsics for a batch of {n}")
    arr = np.array([[k.fx, k.fy, k.cx, k.cy] for k in ks], dtype=dtype)
    return tuple(arr[:, i].reshape(n, 1, 1) for i in range(4))


def inbounds(u: np.ndarray, v: np.ndarray, h: int, w: int) -> np.ndarray:
    return (u >= -EDGE_TOL) & (u <= w - 1 + EDGE_TOL) & (v >= -EDGE_TOL) & (v <= h - 1 + EDGE_TOL)


def project(depth: Tensor, K: Intrinsics | Sequence[Intrinsics], T: Tensor,
            source_hw: tuple[int, int] | None = None) -> SampleGrid:
    """Map every target pixel through depth and pose into source pixel coordinates.

    Computes K @ T @ (D(p) K^-1 p) and dehomogenizes.  Points landing at
    z <= 1e-6 are marked invalid (coordinates set to -2, zero gradient).
    ``T`` is a (n, 1, 4, 4) Tensor (e.g. from :func:`pose_to_matrix`).
    """
    n, c, h, w = depth.shape
    if c != 1:
        raise ShapeError(f"depth must have one channel, got {depth.shape}")
    if T.shape != (n, 1, 4, 4):
        raise ShapeError(f"pose matrix shape {T.shape} != ({n}, 1, 4, 4)")
    sh, sw = source_hw if source_hw is not None else (h, w)
    dt = depth.dtype
    fx, fy, cx, cy = _k_arrays(K, n)
    d = depth.data[:, 0].astype(np.float64)
    vv, uu = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    rx = (uu[None] - cx) / fx
    ry = (vv[None] - cy) / fy
    M = T.data[:, 0].astype(np.float64)
    R, t = M[:, :3, :3], M[:, :3, 3]
    a = [R[:, k, 0, None, None] * rx + R[:, k, 1, None, None] * ry + R[:, k, 2, None, None] for k in range(3)]
    X = [d * a[k] + t[:, k, None, None] for k in range(3)]
    z_ok = X[2] > Z_MIN
    z_safe = np.where(z_ok, X[2], 1.0)
    u = np.where(z_ok, fx * X[0] / z_safe + cx, -2.0)
    v = np.where(z_ok, fy * X[1] / z_safe + cy, -2.0)
    valid = (z_ok & inbounds(u, v, sh, sw)).astype(dt)[:, None]
    coords = np.stack([u, v], axis=1).astype(dt)

    def grad_fn(g):
        g = g.astype(np.float64)
        gu = np.where(z_ok, g[:, 0], 0.0)
        gv = np.where(z_ok, g[:, 1], 0.0)
        inv_z = 1.0 / z_safe
        dX0 = gu * fx * inv_z
        dX1 = gv * fy * inv_z
        dX2 = -(gu * fx * X[0] + gv * fy * X[1]) * inv_z * inv_z
        dX = (dX0, dX1, dX2)
        gd = dX0 * a[0] + dX1 * a[1] + dX2 * a[2]
        gT = np.zeros((n, 1, 4, 4))
        rays = (rx, ry, np.ones_like(rx))
        for k in range(3):
            gT[:, 0, k, 3] = dX[k].sum(axis=(1, 2))
            for j in range(3):
                gT[:, 0, k, j] = (dX[k] * d * rays[j]).sum(axis=(1, 2))
        return gd[:, None].astype(dt), gT.astype(T.dtype)

    coords_t = _result("project", coords, (depth, T), grad_fn)
    return SampleGrid(coords_t, Tensor(valid))


def grid_sample(source: Tensor, grid: SampleGrid) -> tuple[Tensor, Tensor]:
    """Bilinear sampling of ``source`` at continuous pixel coordinates.

    Samples outside [0, w-1] x [0, h-1] (or already invalid in the grid)
    produce 0 and a 0 in the returned mask.
    """
    n, c, h, w = source.shape
    cn, two, H, W = grid.coords.shape
    if cn != n or two != 2:
        raise ShapeError(f"grid coords {grid.coords.shape} incompatible with source {source.shape}")
    dt = source.dtype
    u = grid.coords.data[:, 0].astype(np.float64)
    v = grid.coords.data[:, 1].astype(np.float64)
    valid = inbounds(u, v, h, w) & (grid.valid.data[:, 0] > 0)
    uc = np.where(valid, np.clip(u, 0, w - 1), 0.0)
    vc = np.where(valid, np.clip(v, 0, h - 1), 0.0)
    x0 = np.clip(np.floor(uc), 0, max(w - 2, 0)).astype(np.int64)
    y0 = np.clip(np.floor(vc), 0, max(h - 2, 0)).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = uc - x0
    fy = vc - y0
    base = (np.arange(n) * h * w).reshape(n, 1, 1)
    idx = [base + y0 * w + x0, base + y0 * w + x1, base + y1 * w + x0, base + y1 * w + x1]
    vm = valid.astype(np.float64)
    wts = [(1 - fx) * (1 - fy) * vm, fx * (1 - fy) * vm, (1 - fx) * fy * vm, fx * fy * vm]
    flat = np.ascontiguousarray(source.data.transpose(0, 2, 3, 1)).reshape(n * h * w, c)
    corner = [flat[i.reshape(-1)] for i in idx]  # each (P, c)
    out = sum(wk.reshape(-1, 1) * ck for wk, ck in zip(wts, corner))
    warped = np.ascontiguousarray(out.reshape(n, H, W, c).transpose(0, 3, 1, 2)).astype(dt)

    def grad_fn(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, c).astype(np.float64)
        gsrc = None
        if source.requires_grad:
            rows = np.concatenate([i.reshape(-1) for i in idx])
            cols = np.tile(np.arange(n * H * W), 4)
            vals = np.concatenate([wk.reshape(-1) for wk in wts])
            S = sp.csr_matrix((vals, (rows, cols)), shape=(n * h * w, n * H * W))
            gsrc = np.ascontiguousarray((S @ gm).reshape(n, h, w, c).transpose(0, 3, 1, 2)).astype(dt)
        fyv = fy.reshape(-1, 1)
        fxv = fx.reshape(-1, 1)
        c00, c01, c10, c11 = corner
        du = ((1 - fyv) * (c01 - c00) + fyv * (c11 - c10))
        dv = ((1 - fxv) * (c10 - c00) + fxv * (c11 - c01))
        gu = (du * gm).sum(axis=1).reshape(n, H, W) * vm
        gv = (dv * gm).sum(axis=1).reshape(n, H, W) * vm
        gcoords = np.stack([gu, gv], axis=1).astype(grid.coords.dtype)
        return gsrc, gcoords

    warped_t = _result("grid_sample", warped, (source, grid.coords), grad_fn)
    return warped_t, Tensor(valid[:, None].astype(dt))


def synthesize_view(source_img: Tensor, target_depth: Tensor, K, T: Tensor) -> tuple[Tensor, Tensor]:
    """Reconstruct the target view by sampling ``source_img`` through depth and pose."""
    if source_img.shape[0] != target_depth.shape[0]:
        raise ShapeError(f"batch mismatch: source {source_img.shape}, depth {target_depth.shape}")
    grid = project(target_depth, K, T, source_hw=source_img.shape[2:])
    return grid_sample(source_img, grid)
