"""Independent scalar-loop reference implementations.

These deliberately share no code with the package: plain Python loops and
``math`` only, so agreement with the vectorised code means something.
"""

from __future__ import annotations

import math
import statistics
import struct


def reflect(i: int, n: int) -> int:
    """Reflection (no edge repeat) of index ``i`` into [0, n)."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    return i if i < n else period - i


def conv2d_loops(x, w, b, stride):
    """x: nested [n][ci][h][w]; w: [co][ci][k][k]; b: [co] -> nested output."""
    n, ci, h, wd = len(x), len(x[0]), len(x[0][0]), len(x[0][0][0])
    co, k = len(w), len(w[0][0])
    p = (k - 1) // 2
    ho, wo = -(-h // stride), -(-wd // stride)
    out = [[[[0.0] * wo for _ in range(ho)] for _ in range(co)] for _ in range(n)]
    for b_ in range(n):
        for o in range(co):
            for yo in range(ho):
                for xo in range(wo):
                    acc = b[o]
                    for c in range(ci):
                        for ky in range(k):
                            for kx in range(k):
                                yy = reflect(yo * stride + ky - p, h)
                                xx = reflect(xo * stride + kx - p, wd)
                                acc += w[o][c][ky][kx] * x[b_][c][yy][xx]
                    out[b_][o][yo][xo] = acc
    return out


def bilinear_1d(values, n_out):
    """Align-corners-false linear resampling of a 1-D list."""
    n_in = len(values)
    out = []
    for i in range(n_out):
        src = (i + 0.5) * n_in / n_out - 0.5
        src = min(max(src, 0.0), n_in - 1)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        f = src - lo
        out.append(values[lo] * (1 - f) + values[hi] * f)
    return out


def rotation_xyz(rx, ry, rz):
    """R = Rz @ Ry @ Rx as nested lists."""
    cx, sx, cy, sy, cz, sz = math.cos(rx), math.sin(rx), math.cos(ry), math.sin(ry), math.cos(rz), math.sin(rz)
    Rx = [[1, 0, 0], [0, cx, -sx], [0, sx, cx]]
    Ry = [[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]]
    Rz = [[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]]

    def mm(A, B):
        return [[sum(A[i][k] * B[k][j] for k in range(3)) for j in range(3)] for i in range(3)]

    return mm(Rz, mm(Ry, Rx))


def pinhole_project(u, v, depth, fx, fy, cx, cy, t, r):
    """Back-project pixel (u, v) at ``depth``, move by (R, t), project.  None if behind camera."""
    X = [(u - cx) / fx * depth, (v - cy) / fy * depth, depth]
    R = rotation_xyz(*r)
    Y = [sum(R[i][k] * X[k] for k in range(3)) + t[i] for i in range(3)]
    if Y[2] <= 1e-6:
        return None
    return fx * Y[0] / Y[2] + cx, fy * Y[1] / Y[2] + cy


def depth_metrics_loops(pred, gt, mask=None, median_scale=False, cap=100.0, floor=1e-3):
    """Flat lists in, dict of the seven metrics out."""
    idx = [i for i in range(len(gt)) if gt[i] > 0 and (mask is None or mask[i])]
    p = [float(pred[i]) for i in idx]
    g = [float(gt[i]) for i in idx]
    if median_scale:
        s = statistics.median(g) / statistics.median(p)
        p = [x * s for x in p]
    p = [min(max(x, floor), cap) for x in p]
    g = [min(max(x, floor), cap) for x in g]
    n = len(p)
    abs_rel = sq_rel = sq = sq_log = 0.0
    hits = [0, 0, 0]
    for a, b in zip(p, g):
        abs_rel += abs(a - b) / b
        sq_rel += (a - b) ** 2 / b
        sq += (a - b) ** 2
        sq_log += (math.log(a) - math.log(b)) ** 2
        ratio = max(a / b, b / a)
        for k in range(3):
            if ratio < 1.25 ** (k + 1):
                hits[k] += 1
    return {"abs_rel": abs_rel / n, "sq_rel": sq_rel / n, "rmse": math.sqrt(sq / n),
            "rmse_log": math.sqrt(sq_log / n), "delta1": hits[0] / n, "delta2": hits[1] / n,
            "delta3": hits[2] / n, "pixel_count": n}


SOBEL_KX = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
SOBEL_KY = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]


def tenengrad_loops(depth, t=0.0):
    """depth: nested [h][w]; Sobel on interior pixels; sum of magnitudes above t."""
    h, w = len(depth), len(depth[0])
    total = 0.0
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            gx = sum(SOBEL_KX[j][i] * depth[y + j - 1][x + i - 1] for j in range(3) for i in range(3))
            gy = sum(SOBEL_KY[j][i] * depth[y + j - 1][x + i - 1] for j in range(3) for i in range(3))
            g = math.sqrt(gx * gx + gy * gy)
            if g > t:
                total += g
    return total


def ssim_loss_constant(a, b, c1=0.01 ** 2, c2=0.03 ** 2):
    """(1 - SSIM) / 2 for two constant images (zero variance)."""
    ssim = (2 * a * b + c1) * c2 / ((a * a + b * b + c1) * c2)
    return (1 - ssim) / 2


def checkpoint_bytes(stage_tag, tensors, seed_state):
    """Assemble a checkpoint field by field: tensors is a list of (name, dims, flat values)."""
    out = bytearray(b"DDCK")
    out += struct.pack("<I", 1)
    out += struct.pack("<B", stage_tag)
    out += struct.pack("<I", len(tensors))
    for name, dims, values in tensors:
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", len(dims))
        for d in dims:
            out += struct.pack("<I", d)
        for v in values:
            out += struct.pack("<f", v)
    out += struct.pack("<Q", seed_state)
    return bytes(out)


def axis_angle(R):
    """Rotation angle of a 3x3 rotation (nested lists) via the trace."""
    tr = R[0][0] + R[1][1] + R[2][2]
    return math.acos(max(-1.0, min(1.0, (tr - 1) / 2)))
