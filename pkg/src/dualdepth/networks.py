"""LR-Net, HR-Net, PoseNet and the disparity-to-depth head.

Parameters live in plain ordered dicts (``NetParams``) keyed by layer
name, e.g. ``"enc2.b.w"``.  Forward functions read the architecture back
from the parameter shapes, so a dict is all that is needed to run a net.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .geometry import PoseVec
from .tensor_core import Tensor, ShapeError

NetParams = dict[str, Tensor]

# full-size widths, index j = resolution 1/2**j (encoder: output of block j)
LR_ENC = (32, 64, 128, 256, 512)
LR_DEC = (16, 32, 64, 128, 256)
HR_ENC = (16, 16, 32, 64, 64)
HR_DEC = (16, 16, 32, 64, 64)
POSE_CH = (16, 32, 64, 128, 256, 256, 256)
POSE_K = (7, 5, 3, 3, 3, 3, 3)
FEATURE_CHANNELS = 16
N_SCALES = 4
POSE_SCALE = 0.01


@dataclass(frozen=True)
class ArchConfig:
    lr_scale: float = 0.25
    hr_scale: float = 0.25
    pose_scale: float = 0.25
    activation: str = "elu"
    init_gain: float = 1.0  # weights and biases ~ U(-g, g) * sqrt(1 / fan_in)

    def __post_init__(self):
        if self.activation not in ("elu", "relu"):
            raise ValueError(f"activation must be 'elu' or 'relu', got {self.activation!r}")
        if not self.init_gain > 0:
            raise ValueError(f"init_gain must be positive, got {self.init_gain}")

    def lr_widths(self):
        enc = tuple(max(4, round(c * self.lr_scale)) for c in LR_ENC)
        dec = tuple(max(8, round(c * self.lr_scale)) for c in LR_DEC)
        return enc, dec

    def hr_widths(self):
        enc = tuple(max(2, round(c * self.hr_scale)) for c in HR_ENC)
        dec = tuple(max(2, round(c * self.hr_scale)) for c in HR_DEC)
        return enc, dec

    def pose_widths(self):
        return tuple(max(4, round(c * self.pose_scale)) for c in POSE_CH)


@dataclass
class DepthOutputs:
    disparities: list[Tensor]  # full, 1/2, 1/4, 1/8
    bottleneck: Tensor
    decoder_feats16: Tensor | None = None


def _act(name: str):
    return tc.elu if name == "elu" else tc.relu


def _add_conv(params: NetParams, rng: np.random.Generator, name: str, cin: int, cout: int, k: int,
              gain: float = 1.0, zero: bool = False) -> None:
    bound = gain * math.sqrt(1.0 / (cin * k * k))
    if zero:
        w = np.zeros((cout, cin, k, k), dtype=np.float32)
        b = np.zeros((1, cout, 1, 1), dtype=np.float32)
    else:
        w = rng.uniform(-bound, bound, size=(cout, cin, k, k)).astype(np.float32)
        b = rng.uniform(-bound, bound, size=(1, cout, 1, 1)).astype(np.float32)
    params[f"{name}.w"] = Tensor(w, requires_grad=True, name=f"{name}.w")
    params[f"{name}.b"] = Tensor(b, requires_grad=True, name=f"{name}.b")


def _conv(params: NetParams, name: str, x: Tensor, stride: int = 1) -> Tensor:
    return tc.conv2d(x, params[f"{name}.w"], params[f"{name}.b"], stride=stride)


def _init_encoder_decoder(params, rng, enc, dec, cin, gain, extra_bottleneck=0):
    prev = cin
    for j, c in enumerate(enc):
        _add_conv(params, rng, f"enc{j}.a", prev, c, 3, gain)
        _add_conv(params, rng, f"enc{j}.b", c, c, 3, gain)
        prev = c
    prev = enc[-1] + extra_bottleneck
    for j in reversed(range(len(enc))):
        _add_conv(params, rng, f"dec{j}.up", prev, dec[j], 3, gain)
        _add_conv(params, rng, f"dec{j}.fuse", dec[j] + enc[j], dec[j], 3, gain)
        if j < N_SCALES:
            _add_conv(params, rng, f"disp{j}", dec[j], 1, 3, gain)
        prev = dec[j]


def init_lr_net(arch: ArchConfig, rng: np.random.Generator) -> NetParams:
    params: NetParams = {}
    enc, dec = arch.lr_widths()
    _init_encoder_decoder(params, rng, enc, dec, 3, arch.init_gain)
    _add_conv(params, rng, "feat16", dec[0], FEATURE_CHANNELS, 1, arch.init_gain)
    return params


def init_hr_net(arch: ArchConfig, rng: np.random.Generator, bottleneck_channels: int) -> NetParams:
    """HR-Net whose deepest decoder stage also takes ``bottleneck_channels`` refined LR features."""
    params: NetParams = {}
    enc, dec = arch.hr_widths()
    _init_encoder_decoder(params, rng, enc, dec, 3, arch.init_gain, extra_bottleneck=bottleneck_channels)
    return params


def init_pose_net(arch: ArchConfig, rng: np.random.Generator, num_frames: int = 3,
                  zero_last: bool = False) -> NetParams:
    params: NetParams = {}
    prev = 3 * num_frames
    for i, (c, k) in enumerate(zip(arch.pose_widths(), POSE_K)):
        _add_conv(params, rng, f"pconv{i}", prev, c, k, arch.init_gain)
        prev = c
    _add_conv(params, rng, "pose_out", prev, 6 * (num_frames - 1), 1, arch.init_gain, zero=zero_last)
    return params


def init_sa_embedding(in_channels: int, embed_dim: int, rng: np.random.Generator, gain: float = 1.0) -> NetParams:
    params: NetParams = {}
    _add_conv(params, rng, "sa.embed", in_channels, embed_dim, 1, gain)
    return params


def count_params(params: NetParams) -> int:
    return int(sum(p.data.size for p in params.values()))


def _encode(x: Tensor, params: NetParams, act) -> tuple[list[Tensor], Tensor]:
    skips = []
    j = 0
    while f"enc{j}.a.w" in params:
        x = act(_conv(params, f"enc{j}.a", x))
        skips.append(x)
        x = act(_conv(params, f"enc{j}.b", x, stride=2))
        j += 1
    return skips, x


def _decode(x: Tensor, skips: list[Tensor], params: NetParams, act) -> tuple[list[Tensor], Tensor]:
    disps: list[Tensor | None] = [None] * N_SCALES
    for j in reversed(range(len(skips))):
        h, w = skips[j].shape[2:]
        x = tc.resize_bilinear(x, h, w)
        x = act(_conv(params, f"dec{j}.up", x))
        x = tc.concat_channels([x, skips[j]])
        x = act(_conv(params, f"dec{j}.fuse", x))
        if j < N_SCALES:
            disps[j] = tc.sigmoid(_conv(params, f"disp{j}", x))
    return disps, x


def _check_divisible(img: Tensor, what: str) -> None:
    h, w = img.shape[2:]
    if h % 32 or w % 32:
        raise ShapeError(f"{what} resolution {h}x{w} must be divisible by 32")


def lr_net_forward(img_lr: Tensor, params: NetParams, activation: str = "elu") -> DepthOutputs:
    _check_divisible(img_lr, "LR input")
    act = _act(activation)
    skips, bottleneck = _encode(img_lr, params, act)
    disps, last = _decode(bottleneck, skips, params, act)
    return DepthOutputs(disps, bottleneck, act(_conv(params, "feat16", last)))


def hr_net_forward(img_hr: Tensor, refined_bottleneck: Tensor, params: NetParams,
                   activation: str = "elu") -> DepthOutputs:
    _check_divisible(img_hr, "HR input")
    act = _act(activation)
    skips, bottleneck = _encode(img_hr, params, act)
    bh, bw = bottleneck.shape[2:]
    rh, rw = refined_bottleneck.shape[2:]
    if (bh, bw) != (3 * rh, 3 * rw):
        raise ShapeError(f"HR bottleneck {bh}x{bw} is not 3x the LR bottleneck {rh}x{rw}; "
                         "HR resolution must be exactly 3x LR resolution")
    refined = tc.resize_bilinear(refined_bottleneck, bh, bw)
    x = tc.concat_channels([bottleneck, refined])
    disps, _ = _decode(x, skips, params, act)
    return DepthOutputs(disps, bottleneck, None)


def pose_net_forward(frames: Tensor, params: NetParams, activation: str = "elu") -> list[Tensor]:
    """Relative poses target->source for each non-centre frame, each (n, 6, 1, 1).

    ``frames`` stacks (prev, target, next) along channels.
    """
    act = _act(activation)
    x = frames
    i = 0
    while f"pconv{i}.w" in params:
        x = act(_conv(params, f"pconv{i}", x, stride=2))
        i += 1
    x = _conv(params, "pose_out", x)
    x = tc.scale(tc.mean(x, axes=(2, 3)), POSE_SCALE)
    n_out = x.shape[1] // 6
    return [tc.slice_(x, np.s_[:, 6 * k:6 * (k + 1)]) for k in range(n_out)]


def poses_to_vecs(pose: Tensor) -> list[PoseVec]:
    return [PoseVec.from_array(row) for row in pose.data[:, :, 0, 0]]


def disparity_to_depth(disp: Tensor, d_min: float = 0.1, d_max: float = 100.0) -> tuple[Tensor, Tensor]:
    """Affine-map sigmoid disparity to inverse depth in [1/d_max, 1/d_min] and invert.

    Also returns the disparity divided by its per-image spatial mean.
    """
    if not 0 < d_min < d_max:
        raise ValueError(f"need 0 < d_min < d_max, got {d_min}, {d_max}")
    lo, hi = 1.0 / d_max, 1.0 / d_min
    scaled = tc.add_scalar(tc.scale(disp, hi - lo), lo)
    # the clamp only absorbs float32 rounding at the endpoints
    depth = tc.clamp(tc.reciprocal(scaled), d_min, d_max)
    # a saturated sigmoid can underflow to an all-zero map; the floor keeps 0/0 out of the loss
    norm_disp = tc.div(disp, tc.clamp(tc.mean(disp, axes=(2, 3)), 1e-12, math.inf))
    return depth, norm_disp
