"""Training configuration and its ``key = value`` file format."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .attention import SAConfig
from .losses import LossWeights
from .networks import ArchConfig

DEFAULT_SCHEDULE = ((10.0, 2e-4), (20.0, 1e-4), (math.inf, 5e-5))


class ConfigError(ValueError):
    pass


def parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise ConfigError(f"size must look like HxW, got {text!r}") from None


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected true/false, got {text!r}")


def parse_schedule(text: str) -> tuple[tuple[float, float], ...]:
    """``"10:2e-4, 20:1e-4, inf:5e-5"`` -> ((10, 2e-4), (20, 1e-4), (inf, 5e-5))."""
    table = []
    for part in text.split(","):
        try:
            upto, lr = part.split(":")
            table.append((float(upto), float(lr)))
        except ValueError:
            raise ConfigError(f"bad schedule entry {part!r}; use 'last_epoch:lr'") from None
    if not table or table[-1][0] != math.inf:
        raise ConfigError("schedule must end with an 'inf:<lr>' entry")
    if any(b[0] <= a[0] for a, b in zip(table, table[1:])):
        raise ConfigError("schedule epochs must increase")
    return tuple(table)


def format_schedule(table) -> str:
    return ", ".join(f"{'inf' if math.isinf(e) else int(e)}:{lr:g}" for e, lr in table)


@dataclass(frozen=True)
class TrainConfig:
    lr_size: tuple[int, int] = (64, 192)
    epochs: int = 15
    batch_size: int = 4
    seed: int = 0
    schedule: tuple[tuple[float, float], ...] = DEFAULT_SCHEDULE
    # loss
    alpha: float = 0.85
    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda3: float = 0.05
    scale_decay: float = 0.5
    upsample_pred: bool = False
    feature_source_grad: bool = False
    # attention
    embed_dim: int = 64
    norm_mode: str = "mean"
    # architecture
    lr_scale: float = 0.25
    hr_scale: float = 0.25
    pose_scale: float = 0.25
    activation: str = "elu"
    init_gain: float = 1.0
    d_min: float = 0.1
    d_max: float = 100.0
    # augmentation
    augment: bool = True
    flip_prob: float = 0.5
    brightness: float = 0.2
    contrast: float = 0.2
    max_triplets: int = 0  # 0 = use every triplet in the dataset

    def __post_init__(self):
        for h, w in (self.lr_size, self.hr_size):
            if h % 32 or w % 32:
                raise ConfigError(f"resolution {h}x{w} must be divisible by 32")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not 0 < self.d_min < self.d_max:
            raise ConfigError("need 0 < d_min < d_max")
        self.loss_weights, self.sa_config, self.arch  # validate eagerly

    @property
    def hr_size(self) -> tuple[int, int]:
        return 3 * self.lr_size[0], 3 * self.lr_size[1]

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.lambda1, self.lambda2, self.lambda3, self.scale_decay)

    @property
    def sa_config(self) -> SAConfig:
        return SAConfig(self.embed_dim, self.norm_mode)

    @property
    def arch(self) -> ArchConfig:
        return ArchConfig(self.lr_scale, self.hr_scale, self.pose_scale, self.activation, self.init_gain)


# file key -> (attribute, parser, description)
KEYS: dict[str, tuple[str, object, str]] = {
    "lr_size": ("lr_size", parse_size, "LR input HxW; HR is exactly 3x (default 64x192)"),
    "epochs": ("epochs", int, "epochs for the stage being trained (default 15)"),
    "batch_size": ("batch_size", int, "triplets per step (default 4)"),
    "seed": ("seed", int, "seeds parameter init, batch order and augmentation (default 0)"),
    "lr_schedule": ("schedule", parse_schedule, "'last_epoch:lr' list (default 10:2e-4, 20:1e-4, inf:5e-5)"),
    "loss.alpha": ("alpha", float, "SSIM weight in the photometric blend (default 0.85)"),
    "loss.lambda1": ("lambda1", float, "photometric weight (default 1.0)"),
    "loss.lambda2": ("lambda2", float, "smoothness weight (default 0.1)"),
    "loss.lambda3": ("lambda3", float, "feature reconstruction weight, LR stage only (default 0.05)"),
    "loss.scale_decay": ("scale_decay", float, "smoothness attenuation per coarser scale (default 0.5)"),
    "loss.upsample_pred": ("upsample_pred", parse_bool,
                           "true: upsample coarse predictions to full size; false: downsample images (default)"),
    "loss.feature_source_grad": ("feature_source_grad", parse_bool,
                                 "backpropagate through source-frame features (default false)"),
    "sa.embed_dim": ("embed_dim", int, "attention embedding width (default 64)"),
    "sa.norm_mode": ("norm_mode", str, "raw | mean | softmax (default mean)"),
    "arch.lr_scale": ("lr_scale", float, "LR-Net width multiplier on 32-64-128-256-512 (default 0.25)"),
    "arch.hr_scale": ("hr_scale", float, "HR-Net width multiplier on 16-16-32-64-64 (default 0.25)"),
    "arch.pose_scale": ("pose_scale", float, "PoseNet width multiplier (default 0.25)"),
    "arch.activation": ("activation", str, "elu | relu (default elu)"),
    "arch.init_gain": ("init_gain", float, "init bound multiplier on sqrt(1/fan_in); 2.449 is He-uniform (default 1.0)"),
    "depth.min": ("d_min", float, "smallest representable depth (default 0.1)"),
    "depth.max": ("d_max", float, "largest representable depth (default 100)"),
    "augment.enabled": ("augment", parse_bool, "random flip + photometric jitter (default true)"),
    "augment.flip_prob": ("flip_prob", float, "horizontal flip probability (default 0.5)"),
    "augment.brightness": ("brightness", float, "brightness factor range +- (default 0.2)"),
    "augment.contrast": ("contrast", float, "contrast factor range +- (default 0.2)"),
    "data.max_triplets": ("max_triplets", int, "train on the first N triplets only; 0 = all (default 0)"),
}


def parse_config(text: str, source: str = "<config>") -> TrainConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        attr, parser, _ = KEYS[key]
        try:
            values[attr] = parser(value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{source}:{lineno}: {key}: {exc}") from None
    try:
        return TrainConfig(**values)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> TrainConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def dump_config(cfg: TrainConfig) -> str:
    lines = []
    for key, (attr, parser, doc) in KEYS.items():
        val = getattr(cfg, attr)
        if parser is parse_size:
            text = f"{val[0]}x{val[1]}"
        elif parser is parse_schedule:
            text = format_schedule(val)
        elif parser is parse_bool:
            text = "true" if val else "false"
        else:
            text = str(val)
        lines.append(f"# {doc}\n{key} = {text}")
    return "\n".join(lines) + "\n"
