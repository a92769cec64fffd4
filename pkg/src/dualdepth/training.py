"""Two-stage training (LR-Net + PoseNet, then SA + HR-Net), checkpoint packing and inference."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import fileio
from . import tensor_core as tc
from .attention import NORM_MODES, SAConfig, assemble_input, sa_attention
from .checkpoint import Checkpoint
from .config import DEFAULT_SCHEDULE, TrainConfig
from .geometry import Intrinsics, grid_sample, pose_to_matrix, project
from .losses import ScaleTerms, feature_recon_loss, photometric_loss, smoothness_loss, total_loss
from .networks import (DepthOutputs, NetParams, disparity_to_depth, hr_net_forward, init_hr_net, init_lr_net,
                       init_pose_net, init_sa_embedding, lr_net_forward, pose_net_forward)
from .synthdata import Views, augment_then_downsample, list_triplets, load_triplet
from .tensor_core import AdamState, Tape, Tensor

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
ACTIVATIONS = ("elu", "relu")
SA_INPUT_EXTRA = 5  # rgb + x/y coordinates appended to the bottleneck


class TrainingError(RuntimeError):
    pass


def lr_schedule(epoch: int, table=DEFAULT_SCHEDULE) -> float:
    if epoch < 1:
        raise ValueError(f"epochs are numbered from 1, got {epoch}")
    for upto, lr in table:
        if epoch <= upto:
            return lr
    return table[-1][1]


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 generator; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


# ---------------------------------------------------------------------------
# model state <-> checkpoint

GROUPS = ("lr_net", "pose_net", "sa", "hr_net")
STAGE_GROUPS = {"lr": ("lr_net", "pose_net"), "hr": ("sa", "hr_net")}


@dataclass
class Model:
    """All network parameters plus the settings needed to run them."""

    nets: dict[str, NetParams]
    lr_size: tuple[int, int]
    activation: str = "elu"
    norm_mode: str = "mean"
    d_min: float = 0.1
    d_max: float = 100.0
    adam: dict[str, dict[str, AdamState]] = field(default_factory=dict)

    @property
    def hr_size(self) -> tuple[int, int]:
        return 3 * self.lr_size[0], 3 * self.lr_size[1]

    @property
    def sa_config(self) -> SAConfig:
        sa = self.nets["sa"]["sa.embed.w"]
        return SAConfig(sa.shape[0], self.norm_mode)

    @property
    def has_hr(self) -> bool:
        return "hr_net" in self.nets


def init_model(cfg: TrainConfig) -> Model:
    """Fresh LR-Net and PoseNet.  Stream: default_rng([seed, 0]) draws LR-Net, then PoseNet."""
    rng = np.random.default_rng([cfg.seed, 0])
    lr = init_lr_net(cfg.arch, rng)
    pose = init_pose_net(cfg.arch, rng)
    return Model({"lr_net": lr, "pose_net": pose}, cfg.lr_size, cfg.activation, cfg.norm_mode,
                 cfg.d_min, cfg.d_max)


def add_hr_nets(model: Model, cfg: TrainConfig) -> None:
    """Fresh SA embedding and HR-Net.  Stream: default_rng([seed, 1]) draws SA, then HR-Net."""
    rng = np.random.default_rng([cfg.seed, 1])
    bottleneck = model.nets["lr_net"]["enc4.b.w"].shape[0]
    model.nets["sa"] = init_sa_embedding(bottleneck + SA_INPUT_EXTRA, cfg.embed_dim, rng, cfg.init_gain)
    model.nets["hr_net"] = init_hr_net(cfg.arch, rng, cfg.embed_dim)
    model.norm_mode = cfg.norm_mode


def _scalar(x: float) -> np.ndarray:
    return np.full((1, 1, 1, 1), x, dtype=np.float32)


def model_to_checkpoint(model: Model, stage: str, epochs_done: int, seed_state: int) -> Checkpoint:
    t: dict[str, np.ndarray] = {
        "meta/epochs": _scalar(epochs_done),
        "meta/lr_size": np.array(model.lr_size, dtype=np.float32).reshape(1, 1, 1, 2),
        "meta/activation": _scalar(ACTIVATIONS.index(model.activation)),
        "meta/sa_norm": _scalar(NORM_MODES.index(model.norm_mode)),
        "meta/depth_range": np.array([model.d_min, model.d_max], dtype=np.float32).reshape(1, 1, 1, 2),
    }
    for group in GROUPS:
        for name, p in model.nets.get(group, {}).items():
            t[f"{group}/{name}"] = p.data
    for group, states in model.adam.items():
        for name, st in states.items():
            t[f"adam.m/{group}/{name}"] = st.m
            t[f"adam.v/{group}/{name}"] = st.v
        if states:
            t[f"adam.t/{group}"] = _scalar(next(iter(states.values())).t)
    return Checkpoint(stage, t, seed_state)


def checkpoint_to_model(ckpt: Checkpoint) -> tuple[Model, int]:
    """Rebuild the model; also returns the number of epochs already trained in ``ckpt.stage``."""
    t = ckpt.tensors
    try:
        lr_size = tuple(int(x) for x in t["meta/lr_size"].reshape(-1))
        activation = ACTIVATIONS[int(t["meta/activation"].item())]
        norm_mode = NORM_MODES[int(t["meta/sa_norm"].item())]
        d_min, d_max = (float(x) for x in t["meta/depth_range"].reshape(-1))
        epochs = int(t["meta/epochs"].item())
    except (KeyError, IndexError, ValueError) as exc:
        raise TrainingError(f"checkpoint is missing or has malformed metadata: {exc}") from None
    nets = {}
    for group in GROUPS:
        params = ckpt.group(group)
        if params:
            nets[group] = {k: Tensor(np.array(v), requires_grad=True, name=k) for k, v in params.items()}
    for group in STAGE_GROUPS[ckpt.stage]:
        if group not in nets:
            raise TrainingError(f"{ckpt.stage}-stage checkpoint lacks the {group} tensors")
    adam = {}
    for group in GROUPS:
        m = ckpt.group(f"adam.m/{group}")
        if m:
            step = int(t[f"adam.t/{group}"].item())
            v = ckpt.group(f"adam.v/{group}")
            adam[group] = {k: AdamState(np.array(m[k]), np.array(v[k]), step) for k in m}
    return Model(nets, lr_size, activation, norm_mode, d_min, d_max, adam), epochs


# ---------------------------------------------------------------------------
# forward passes


def _views_batch(views: Sequence[Views]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return tuple(np.stack([v.frames[k] for v in views]) for k in range(3))


def predict_poses(model: Model, lr_prev: Tensor, lr_target: Tensor, lr_next: Tensor) -> list[Tensor]:
    frames = tc.concat_channels([lr_prev, lr_target, lr_next])
    return pose_net_forward(frames, model.nets["pose_net"], model.activation)


def hr_forward(model: Model, lr_target: Tensor, hr_target: Tensor, lr_out: DepthOutputs | None = None) -> DepthOutputs:
    if lr_out is None:
        lr_out = lr_net_forward(lr_target, model.nets["lr_net"], model.activation)
    sa = model.nets["sa"]
    assembled = assemble_input(lr_out.bottleneck.detach(), lr_target)
    refined = sa_attention(assembled, sa["sa.embed.w"], sa["sa.embed.b"], model.sa_config)
    return hr_net_forward(hr_target, refined, model.nets["hr_net"], model.activation)


def _resized_const(x: np.ndarray, h: int, w: int) -> Tensor:
    if x.shape[2:] == (h, w):
        return Tensor(x)
    return Tensor(tc.resize_bilinear(Tensor(x), h, w).data)


def multiscale_terms(disps: Sequence[Tensor], target: np.ndarray, sources: Sequence[np.ndarray],
                     K: Sequence[Intrinsics], poses: Sequence[Tensor], cfg: TrainConfig,
                     features: tuple[Tensor, Sequence[Tensor]] | None = None) -> list[ScaleTerms]:
    """Per-scale photometric/smoothness (and, at full resolution, feature) terms.

    ``poses`` are target->source matrices (n, 1, 4, 4).  With
    ``cfg.upsample_pred`` each coarse disparity is upsampled to the input
    size; otherwise the images and intrinsics are resized down to it.
    """
    H, W = target.shape[2:]
    terms = []
    for i, disp in enumerate(disps):
        h, w = disp.shape[2:]
        _, norm_disp = disparity_to_depth(disp, cfg.d_min, cfg.d_max)
        if cfg.upsample_pred:
            disp_w, (wh, ww) = tc.resize_bilinear(disp, H, W), (H, W)
        else:
            disp_w, (wh, ww) = disp, (h, w)
        K_i = [k.resized((H, W), (wh, ww)) for k in K] if (wh, ww) != (H, W) else list(K)
        tgt = _resized_const(target, wh, ww)
        depth, _ = disparity_to_depth(disp_w, cfg.d_min, cfg.d_max)
        grids = [project(depth, K_i, T) for T in poses]
        warped = [grid_sample(_resized_const(src, wh, ww), g) for src, g in zip(sources, grids)]
        ph = photometric_loss(tgt, warped, cfg.alpha)
        sm = smoothness_loss(norm_disp, _resized_const(target, h, w))
        fr = None
        if features is not None and i == 0:
            tf, sfs = features
            if tf.shape[2:] != (wh, ww):
                raise tc.ShapeError(f"feature map {tf.shape} does not match warp grid {(wh, ww)}")
            fr = feature_recon_loss(tf, [grid_sample(sf, g) for sf, g in zip(sfs, grids)])
        terms.append(ScaleTerms(ph, sm, fr))
    return terms


def lr_stage_loss(model: Model, lr_views: Sequence[Views], cfg: TrainConfig) -> Tensor:
    """Three-term LR loss; must run inside a Tape to be differentiable."""
    prev, target, nxt = _views_batch(lr_views)
    K = [v.intrinsics for v in lr_views]
    lr_params = model.nets["lr_net"]
    out = lr_net_forward(Tensor(target), lr_params, model.activation)
    poses = predict_poses(model, Tensor(prev), Tensor(target), Tensor(nxt))
    mats = [pose_to_matrix(p) for p in poses]
    features = None
    if cfg.lambda3 > 0:
        if cfg.feature_source_grad:
            src_feats = [lr_net_forward(Tensor(s), lr_params, model.activation).decoder_feats16 for s in (prev, nxt)]
        else:
            with tc.no_grad():
                src_feats = [lr_net_forward(Tensor(s), lr_params, model.activation).decoder_feats16.detach()
                             for s in (prev, nxt)]
        features = (out.decoder_feats16, src_feats)
    terms = multiscale_terms(out.disparities, target, (prev, nxt), K, mats, cfg, features)
    return total_loss("lr", terms, cfg.loss_weights)


def hr_stage_loss(model: Model, lr_views: Sequence[Views], hr_views: Sequence[Views], cfg: TrainConfig) -> Tensor:
    """Two-term HR loss.  LR-Net and PoseNet run outside the tape, so they get no gradient."""
    lr_prev, lr_target, lr_next = _views_batch(lr_views)
    prev, target, nxt = _views_batch(hr_views)
    K = [v.intrinsics for v in hr_views]
    with tc.no_grad():
        lr_out = lr_net_forward(Tensor(lr_target), model.nets["lr_net"], model.activation)
        poses = predict_poses(model, Tensor(lr_prev), Tensor(lr_target), Tensor(lr_next))
        mats = [Tensor(pose_to_matrix(p).data) for p in poses]
        lr_out = DepthOutputs([d.detach() for d in lr_out.disparities], lr_out.bottleneck.detach(), None)
    out = hr_forward(model, Tensor(lr_target), Tensor(target), lr_out)
    terms = multiscale_terms(out.disparities, target, (prev, nxt), K, mats, cfg)
    return total_loss("hr", terms, cfg.loss_weights)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    lr: float
    seconds: float


@dataclass
class StageResult:
    checkpoint: Checkpoint
    history: list[EpochRecord]


def _load_dataset(data, cfg: TrainConfig) -> list:
    dirs = list_triplets(data)
    if cfg.max_triplets:
        dirs = dirs[:cfg.max_triplets]
    triplets = []
    for d in dirs:
        trip = load_triplet(d)
        if trip.target.shape[1:] != cfg.hr_size:
            raise TrainingError(f"{d}: frames are {trip.target.shape[1:]}, config expects HR size {cfg.hr_size}")
        triplets.append(trip)
    return triplets


def train_stage(stage: str, cfg: TrainConfig, data, init: Checkpoint | None = None,
                on_epoch: Callable[[EpochRecord], None] | None = None) -> StageResult:
    """Train one stage up to ``cfg.epochs`` total epochs.

    ``init``: for ``lr``, None (fresh) or an lr checkpoint to resume; for
    ``hr``, an lr checkpoint (fresh HR nets) or an hr checkpoint to resume.
    Every epoch draws its own generator from the splitmix64 seed state; that
    generator yields the batch permutation, then per-sample augmentation
    (flip, brightness, contrast) in batch order.
    """
    if stage not in STAGE_GROUPS:
        raise ValueError(f"stage must be 'lr' or 'hr', got {stage!r}")
    if stage == "hr" and init is None:
        raise TrainingError("the hr stage needs an lr-stage checkpoint to start from")
    if init is not None and init.stage == "hr" and stage == "lr":
        raise TrainingError("cannot train the lr stage from an hr-stage checkpoint")

    if init is None:
        model, done = init_model(cfg), 0
        seed_state = splitmix64(cfg.seed & MASK64)[1]
    else:
        model, done = checkpoint_to_model(init)
        seed_state = init.seed_state
        if init.stage != stage:
            if model.lr_size != cfg.lr_size:
                raise TrainingError(f"checkpoint LR size {model.lr_size} != config {cfg.lr_size}")
            add_hr_nets(model, cfg)
            done = 0
            seed_state = splitmix64((cfg.seed ^ 0x4852) & MASK64)[1]
    trainable = STAGE_GROUPS[stage]
    for g in trainable:
        model.adam.setdefault(g, {k: AdamState.zeros_like(p) for k, p in model.nets[g].items()})

    history: list[EpochRecord] = []
    if done >= cfg.epochs:
        return StageResult(model_to_checkpoint(model, stage, done, seed_state), history)

    triplets = _load_dataset(data, cfg)
    for epoch in range(done + 1, cfg.epochs + 1):
        t0 = time.perf_counter()
        seed_state, epoch_seed = splitmix64(seed_state)
        rng = np.random.default_rng(epoch_seed)
        order = rng.permutation(len(triplets))
        lr = lr_schedule(epoch, cfg.schedule)
        losses = []
        for step, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [triplets[i] for i in order[start:start + cfg.batch_size]]
            views = [augment_then_downsample(t, cfg.lr_size, rng if cfg.augment else None,
                                             cfg.flip_prob, cfg.brightness, cfg.contrast) for t in batch]
            lr_views = [v[0] for v in views]
            with Tape() as tape:
                if stage == "lr":
                    loss = lr_stage_loss(model, lr_views, cfg)
                else:
                    loss = hr_stage_loss(model, lr_views, [v[1] for v in views], cfg)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch} step {step}")
            grads = tc.backward(tape, loss)
            for g in trainable:
                params, states = model.nets[g], model.adam[g]
                for name, p in params.items():
                    try:
                        params[name], states[name] = tc.adam_step(p, grads[p], states[name], lr)
                    except FloatingPointError as exc:
                        raise TrainingError(f"epoch {epoch} step {step}: {exc}") from None
            losses.append(value)
        rec = EpochRecord(epoch, float(np.mean(losses)), lr, time.perf_counter() - t0)
        log.info("%s epoch %d: mean loss %.5f (lr %g, %.1fs)", stage, rec.epoch, rec.mean_loss, rec.lr, rec.seconds)
        history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    return StageResult(model_to_checkpoint(model, stage, cfg.epochs, seed_state), history)


# ---------------------------------------------------------------------------
# inference


def predict_depth(model: Model, images: np.ndarray, stage: str, batch: int = 4) -> np.ndarray:
    """Depth maps (n, h, w) at the input resolution of ``stage``."""
    want = model.lr_size if stage == "lr" else model.hr_size
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValueError(f"expected (n, 3, h, w) images, got {images.shape}")
    if images.shape[2:] != want:
        raise ValueError(f"{stage} stage expects {want[0]}x{want[1]} images, got {images.shape[2]}x{images.shape[3]}")
    if stage == "hr" and not model.has_hr:
        raise ValueError("checkpoint holds no HR-Net; train the hr stage first")
    out = []
    with tc.no_grad():
        for s in range(0, len(images), batch):
            x = Tensor(np.ascontiguousarray(images[s:s + batch], dtype=np.float32))
            if stage == "lr":
                disp = lr_net_forward(x, model.nets["lr_net"], model.activation).disparities[0]
            else:
                lr_x = tc.resize_bilinear(x, *model.lr_size)
                disp = hr_forward(model, lr_x, x).disparities[0]
            depth, _ = disparity_to_depth(disp, model.d_min, model.d_max)
            out.append(depth.data[:, 0])
    return np.concatenate(out)


def inverse_depth_image(depth: np.ndarray) -> np.ndarray:
    """8-bit inverse-depth visualization, min-max normalized per image."""
    inv = 1.0 / np.maximum(depth.astype(np.float64), 1e-6)
    lo, hi = inv.min(), inv.max()
    scaled = (inv - lo) / (hi - lo) if hi > lo else np.zeros_like(inv)
    return np.clip(np.rint(scaled * 255), 0, 255).astype(np.uint8)


def output_stem(image_path: Path) -> str:
    return f"{image_path.parent.name}_{image_path.stem}" if image_path.parent.name else image_path.stem


def infer_files(ckpt: Checkpoint, image_paths: Sequence, stage: str, out_dir) -> list[Path]:
    model, _ = checkpoint_to_model(ckpt)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [Path(p) for p in image_paths]
    if not paths:
        raise ValueError("no input images")
    written = []
    for p in paths:
        img = fileio.read_ppm(p)
        try:
            depth = predict_depth(model, img[None], stage)[0]
        except ValueError as exc:
            raise ValueError(f"{p}: {exc}") from None
        stem = output_stem(p)
        fileio.write_depth(out_dir / f"{stem}.bin", depth)
        fileio.write_pgm(out_dir / f"{stem}.pgm", inverse_depth_image(depth))
        written.append(out_dir / f"{stem}.bin")
    return written
