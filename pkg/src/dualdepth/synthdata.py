"""Procedural box-world scenes with exact depth and camera motion.

World coordinates coincide with the target camera: x right, y down, z
forward.  The background is the plane z = ``background_depth``; boxes
are axis-aligned.  Random scenes lay a wide flat box under the camera as
a ground and stand the other boxes on it.  Textures are analytic
functions of surface coordinates in world units, so apparent texture
frequency scales with 1 / depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .geometry import Intrinsics, PoseVec, invert_pose, pose_to_matrix
from .tensor_core import Tensor
from . import tensor_core as tc

D_MIN = 0.1
D_MAX = 100.0
DEPTH_MARGIN = 1.0


@dataclass(frozen=True)
class Texture:
    base: tuple[float, float, float]
    tint: tuple[float, float, float] = (1.0, 1.0, 1.0)
    contrast: float = 0.0          # 0 makes the surface textureless
    checker_period: float = 1.0    # world units per checker square
    checker_weight: float = 0.5    # mix between checkerboard and noise
    noise_freqs: tuple = ()        # ((fx, fy, phase, amplitude), ...) in cycles per world unit

    @property
    def textureless(self) -> bool:
        return self.contrast == 0.0

    def evaluate(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        """RGB (3, ...) at surface coordinates (s, t)."""
        base = np.asarray(self.base, dtype=np.float64).reshape(3, *([1] * s.ndim))
        if self.textureless:
            return np.broadcast_to(base, (3, *s.shape)).copy()
        k = math.pi / self.checker_period
        checker = np.tanh(3.0 * np.sin(k * s) * np.sin(k * t))
        noise = np.zeros_like(s)
        for fx, fy, phase, amp in self.noise_freqs:
            noise += amp * np.sin(2 * math.pi * (fx * s + fy * t) + phase)
        pattern = self.checker_weight * checker + (1 - self.checker_weight) * noise
        tint = np.asarray(self.tint, dtype=np.float64).reshape(base.shape)
        return np.clip(base + self.contrast * tint * pattern[None], 0.0, 1.0)


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    texture: Texture

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - np.asarray(self.size) / 2

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.size) / 2


@dataclass(frozen=True)
class SceneSpec:
    background_depth: float
    background_texture: Texture
    boxes: tuple[Box, ...] = ()

    def validate(self, d_min: float = D_MIN, d_max: float = D_MAX, margin: float = DEPTH_MARGIN) -> None:
        if not d_min + margin <= self.background_depth <= d_max - margin:
            raise ValueError(f"background depth {self.background_depth} outside "
                             f"[{d_min + margin}, {d_max - margin}]")
        for b in self.boxes:
            if b.lo[2] < d_min + margin:
                raise ValueError(f"box {b.center} reaches in front of z = {d_min + margin}")
            if b.hi[2] >= self.background_depth:
                raise ValueError(f"box {b.center} is not strictly in front of the background")


@dataclass
class RenderResult:
    image: np.ndarray      # (3, h, w) float in [0, 1]
    depth: np.ndarray      # (h, w) camera-frame z
    surface: np.ndarray    # (h, w) int: 0 background, k box k-1
    textureless: np.ndarray  # (h, w) bool


def default_intrinsics(h: int, w: int) -> Intrinsics:
    f = 0.58 * w
    return Intrinsics(f, f, (w - 1) / 2, (h - 1) / 2)


def render_layers(scene: SceneSpec, cam_to_world: np.ndarray, K: Intrinsics, h: int, w: int) -> RenderResult:
    R = cam_to_world[:3, :3]
    c = cam_to_world[:3, 3]
    vv, uu = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    d_cam = np.stack([(uu - K.cx) / K.fx, (vv - K.cy) / K.fy, np.ones_like(uu)])
    d = np.einsum("ij,jhw->ihw", R, d_cam)
    d = np.where(np.abs(d) < 1e-12, 1e-12, d)
    # ray parameter equals camera-frame z because the camera-frame direction has z = 1
    if np.any(d[2] <= 0):
        raise RuntimeError("camera rotation too large: some rays never reach the background plane")
    best_t = (scene.background_depth - c[2]) / d[2]
    surface = np.zeros((h, w), dtype=np.int64)
    face_axis = np.full((h, w), 2, dtype=np.int64)
    for k, box in enumerate(scene.boxes, start=1):
        t1 = (box.lo[:, None, None] - c[:, None, None]) / d
        t2 = (box.hi[:, None, None] - c[:, None, None]) / d
        tmin = np.minimum(t1, t2)
        tnear = tmin.max(axis=0)
        tfar = np.maximum(t1, t2).min(axis=0)
        hit = (tnear <= tfar) & (tnear > 0) & (tnear < best_t)
        best_t = np.where(hit, tnear, best_t)
        surface = np.where(hit, k, surface)
        face_axis = np.where(hit, tmin.argmax(axis=0), face_axis)
    if not np.all(np.isfinite(best_t)) or np.any(best_t <= 0):
        raise RuntimeError("ray cast produced a non-positive hit; scene is behind the camera")
    P = c[:, None, None] + best_t[None] * d
    image = np.zeros((3, h, w))
    textureless = np.zeros((h, w), dtype=bool)
    shade = np.array([0.8, 0.9, 1.0])  # side, top/bottom, front faces
    textures = [scene.background_texture] + [b.texture for b in scene.boxes]
    for k, tex in enumerate(textures):
        sel = surface == k
        if not np.any(sel):
            continue
        ax = face_axis[sel]
        px, py, pz = P[0][sel], P[1][sel], P[2][sel]
        s = np.where(ax == 0, pz, px)
        t = np.where(ax == 1, pz, py)
        rgb = tex.evaluate(s, t) * shade[ax][None]
        image[:, sel] = rgb
        textureless[sel] = tex.textureless
    return RenderResult(image.astype(np.float32), best_t.astype(np.float32), surface, textureless)


def render_scene(scene: SceneSpec, camera_pose: PoseVec, K: Intrinsics, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Ray-cast ``scene`` from a camera placed at ``camera_pose`` (camera-to-world).

    Returns the (3, h, w) image and the (h, w) depth map.
    """
    r = render_layers(scene, pose_to_matrix(camera_pose), K, h, w)
    return r.image, r.depth


# ---------------------------------------------------------------------------
# random scenes and triplets


@dataclass(frozen=True)
class SynthConfig:
    hr_size: tuple[int, int] = (192, 576)
    background_depth: tuple[float, float] = (25.0, 50.0)
    box_count: tuple[int, int] = (3, 6)
    box_near: tuple[float, float] = (6.0, 18.0)
    box_width: tuple[float, float] = (1.0, 4.0)
    box_thickness: tuple[float, float] = (0.5, 2.5)
    forward_motion: tuple[float, float] = (0.6, 1.2)
    lateral_motion: float = 0.3
    vertical_motion: float = 0.05
    rotation_jitter: float = 0.01
    textureless_fraction: float = 0.2
    ground_height: float | None = 1.5  # camera height above a ground slab; None floats the boxes
    box_texture_scale: float = 1.0


@dataclass
class FrameTriplet:
    prev: np.ndarray
    target: np.ndarray
    next: np.ndarray
    gt_depth: np.ndarray
    pose_prev: PoseVec   # target -> prev
    pose_next: PoseVec   # target -> next
    intrinsics: Intrinsics
    visibility: np.ndarray | None = None  # uint8 flags, see VISIBLE_PREV / VISIBLE_NEXT
    textureless: np.ndarray | None = None  # bool, target pixels on untextured surfaces

    @property
    def frames(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.prev, self.target, self.next


VISIBLE_PREV = 85
VISIBLE_NEXT = 170


def random_texture(rng: np.random.Generator, scale: float, textureless: bool) -> Texture:
    base = tuple(float(x) for x in rng.uniform(0.25, 0.75, size=3))
    if textureless:
        return Texture(base=base)
    freqs = []
    for _ in range(4):
        period = rng.uniform(0.6, 2.0) * scale
        ang = rng.uniform(0, math.pi)
        freqs.append((math.cos(ang) / period, math.sin(ang) / period, float(rng.uniform(0, 2 * math.pi)), 0.5))
    tint = tuple(float(x) for x in rng.uniform(0.6, 1.0, size=3))
    return Texture(base=base, tint=tint, contrast=float(rng.uniform(0.25, 0.4)),
                   checker_period=float(rng.uniform(0.7, 1.5) * scale),
                   checker_weight=float(rng.uniform(0.3, 0.7)), noise_freqs=tuple(freqs))


def random_scene(rng: np.random.Generator, cfg: SynthConfig, K: Intrinsics) -> SceneSpec:
    h, w = cfg.hr_size
    bg = float(rng.uniform(*cfg.background_depth))
    bg_tex = random_texture(rng, 4.0, textureless=False)
    boxes = []
    ground = cfg.ground_height
    if ground is not None:
        # a thin slab from just ahead of the previous camera to just short of the background
        near = D_MIN + DEPTH_MARGIN + 0.01
        far = bg - 0.05
        half_x = far * (w / 2) / K.fx + 2.0
        boxes.append(Box((0.0, ground + 0.25, (near + far) / 2), (2 * half_x, 0.5, far - near),
                         random_texture(rng, 2.0, textureless=False)))
    for _ in range(int(rng.integers(cfg.box_count[0], cfg.box_count[1] + 1))):
        z = float(rng.uniform(*cfg.box_near))
        bw, bh = rng.uniform(*cfg.box_width, size=2)
        thick = float(rng.uniform(*cfg.box_thickness))
        half_x = 0.8 * z * (w / 2) / K.fx
        half_y = 0.8 * z * (h / 2) / K.fy
        cx = float(rng.uniform(-half_x, half_x))
        cy = ground - bh / 2 if ground is not None else float(rng.uniform(-half_y, half_y))
        tex = random_texture(rng, cfg.box_texture_scale, textureless=bool(rng.random() < cfg.textureless_fraction))
        boxes.append(Box((cx, cy, z + thick / 2), (float(bw), float(bh), thick), tex))
    scene = SceneSpec(bg, bg_tex, tuple(boxes))
    scene.validate()
    return scene


def random_motion(rng: np.random.Generator, cfg: SynthConfig, forward_sign: float) -> PoseVec:
    """Relative pose target -> source.  forward_sign -1 for the next frame (camera moved ahead)."""
    tz = forward_sign * rng.uniform(*cfg.forward_motion)
    tx = rng.uniform(-cfg.lateral_motion, cfg.lateral_motion)
    ty = rng.uniform(-cfg.vertical_motion, cfg.vertical_motion)
    r = rng.uniform(-cfg.rotation_jitter, cfg.rotation_jitter, size=3)
    return PoseVec((float(tx), float(ty), float(tz)), tuple(float(x) for x in r))


def visibility_mask(depth_t: np.ndarray, K: Intrinsics, T: np.ndarray, depth_s: np.ndarray,
                    rel_tol: float = 0.01) -> np.ndarray:
    """Target pixels whose 3-D point is seen unoccluded by the source camera.

    All four bilinear neighbours of the projected location must carry
    (nearly) the projected depth, so sampling there never mixes surfaces.
    """
    h, w = depth_t.shape
    vv, uu = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    X = np.stack([(uu - K.cx) / K.fx * depth_t, (vv - K.cy) / K.fy * depth_t, depth_t.astype(np.float64)])
    Xs = np.einsum("ij,jhw->ihw", T[:3, :3], X) + T[:3, 3, None, None]
    z = Xs[2]
    ok = z > 1e-6
    zs = np.where(ok, z, 1.0)
    u = K.fx * Xs[0] / zs + K.cx
    v = K.fy * Xs[1] / zs + K.cy
    ok &= (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    x0 = np.clip(np.floor(np.where(ok, u, 0)), 0, w - 2).astype(int)
    y0 = np.clip(np.floor(np.where(ok, v, 0)), 0, h - 2).astype(int)
    for dy in (0, 1):
        for dx in (0, 1):
            ds = depth_s[y0 + dy, x0 + dx]
            ok &= np.abs(ds - z) <= rel_tol * z
    return ok


def make_triplet(rng: np.random.Generator, cfg: SynthConfig) -> FrameTriplet:
    h, w = cfg.hr_size
    K = default_intrinsics(h, w)
    scene = random_scene(rng, cfg, K)
    pose_prev = random_motion(rng, cfg, +1.0)
    pose_next = random_motion(rng, cfg, -1.0)
    target = render_layers(scene, np.eye(4), K, h, w)
    frames = {}
    vis = np.zeros((h, w), dtype=np.uint8)
    for key, pose, flag in (("prev", pose_prev, VISIBLE_PREV), ("next", pose_next, VISIBLE_NEXT)):
        T = pose_to_matrix(pose)
        src = render_layers(scene, invert_pose(T), K, h, w)
        frames[key] = src.image
        vis += flag * visibility_mask(target.depth, K, T, src.depth).astype(np.uint8)
    return FrameTriplet(frames["prev"], target.image, frames["next"], target.depth,
                        pose_prev, pose_next, K, vis, target.textureless)


# ---------------------------------------------------------------------------
# dataset files


def triplet_dir(root, index: int) -> Path:
    return Path(root) / f"{index:06d}"


def save_triplet(path, triplet: FrameTriplet) -> None:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        fileio.write_ppm(path / "prev.ppm", triplet.prev)
        fileio.write_ppm(path / "target.ppm", triplet.target)
        fileio.write_ppm(path / "next.ppm", triplet.next)
        fileio.write_depth(path / "depth.bin", triplet.gt_depth)
        (path / "poses.txt").write_text(f"{triplet.pose_prev.to_line()}\n{triplet.pose_next.to_line()}\n")
        (path / "intrinsics.txt").write_text(triplet.intrinsics.to_line() + "\n")
        if triplet.visibility is not None:
            fileio.write_pgm(path / "occl.pgm", triplet.visibility)
        if triplet.textureless is not None:
            fileio.write_pgm(path / "texless.pgm", triplet.textureless.astype(np.uint8) * 255)
    except OSError as exc:
        raise OSError(f"writing triplet to {path}: {exc}") from exc


def load_triplet(path, with_visibility: bool = False) -> FrameTriplet:
    """Read a triplet directory; ``with_visibility`` also reads the test-only masks."""
    path = Path(path)
    try:
        prev = fileio.read_ppm(path / "prev.ppm")
        target = fileio.read_ppm(path / "target.ppm")
        nxt = fileio.read_ppm(path / "next.ppm")
        depth = fileio.read_depth(path / "depth.bin")
        lines = [ln for ln in (path / "poses.txt").read_text().splitlines() if ln.strip()]
        if len(lines) != 2:
            raise fileio.FormatError(f"{path / 'poses.txt'}: expected 2 pose lines, got {len(lines)}")
        K = Intrinsics.from_line((path / "intrinsics.txt").read_text().strip())
        vis = fileio.read_pgm(path / "occl.pgm") if with_visibility else None
        texless = (fileio.read_pgm(path / "texless.pgm") > 127) if with_visibility else None
    except (OSError, ValueError) as exc:
        raise type(exc)(f"loading triplet {path}: {exc}") from exc
    if not (prev.shape == target.shape == nxt.shape) or target.shape[1:] != depth.shape:
        raise fileio.FormatError(f"{path}: frame/depth sizes disagree")
    return FrameTriplet(prev, target, nxt, depth, PoseVec.from_line(lines[0]), PoseVec.from_line(lines[1]), K, vis, texless)


def list_triplets(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.isdigit())
    if not dirs:
        raise FileNotFoundError(f"dataset directory {root} holds no triplet directories")
    return dirs


def gen_dataset(out, count: int, seed: int, cfg: SynthConfig = SynthConfig()) -> Path:
    """Render ``count`` triplets into ``out``; triplet i depends only on (seed, i)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        save_triplet(triplet_dir(out, i), make_triplet(rng, cfg))
    return out


# ---------------------------------------------------------------------------
# augmentation


@dataclass
class Views:
    frames: tuple[np.ndarray, np.ndarray, np.ndarray]   # prev, target, next; each (3, h, w)
    intrinsics: Intrinsics


def flip_views(views: Views) -> Views:
    w = views.frames[0].shape[2]
    return Views(tuple(np.ascontiguousarray(f[:, :, ::-1]) for f in views.frames), views.intrinsics.flipped(w))


def _downsample(img: np.ndarray, h: int, w: int) -> np.ndarray:
    return tc.resize_bilinear(Tensor(img[None]), h, w).data[0]


def augment_then_downsample(triplet: FrameTriplet, lr_hw: tuple[int, int],
                            rng: np.random.Generator | None = None,
                            flip_prob: float = 0.5, brightness: float = 0.2,
                            contrast: float = 0.2) -> tuple[Views, Views]:
    """Augment at full resolution, then downsample to ``lr_hw``.

    One flip/brightness/contrast draw is shared by all three frames.
    ``rng=None`` disables augmentation.  Draw order: flip, brightness, contrast.
    """
    hh, hw = triplet.target.shape[1:]
    lh, lw = lr_hw
    if (hh, hw) != (3 * lh, 3 * lw):
        raise ValueError(f"HR size {hh}x{hw} must be exactly 3x the LR size {lh}x{lw}")
    views = Views(triplet.frames, triplet.intrinsics)
    if rng is not None:
        do_flip = rng.random() < flip_prob
        b = rng.uniform(1 - brightness, 1 + brightness)
        c = rng.uniform(1 - contrast, 1 + contrast)
        if do_flip:
            views = flip_views(views)
        mean = float(np.mean(views.frames[1]))
        views = Views(tuple(np.clip(((f - mean) * c + mean) * b, 0, 1).astype(np.float32) for f in views.frames),
                      views.intrinsics)
    lr = Views(tuple(_downsample(f, lh, lw) for f in views.frames), views.intrinsics.resized((hh, hw), (lh, lw)))
    return lr, views
