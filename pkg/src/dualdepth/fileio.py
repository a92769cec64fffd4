"""Binary/text formats: PPM/PGM images, DPTH depth maps, pose and intrinsics lines."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

DEPTH_MAGIC = b"DPTH"


class FormatError(ValueError):
    pass


def _read_header_tokens(buf: bytes, count: int, path) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1  # one whitespace byte ends the header


def write_ppm(path, image: np.ndarray) -> None:
    """Write a (3, h, w) float image in [0, 1] as binary P6, maxval 255."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected (3, h, w) image, got {img.shape}")
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    h, w = q.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + q.tobytes())


def read_ppm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens, off = _read_header_tokens(buf, 4, path)
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    need = w * h * 3
    if len(buf) - off < need:
        raise FormatError(f"{path}: truncated pixel data at byte {len(buf)}, need {off + need}")
    px = np.frombuffer(buf, dtype=np.uint8, count=need, offset=off).reshape(h, w, 3)
    return (px.transpose(2, 0, 1).astype(np.float32) / 255.0)


def write_pgm(path, image: np.ndarray) -> None:
    """Write an (h, w) uint8 array (or floats in [0, 1]) as binary P5."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    if img.ndim != 2:
        raise ValueError(f"expected (h, w) image, got {img.shape}")
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 file as uint8 (h, w)."""
    buf = Path(path).read_bytes()
    tokens, off = _read_header_tokens(buf, 4, path)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if len(buf) - off < w * h:
        raise FormatError(f"{path}: truncated pixel data at byte {len(buf)}, need {off + w * h}")
    return np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=off).reshape(h, w).copy()


def encode_depth(depth: np.ndarray) -> bytes:
    d = np.asarray(depth, dtype="<f4")
    if d.ndim != 2:
        raise ValueError(f"depth map must be 2-D, got {d.shape}")
    h, w = d.shape
    return DEPTH_MAGIC + struct.pack("<II", h, w) + d.tobytes(order="C")


def write_depth(path, depth: np.ndarray) -> None:
    Path(path).write_bytes(encode_depth(depth))


def read_depth(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:4] != DEPTH_MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r} at byte 0, expected {DEPTH_MAGIC!r}")
    if len(buf) < 12:
        raise FormatError(f"{path}: truncated header at byte {len(buf)}")
    h, w = struct.unpack_from("<II", buf, 4)
    need = 12 + 4 * h * w
    if len(buf) < need:
        raise FormatError(f"{path}: truncated payload at byte {len(buf)}, need {need}")
    return np.frombuffer(buf, dtype="<f4", count=h * w, offset=12).reshape(h, w).astype(np.float32)
