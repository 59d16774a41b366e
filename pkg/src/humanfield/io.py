"""Binary float maps (DPTH, SDF3) and PNG images.

DPTH: 16-byte header ``b"DPTH", u32 width, u32 height, u32 reserved``
followed by row-major little-endian float32 values. Missing depth is
stored as 0.0 and read back as ``inf``.

SDF3: ``b"SDF3", u32 nx, u32 ny, u32 nz`` then ``nx*ny*nz*channels``
little-endian float32 values in C order ``[x, y, z, channel]``. The
channel count is implied by the payload length.
"""
from __future__ import annotations

import os
import struct

import numpy as np
from PIL import Image

from .camera import DepthMap


class FormatError(ValueError):
    pass


def write_dpth(path, values: np.ndarray, sentinel_to_zero: bool = True) -> None:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("DPTH payload must be 2D")
    if sentinel_to_zero:
        a = np.where(np.isfinite(a), a, 0.0)
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(b"DPTH" + struct.pack("<III", w, h, 0))
        fh.write(a.astype("<f4").tobytes())


def read_dpth(path, zero_is_sentinel: bool = True) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != b"DPTH":
        raise FormatError(f"{path}: bad DPTH header")
    w, h, _ = struct.unpack("<III", data[4:16])
    if len(data) != 16 + 4 * w * h:
        raise FormatError(f"{path}: payload size {len(data) - 16} != {4 * w * h}")
    a = np.frombuffer(data, "<f4", w * h, 16).astype(np.float64).reshape(h, w)
    if zero_is_sentinel:
        a = np.where(a == 0.0, np.inf, a)
    return a


def save_depth(path, depth: DepthMap) -> None:
    write_dpth(path, depth.depth)


def load_depth(path) -> DepthMap:
    return DepthMap(read_dpth(path))


def write_sdf3(path, volume: np.ndarray) -> None:
    v = np.asarray(volume, dtype=np.float64)
    if v.ndim == 3:
        v = v[..., None]
    nx, ny, nz = v.shape[:3]
    with open(path, "wb") as fh:
        fh.write(b"SDF3" + struct.pack("<III", nx, ny, nz))
        fh.write(np.ascontiguousarray(v).astype("<f4").tobytes())


def read_sdf3(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != b"SDF3":
        raise FormatError(f"{path}: bad SDF3 header")
    nx, ny, nz = struct.unpack("<III", data[4:16])
    n = (len(data) - 16) // 4
    if n % (nx * ny * nz) or n == 0:
        raise FormatError(f"{path}: payload does not divide into {nx}x{ny}x{nz} voxels")
    c = n // (nx * ny * nz)
    return np.frombuffer(data, "<f4", n, 16).astype(np.float64).reshape(nx, ny, nz, c)


def write_png_rgba(path, color: np.ndarray, alpha: np.ndarray) -> None:
    """8-bit RGBA from premultiplied color and alpha in [0, 1]."""
    a = np.clip(alpha, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        straight = np.where(a[..., None] > 0, color / a[..., None], 0.0)
    rgba = np.concatenate([np.clip(straight, 0, 1), a[..., None]], -1)
    Image.fromarray(np.round(rgba * 255).astype(np.uint8), "RGBA").save(path, optimize=False)


def write_png_gray(path, values: np.ndarray) -> None:
    Image.fromarray(np.round(np.clip(values, 0, 1) * 255).astype(np.uint8), "L").save(path)


def write_png_rgb(path, image: np.ndarray) -> None:
    Image.fromarray(np.round(np.clip(image, 0, 1) * 255).astype(np.uint8), "RGB").save(path)


def read_image(path) -> np.ndarray:
    """RGB float image in [0, 1]; alpha, if any, is composited over white."""
    im = Image.open(os.fspath(path))
    if im.mode in ("RGBA", "LA"):
        a = np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0
        return a[..., :3] * a[..., 3:] + (1 - a[..., 3:])
    return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def read_mask(path) -> np.ndarray:
    """Boolean foreground mask from an 8-bit grayscale PNG (>= 128 is foreground)."""
    return np.asarray(Image.open(os.fspath(path)).convert("L")) >= 128
