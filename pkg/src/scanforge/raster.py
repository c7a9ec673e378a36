"""Core image container and low-level pixel operations.

A :class:`Raster` is an immutable H x W x C float32 array with samples in
[0, 1] (sRGB interpretation for 3 channels). Every public operation returns
a new Raster and preserves the [0, 1] invariant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidParameterError

ALLOWED_ROTATIONS = (0, 90, 180, 270)

# ITU-R BT.601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class Size(NamedTuple):
    width: int
    height: int


def round_half_up(x: float) -> int:
    """Round to nearest integer, ties away from zero (for positive inputs)."""
    return int(np.floor(x + 0.5))


@dataclass(frozen=True)
class Raster:
    """Immutable image: (height, width, channels) float32 samples in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        a = self.data
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[2] not in (1, 3):
            raise InvalidParameterError(f"expected HxWx{{1,3}} array, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise InvalidParameterError("raster must be at least 1x1")
        a = np.ascontiguousarray(np.clip(a, 0.0, 1.0), dtype=np.float32)
        a.flags.writeable = False
        object.__setattr__(self, "data", a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def size(self) -> Size:
        return Size(self.width, self.height)

    def plane(self) -> np.ndarray:
        """Single-channel view as a 2-D array (first channel)."""
        return self.data[:, :, 0]


def from_array(a: np.ndarray) -> Raster:
    return Raster(np.asarray(a, dtype=np.float32))


def constant(width: int, height: int, value: float = 0.0, channels: int = 3) -> Raster:
    return Raster(np.full((height, width, channels), value, dtype=np.float32))


def center_crop_percent(img: Raster, p: float) -> Raster:
    """Centered crop keeping fraction ``p`` of each axis (no resampling).

    Output size is round-half-up of dim*p per axis; an odd remainder leaves
    the extra pixel on the right/bottom.
    """
    if not 0.0 < p <= 1.0:
        raise InvalidParameterError(f"crop fraction must be in (0, 1], got {p}")
    out_w = max(1, round_half_up(img.width * p))
    out_h = max(1, round_half_up(img.height * p))
    return center_crop_to(img, Size(out_w, out_h))


def center_crop_to(img: Raster, target: Size) -> Raster:
    """Centered crop to an exact size; odd remainders biased right/bottom."""
    tw, th = int(target.width), int(target.height)
    if tw < 1 or th < 1:
        raise InvalidParameterError("target size must be at least 1x1")
    if tw > img.width or th > img.height:
        raise InvalidParameterError(
            f"target {tw}x{th} exceeds source {img.width}x{img.height}"
        )
    x0 = (img.width - tw) // 2
    y0 = (img.height - th) // 2
    return Raster(img.data[y0 : y0 + th, x0 : x0 + tw, :])


def crop_to_aspect(img: Raster, ratio_w: int, ratio_h: int) -> Raster:
    """Largest centered sub-rectangle with aspect ratio ``ratio_w:ratio_h``."""
    if ratio_w < 1 or ratio_h < 1:
        raise InvalidParameterError("aspect ratio terms must be >= 1")
    w, h = img.width, img.height
    if w * ratio_h > h * ratio_w:
        # Too wide: height limits.
        new_w = max(1, (h * ratio_w) // ratio_h)
        new_h = h
    else:
        new_w = w
        new_h = max(1, (w * ratio_h) // ratio_w)
    return center_crop_to(img, Size(int(new_w), int(new_h)))


def _cubic_weights(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom (a = -0.5) weights for taps at offsets -1, 0, 1, 2."""
    t2 = t * t
    t3 = t2 * t
    w = np.empty(t.shape + (4,), dtype=np.float64)
    w[..., 0] = -0.5 * t3 + t2 - 0.5 * t
    w[..., 1] = 1.5 * t3 - 2.5 * t2 + 1.0
    w[..., 2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w[..., 3] = 0.5 * t3 - 0.5 * t2
    return w


def _resize_axis(a: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    src_len = a.shape[axis]
    if out_len == src_len:
        return a
    scale = src_len / out_len
    # Pixel-center mapping: identical sizes sample exactly on the grid.
    src = (np.arange(out_len, dtype=np.float64) + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    t = src - base
    w = _cubic_weights(t)  # (out_len, 4)
    a = np.moveaxis(a, axis, 0)
    out = np.zeros((out_len,) + a.shape[1:], dtype=np.float64)
    for k in range(4):
        idx = np.clip(base + (k - 1), 0, src_len - 1)  # edge clamp
        out += w[:, k].reshape((-1,) + (1,) * (a.ndim - 1)) * a[idx]
    return np.moveaxis(out, 0, axis)


def resize_bicubic(img: Raster, target: Size) -> Raster:
    """Bicubic (Catmull-Rom) resize with edge-clamped sampling."""
    tw, th = int(target.width), int(target.height)
    if tw < 1 or th < 1:
        raise InvalidParameterError("target size must be at least 1x1")
    a = img.data.astype(np.float64)
    a = _resize_axis(a, tw, axis=1)
    a = _resize_axis(a, th, axis=0)
    return Raster(np.clip(a, 0.0, 1.0).astype(np.float32))


def orient_landscape(img: Raster) -> Raster:
    """Rotate 90 degrees clockwise when taller than wide; square stays put."""
    if img.height > img.width:
        return Raster(np.rot90(img.data, k=-1, axes=(0, 1)))
    return img


def flip_rotate(img: Raster, flip_h: bool, flip_v: bool, rot: int) -> Raster:
    """Apply flips, then a clockwise rotation from {0, 90, 180, 270}."""
    if rot not in ALLOWED_ROTATIONS:
        raise InvalidParameterError(f"rotation must be one of {ALLOWED_ROTATIONS}, got {rot}")
    a = img.data
    if flip_h:
        a = a[:, ::-1, :]
    if flip_v:
        a = a[::-1, :, :]
    if rot:
        a = np.rot90(a, k=-(rot // 90), axes=(0, 1))
    return Raster(np.ascontiguousarray(a))


def to_grayscale(img: Raster) -> Raster:
    """Luminance (BT.601) of a 3-channel raster; 1-channel passes through."""
    if img.channels == 1:
        return img
    y = img.data.astype(np.float64) @ _LUMA
    return Raster(y.astype(np.float32)[:, :, None])
