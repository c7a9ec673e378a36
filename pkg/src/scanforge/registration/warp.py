"""Inverse-mapping perspective warp with bilinear sampling."""
from __future__ import annotations

import numpy as np

from ..raster import Raster, Size
from .homography import Homography


def warp_perspective(img: Raster, h: Homography, out: Size) -> Raster:
    """Warp ``img`` by ``h`` (source coords -> destination coords).

    Each output pixel center is pulled back through h^-1 and sampled
    bilinearly; samples falling outside the source are black.
    """
    hinv = h.inverse().apply_matrix()
    ow, oh = int(out.width), int(out.height)
    xs, ys = np.meshgrid(np.arange(ow, dtype=np.float64), np.arange(oh, dtype=np.float64))
    denom = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    # Pixels whose pullback blows up contribute nothing.
    safe = np.abs(denom) > 1e-12
    denom = np.where(safe, denom, 1.0)
    sx = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / denom
    sy = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / denom

    src = img.data.astype(np.float64)
    sh, sw = src.shape[:2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0

    out_acc = np.zeros((oh, ow, src.shape[2]), dtype=np.float64)
    for dy in (0, 1):
        wy = np.where(dy == 0, 1.0 - fy, fy)
        yy = y0 + dy
        for dx in (0, 1):
            wx = np.where(dx == 0, 1.0 - fx, fx)
            xx = x0 + dx
            inb = (xx >= 0) & (xx < sw) & (yy >= 0) & (yy < sh) & safe
            w = wx * wy * inb
            vals = src[np.clip(yy, 0, sh - 1), np.clip(xx, 0, sw - 1)]
            out_acc += w[:, :, None] * vals
    return Raster(np.clip(out_acc, 0.0, 1.0).astype(np.float32))
