from __future__ import annotations

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter, map_coordinates

from scanforge.raster import Raster


def textured(height: int, width: int, seed: int = 0, sigma: float = 2.0, channels: int = 3) -> Raster:
    """Smooth random texture with features everywhere (good for matching)."""
    rng = np.random.default_rng(seed)
    planes = [gaussian_filter(rng.random((height, width)), sigma) for _ in range(channels)]
    a = np.stack(planes, axis=-1)
    a = (a - a.min()) / (a.max() - a.min())
    return Raster(a.astype(np.float32))


def smooth_warp(img: Raster, amplitude: float, seed: int = 0) -> Raster:
    """Resample through a smooth sinusoidal displacement field (<= amplitude px)."""
    h, w = img.height, img.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    rng = np.random.default_rng(seed)
    phase_x, phase_y = rng.uniform(0, 2 * np.pi, 2)
    dx = amplitude * np.sin(2 * np.pi * yy / h + phase_x) * np.cos(2 * np.pi * xx / (1.3 * w))
    dy = amplitude * np.cos(2 * np.pi * xx / w + phase_y) * np.sin(2 * np.pi * yy / (1.7 * h))
    out = np.stack(
        [
            map_coordinates(img.data[:, :, c].astype(np.float64), [yy + dy, xx + dx], order=1, mode="nearest")
            for c in range(img.channels)
        ],
        axis=-1,
    )
    return Raster(np.clip(out, 0.0, 1.0).astype(np.float32))


def checkerboard(cells_x: int, cells_y: int, cell: int, lo: float = 0.1, hi: float = 0.9) -> Raster:
    h, w = cells_y * cell, cells_x * cell
    yy, xx = np.mgrid[0:h, 0:w]
    board = ((yy // cell + xx // cell) % 2).astype(np.float64)
    a = lo + (hi - lo) * board
    return Raster(np.repeat(a[:, :, None], 3, axis=2).astype(np.float32))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
