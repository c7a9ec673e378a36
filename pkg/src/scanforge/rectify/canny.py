"""Canny edge detection: blur, Sobel, NMS, hysteresis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import InvalidParameterError
from ..raster import Raster

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class CannyParams:
    """Thresholds are fractions of the maximum gradient magnitude."""

    gaussian_sigma: float = 1.4
    low_threshold: float = 0.1
    high_threshold: float = 0.25

    def __post_init__(self) -> None:
        if not 0.0 < self.low_threshold < self.high_threshold < 1.0:
            raise InvalidParameterError(
                f"need 0 < low < high < 1, got {self.low_threshold}, {self.high_threshold}"
            )
        if self.gaussian_sigma <= 0:
            raise InvalidParameterError("gaussian_sigma must be > 0")


@dataclass(frozen=True)
class EdgeMap:
    width: int
    height: int
    edges: np.ndarray  # bool (height, width)

    def __post_init__(self) -> None:
        e = np.ascontiguousarray(self.edges, dtype=bool)
        if e.shape != (self.height, self.width):
            raise InvalidParameterError("edge mask shape does not match declared size")
        e.flags.writeable = False
        object.__setattr__(self, "edges", e)

    def count(self) -> int:
        return int(self.edges.sum())


def _nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep ridge pixels along the gradient direction (quantized to 4 sectors).

    Ties are broken asymmetrically (>= toward the negative side, > toward the
    positive side) so a symmetric step edge keeps exactly one column.
    """
    h, w = mag.shape
    padded = np.zeros((h + 2, w + 2), dtype=mag.dtype)
    padded[1:-1, 1:-1] = mag

    angle = np.arctan2(gy, gx)  # (-pi, pi]
    sector = (np.round(angle / (np.pi / 4.0)).astype(np.int64)) % 4

    # Neighbor offsets (dy, dx) on the positive side for each sector:
    # 0: E/W, 1: NE/SW, 2: N/S, 3: NW/SE (image coords, y down).
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    keep = np.zeros_like(mag, dtype=bool)
    for s, (dy, dx) in offsets.items():
        sel = sector == s
        pos = padded[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
        neg = padded[1 - dy : h + 1 - dy, 1 - dx : w + 1 - dx]
        keep |= sel & (mag > pos) & (mag >= neg)
    return np.where(keep, mag, 0.0)


def canny_edges(gray: Raster, params: CannyParams = CannyParams()) -> EdgeMap:
    """Edge map via Gaussian smoothing, Sobel gradients, non-maximum
    suppression, and double-threshold hysteresis with 8-connectivity."""
    if gray.channels != 1:
        raise InvalidParameterError("canny_edges expects a single-channel raster")
    plane = gray.plane().astype(np.float64)
    smooth = ndimage.gaussian_filter(plane, params.gaussian_sigma, mode="nearest")
    gx = ndimage.correlate(smooth, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(smooth, _SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = float(mag.max())
    # Filter round-off ripple (constant images are not all-edge).
    if peak <= 1e-10:
        return EdgeMap(gray.width, gray.height, np.zeros(plane.shape, dtype=bool))

    thinned = _nonmax_suppress(mag, gx, gy)
    strong = thinned > params.high_threshold * peak
    weak = thinned > params.low_threshold * peak

    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return EdgeMap(gray.width, gray.height, np.zeros(plane.shape, dtype=bool))
    keep_label = np.zeros(n + 1, dtype=bool)
    keep_label[np.unique(labels[strong])] = True
    keep_label[0] = False
    edges = keep_label[labels]
    return EdgeMap(gray.width, gray.height, edges)
