"""Scale-invariant keypoint detection and description.

Difference-of-Gaussians scale-space extrema with subpixel refinement,
orientation assignment from the dominant gradient direction, and 4x4x8
gradient-orientation histogram descriptors. Everything is deterministic:
no random state anywhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import InvalidParameterError
from ..raster import Raster

# Pyramid shape.
N_INTERVALS = 3
INIT_SIGMA = 1.6
INPUT_SIGMA = 0.5  # assumed blur of the incoming image
MIN_PYRAMID_DIM = 16
MIN_IMAGE_DIM = 32

# Keypoint acceptance.
CONTRAST_THRESHOLD = 0.03
EDGE_RATIO = 10.0
IMAGE_BORDER = 5
MAX_REFINE_STEPS = 5

# Orientation histogram.
ORI_BINS = 36
ORI_SIGMA_FACTOR = 1.5
ORI_RADIUS_FACTOR = 3.0
ORI_PEAK_RATIO = 0.8

# Descriptor grid.
DESC_WIDTH = 4
DESC_BINS = 8
DESC_CELL_FACTOR = 3.0
DESC_CLIP = 0.2
DESC_LENGTH = DESC_WIDTH * DESC_WIDTH * DESC_BINS

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Keypoint:
    """Subpixel feature location with scale (pixels) and orientation (radians)."""

    x: float
    y: float
    scale: float
    orientation: float
    response: float


@dataclass(frozen=True)
class Descriptor:
    """Unit-norm 128-vector of local gradient-orientation statistics."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float32)
        if v.shape != (DESC_LENGTH,):
            raise InvalidParameterError(f"descriptor must have length {DESC_LENGTH}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def _as_plane(gray: Raster) -> np.ndarray:
    if gray.channels != 1:
        raise InvalidParameterError("feature detection expects a single-channel raster")
    return gray.plane().astype(np.float64)


def _build_pyramid(plane: np.ndarray) -> list[np.ndarray]:
    """Per octave, an (N_INTERVALS + 3, h, w) stack of Gaussian images."""
    k = 2.0 ** (1.0 / N_INTERVALS)
    sigmas = [INIT_SIGMA * k**i for i in range(N_INTERVALS + 3)]
    increments = [np.sqrt(sigmas[i] ** 2 - sigmas[i - 1] ** 2) for i in range(1, len(sigmas))]

    base_blur = np.sqrt(max(INIT_SIGMA**2 - INPUT_SIGMA**2, 0.01))
    current = gaussian_filter(plane, base_blur, mode="nearest")
    n_octaves = max(1, int(np.log2(min(plane.shape) / MIN_PYRAMID_DIM)) + 1)

    octaves = []
    for _ in range(n_octaves):
        imgs = [current]
        for inc in increments:
            imgs.append(gaussian_filter(imgs[-1], inc, mode="nearest"))
        octaves.append(np.stack(imgs))
        current = imgs[N_INTERVALS][::2, ::2]
        if min(current.shape) < MIN_PYRAMID_DIM:
            break
    return octaves


def _dog_stack(gaussians: np.ndarray) -> np.ndarray:
    return gaussians[1:] - gaussians[:-1]


def _extrema_candidates(dog: np.ndarray, border: int) -> np.ndarray:
    """Indices (s, y, x) of strict 26-neighborhood extrema, border excluded."""
    n, h, w = dog.shape
    if h <= 2 * border or w <= 2 * border:
        return np.empty((0, 3), dtype=np.int64)
    core = dog[1 : n - 1, border : h - border, border : w - border]
    strong = np.abs(core) > 0.5 * CONTRAST_THRESHOLD
    is_max = strong & (core > 0)
    is_min = strong & (core < 0)
    for ds in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if ds == 0 and dy == 0 and dx == 0:
                    continue
                neigh = dog[
                    1 + ds : n - 1 + ds,
                    border + dy : h - border + dy,
                    border + dx : w - border + dx,
                ]
                is_max &= core > neigh
                is_min &= core < neigh
                if not (is_max.any() or is_min.any()):
                    return np.empty((0, 3), dtype=np.int64)
    idx = np.argwhere(is_max | is_min)
    idx += np.array([1, border, border])
    return idx


def _refine_extremum(dog: np.ndarray, s: int, y: int, x: int):
    """Quadratic subpixel fit; returns (x, y, s) offsets + contrast, or None."""
    n, h, w = dog.shape
    g = np.zeros(3)
    offset = np.zeros(3)
    for _ in range(MAX_REFINE_STEPS):
        c = dog[s, y, x]
        g[0] = 0.5 * (dog[s, y, x + 1] - dog[s, y, x - 1])
        g[1] = 0.5 * (dog[s, y + 1, x] - dog[s, y - 1, x])
        g[2] = 0.5 * (dog[s + 1, y, x] - dog[s - 1, y, x])
        dxx = dog[s, y, x + 1] + dog[s, y, x - 1] - 2 * c
        dyy = dog[s, y + 1, x] + dog[s, y - 1, x] - 2 * c
        dss = dog[s + 1, y, x] + dog[s - 1, y, x] - 2 * c
        dxy = 0.25 * (
            dog[s, y + 1, x + 1] - dog[s, y + 1, x - 1] - dog[s, y - 1, x + 1] + dog[s, y - 1, x - 1]
        )
        dxs = 0.25 * (
            dog[s + 1, y, x + 1] - dog[s + 1, y, x - 1] - dog[s - 1, y, x + 1] + dog[s - 1, y, x - 1]
        )
        dys = 0.25 * (
            dog[s + 1, y + 1, x] - dog[s + 1, y - 1, x] - dog[s - 1, y + 1, x] + dog[s - 1, y - 1, x]
        )
        hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
        try:
            offset = -np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) < 0.5):
            break
        x += int(round(offset[0]))
        y += int(round(offset[1]))
        s += int(round(offset[2]))
        if not (1 <= s < n - 1 and IMAGE_BORDER <= y < h - IMAGE_BORDER and IMAGE_BORDER <= x < w - IMAGE_BORDER):
            return None
    else:
        return None

    contrast = dog[s, y, x] + 0.5 * float(g @ offset)
    if abs(contrast) < CONTRAST_THRESHOLD:
        return None
    # Edge response: reject ridge-like extrema via the 2x2 spatial Hessian.
    c = dog[s, y, x]
    dxx = dog[s, y, x + 1] + dog[s, y, x - 1] - 2 * c
    dyy = dog[s, y + 1, x] + dog[s, y - 1, x] - 2 * c
    dxy = 0.25 * (
        dog[s, y + 1, x + 1] - dog[s, y + 1, x - 1] - dog[s, y - 1, x + 1] + dog[s, y - 1, x - 1]
    )
    tr = dxx + dyy
    det = dxx * dyy - dxy * dxy
    if det <= 0 or tr * tr * EDGE_RATIO >= (EDGE_RATIO + 1) ** 2 * det:
        return None
    return x + offset[0], y + offset[1], s + offset[2], abs(contrast)


def _gradients(img: np.ndarray, y0: int, y1: int, x0: int, x1: int):
    """Central-difference gradients of img[y0:y1, x0:x1] (bounds pre-checked)."""
    gx = 0.5 * (img[y0:y1, x0 + 1 : x1 + 1] - img[y0:y1, x0 - 1 : x1 - 1])
    gy = 0.5 * (img[y0 + 1 : y1 + 1, x0:x1] - img[y0 - 1 : y1 - 1, x0:x1])
    return gx, gy


_ORI_SMOOTH = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _orientation_peaks(gimg: np.ndarray, x: float, y: float, sigma_oct: float) -> list[float]:
    h, w = gimg.shape
    sig = ORI_SIGMA_FACTOR * sigma_oct
    radius = max(1, int(round(ORI_RADIUS_FACTOR * sig)))
    cx, cy = int(round(x)), int(round(y))
    x0, x1 = max(cx - radius, 1), min(cx + radius + 1, w - 1)
    y0, y1 = max(cy - radius, 1), min(cy + radius + 1, h - 1)
    if x1 - x0 < 2 or y1 - y0 < 2:
        return []
    gx, gy = _gradients(gimg, y0, y1, x0, x1)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    dx2 = (np.arange(x0, x1, dtype=np.float64) - x) ** 2
    dy2 = (np.arange(y0, y1, dtype=np.float64) - y) ** 2
    wgt = np.exp(-(dx2[None, :] + dy2[:, None]) / (2.0 * sig * sig))
    bins = np.floor((ang % _TWO_PI) / _TWO_PI * ORI_BINS).astype(np.int64) % ORI_BINS
    hist = np.bincount(bins.ravel(), weights=(mag * wgt).ravel(), minlength=ORI_BINS)
    for _ in range(2):
        hist = np.convolve(np.concatenate([hist[-2:], hist, hist[:2]]), _ORI_SMOOTH, mode="valid")
    peak = hist.max()
    if peak <= 0:
        return []
    out = []
    for i in range(ORI_BINS):
        left = hist[(i - 1) % ORI_BINS]
        right = hist[(i + 1) % ORI_BINS]
        if hist[i] >= ORI_PEAK_RATIO * peak and hist[i] > left and hist[i] > right:
            # Parabolic interpolation of the bin center.
            denom = left - 2 * hist[i] + right
            delta = 0.5 * (left - right) / denom if abs(denom) > 1e-12 else 0.0
            out.append(((i + delta + 0.5) / ORI_BINS * _TWO_PI) % _TWO_PI)
    return out


def _descriptor_vector(gimg: np.ndarray, x: float, y: float, sigma_oct: float, angle: float):
    h, w = gimg.shape
    d, nbins = DESC_WIDTH, DESC_BINS
    cell = DESC_CELL_FACTOR * sigma_oct
    radius = int(round(cell * np.sqrt(2) * (d + 1) * 0.5))
    cx, cy = int(round(x)), int(round(y))
    if cx - radius < 1 or cx + radius > w - 2 or cy - radius < 1 or cy + radius > h - 2:
        return None  # support window leaves the image: descriptor dropped

    x0, x1 = cx - radius, cx + radius + 1
    y0, y1 = cy - radius, cy + radius + 1
    gx, gy = _gradients(gimg, y0, y1, x0, x1)
    mag = np.hypot(gx, gy).ravel()
    ang = np.arctan2(gy, gx).ravel()
    dxr = np.arange(x0, x1, dtype=np.float64) - x
    dyr = np.arange(y0, y1, dtype=np.float64) - y
    dx = np.broadcast_to(dxr[None, :], (dyr.size, dxr.size)).ravel()
    dy = np.broadcast_to(dyr[:, None], (dyr.size, dxr.size)).ravel()

    cos_t, sin_t = np.cos(angle), np.sin(angle)
    x_rot = (cos_t * dx + sin_t * dy) / cell
    y_rot = (-sin_t * dx + cos_t * dy) / cell
    rbin = y_rot + 0.5 * d - 0.5
    cbin = x_rot + 0.5 * d - 0.5
    keep = (rbin > -1) & (rbin < d) & (cbin > -1) & (cbin < d)
    if not keep.any():
        return None
    rbin, cbin = rbin[keep], cbin[keep]
    obin = (((ang[keep] - angle) % _TWO_PI) / _TWO_PI) * nbins
    wgt = mag[keep] * np.exp(-(x_rot[keep] ** 2 + y_rot[keep] ** 2) / (0.5 * d * d))

    r0 = np.floor(rbin).astype(np.int64)
    c0 = np.floor(cbin).astype(np.int64)
    o0 = np.floor(obin).astype(np.int64)
    dr, dc, do = rbin - r0, cbin - c0, obin - o0

    # Trilinear scatter of every sample into its 8 neighbor bins, done as a
    # single bincount over a composite (row, col, orientation) flat index.
    idx_parts = []
    val_parts = []
    for ri, rw in ((0, 1 - dr), (1, dr)):
        for ci, cw in ((0, 1 - dc), (1, dc)):
            for oi, ow in ((0, 1 - do), (1, do)):
                flat = ((r0 + 1 + ri) * (d + 2) + (c0 + 1 + ci)) * nbins + (o0 + oi) % nbins
                idx_parts.append(flat)
                val_parts.append(wgt * rw * cw * ow)
    hist = np.bincount(
        np.concatenate(idx_parts),
        weights=np.concatenate(val_parts),
        minlength=(d + 2) * (d + 2) * nbins,
    ).reshape(d + 2, d + 2, nbins)
    v = hist[1:-1, 1:-1, :].ravel()
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        return None
    v = np.minimum(v / norm, DESC_CLIP)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        return None
    return (v / norm).astype(np.float32)


@dataclass(frozen=True)
class _OctaveLocation:
    octave: int
    layer: int
    x_oct: float
    y_oct: float
    sigma_oct: float


def _detect_internal(
    plane: np.ndarray, max_keypoints: int = 0
) -> tuple[list[Keypoint], list[_OctaveLocation], list[np.ndarray]]:
    """Refine extrema strongest-first; with a cap, orientation assignment
    stops once enough keypoints exist (the kept set matches the uncapped
    head of the response ordering)."""
    pyramids = _build_pyramid(plane)
    k = 2.0 ** (1.0 / N_INTERVALS)

    refined: list[tuple[float, int, float, float, float]] = []  # (resp, octave, x, y, s)
    for octave, gaussians in enumerate(pyramids):
        dog = _dog_stack(gaussians)
        cands = _extrema_candidates(dog, IMAGE_BORDER)
        if max_keypoints and len(cands) > 4 * max_keypoints:
            strength = np.abs(dog[cands[:, 0], cands[:, 1], cands[:, 2]])
            cands = cands[np.argsort(-strength)[: 4 * max_keypoints]]
        seen: set[tuple[int, int, int]] = set()
        for s, y, x in cands:
            result = _refine_extremum(dog, int(s), int(y), int(x))
            if result is None:
                continue
            xf, yf, sf, response = result
            voxel = (int(round(sf)), int(round(yf)), int(round(xf)))
            if voxel in seen:
                continue
            seen.add(voxel)
            refined.append((response, octave, xf, yf, sf))

    refined.sort(key=lambda t: -t[0])
    kps: list[Keypoint] = []
    locs: list[_OctaveLocation] = []
    for response, octave, xf, yf, sf in refined:
        if max_keypoints and len(kps) >= max_keypoints:
            break
        sigma_oct = INIT_SIGMA * k**sf
        layer = min(max(int(round(sf)), 0), N_INTERVALS + 2)
        gaussians = pyramids[octave]
        for angle in _orientation_peaks(gaussians[layer], xf, yf, sigma_oct):
            kps.append(
                Keypoint(
                    x=xf * (1 << octave),
                    y=yf * (1 << octave),
                    scale=sigma_oct * (1 << octave),
                    orientation=angle,
                    response=response,
                )
            )
            locs.append(_OctaveLocation(octave, layer, xf, yf, sigma_oct))
    if max_keypoints and len(kps) > max_keypoints:
        kps, locs = kps[:max_keypoints], locs[:max_keypoints]
    return kps, locs, pyramids


def detect_keypoints(gray: Raster, max_keypoints: int = 0) -> list[Keypoint]:
    """Detect scale-space keypoints, strongest response first.

    Images smaller than 32 px in either dimension yield an empty list.
    """
    plane = _as_plane(gray)
    if min(plane.shape) < MIN_IMAGE_DIM:
        return []
    kps, _, _ = _detect_internal(plane, max_keypoints)
    return kps


def _locate_in_pyramid(kp: Keypoint, n_octaves: int) -> _OctaveLocation:
    octave = int(np.clip(np.floor(np.log2(max(kp.scale, 1e-9) / INIT_SIGMA)), 0, n_octaves - 1))
    sigma_oct = kp.scale / (1 << octave)
    sf = N_INTERVALS * np.log2(max(sigma_oct, 1e-9) / INIT_SIGMA)
    layer = min(max(int(round(sf)), 0), N_INTERVALS + 2)
    return _OctaveLocation(octave, layer, kp.x / (1 << octave), kp.y / (1 << octave), sigma_oct)


def compute_descriptors(gray: Raster, kps: list[Keypoint]) -> list[Descriptor | None]:
    """Describe keypoints; entries are None where the support window leaves
    the image, keeping indices aligned with ``kps``."""
    plane = _as_plane(gray)
    pyramids = _build_pyramid(plane)
    out: list[Descriptor | None] = []
    for kp in kps:
        loc = _locate_in_pyramid(kp, len(pyramids))
        gimg = pyramids[loc.octave][loc.layer]
        v = _descriptor_vector(gimg, loc.x_oct, loc.y_oct, loc.sigma_oct, kp.orientation)
        out.append(Descriptor(v) if v is not None else None)
    return out


def detect_and_describe(
    gray: Raster, max_keypoints: int = 0
) -> tuple[list[Keypoint], list[Descriptor | None]]:
    """Single-pass detection + description (shares one pyramid build)."""
    plane = _as_plane(gray)
    if min(plane.shape) < MIN_IMAGE_DIM:
        return [], []
    kps, locs, pyramids = _detect_internal(plane, max_keypoints)
    descs: list[Descriptor | None] = []
    for kp, loc in zip(kps, locs):
        gimg = pyramids[loc.octave][loc.layer]
        v = _descriptor_vector(gimg, loc.x_oct, loc.y_oct, loc.sigma_oct, kp.orientation)
        descs.append(Descriptor(v) if v is not None else None)
    return kps, descs


def dump_keypoints(kps: list[Keypoint]) -> str:
    """One record per line, for debugging dumps."""
    lines = [
        f"{kp.x:.3f} {kp.y:.3f} {kp.scale:.3f} {kp.orientation:.5f} {kp.response:.6f}"
        for kp in kps
    ]
    return "\n".join(lines)
