"""Sliding-window local alignment of globally aligned scan/ground-truth pairs.

A grid of windows is slid over both frames; per window, a local homography
(estimated on color-balanced copies, applied to the originals) removes the
residual misalignment that survives whole-image alignment. The ground truth
is never warped. The final patches are exact center crops of the aligned
windows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degrade import derive_seed, simplest_color_balance
from .errors import AlignmentFailedError, InvalidParameterError
from .raster import Raster, Size, center_crop_percent, center_crop_to, resize_bicubic, round_half_up, to_grayscale
from .registration import Homography, RansacParams, match_descriptors, ransac_homography, warp_perspective
from .registration.sift import detect_and_describe


def overlap_fraction(stride_frac: float, second_crop: float) -> float:
    """Overlap between consecutive final patches: 1 - stride/crop fractions."""
    if not 0.0 < stride_frac <= second_crop <= 1.0:
        raise InvalidParameterError(
            f"need 0 < stride ({stride_frac}) <= second crop ({second_crop}) <= 1"
        )
    return 1.0 - stride_frac / second_crop


@dataclass(frozen=True)
class LocalAlignConfig:
    """Sliding-window geometry plus estimation knobs.

    The window side is derived from the patch side so that cropping the
    aligned window by the second-crop fraction lands exactly on the patch
    size; this removes the rounding ambiguity of specifying the window first.
    """

    frame_width: int = 1080
    frame_height: int = 720
    first_crop: float = 0.95
    second_crop: float = 0.95
    patch_size: int = 256
    stride_frac: float = 0.65
    full_frame: bool = False  # first crop + resize only; one frame-sized pair
    balance_low: float = 0.01
    balance_high: float = 0.01
    min_inliers: int = 8
    reproj_threshold: float = 3.0
    match_ratio: float = 0.75
    max_keypoints: int = 250
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.first_crop <= 1.0:
            raise InvalidParameterError(f"first crop fraction must be in (0, 1], got {self.first_crop}")
        if not 0.0 < self.second_crop <= 1.0:
            raise InvalidParameterError(f"second crop fraction must be in (0, 1], got {self.second_crop}")
        overlap_fraction(self.stride_frac, self.second_crop)  # validates the pair
        if self.frame_width < 1 or self.frame_height < 1:
            raise InvalidParameterError("frame size must be positive")
        if self.full_frame:
            return
        if self.patch_size < 1:
            raise InvalidParameterError("patch size must be positive")
        if round_half_up(self.window_size * self.second_crop) != self.patch_size:
            raise InvalidParameterError(
                f"window {self.window_size} cropped by {self.second_crop} does not round "
                f"back to patch size {self.patch_size}"
            )
        if self.window_size > min(self.frame_width, self.frame_height):
            raise InvalidParameterError(
                f"window {self.window_size} exceeds frame {self.frame_width}x{self.frame_height}"
            )

    @property
    def frame_size(self) -> Size:
        return Size(self.frame_width, self.frame_height)

    @property
    def window_size(self) -> int:
        return round_half_up(self.patch_size / self.second_crop)

    @property
    def stride_px(self) -> int:
        return max(1, round_half_up(self.stride_frac * self.window_size))

    @property
    def overlap(self) -> float:
        return overlap_fraction(self.stride_frac, self.second_crop)

    def grid_count(self) -> int:
        if self.full_frame:
            return 1
        return len(compute_patch_grid(self.frame_size, self.window_size, self.stride_px))

    def describe(self) -> dict:
        d = {
            "frame": [self.frame_width, self.frame_height],
            "first_crop": self.first_crop,
            "second_crop": self.second_crop,
            "stride_frac": self.stride_frac,
            "full_frame": self.full_frame,
        }
        if not self.full_frame:
            d.update(
                patch_size=self.patch_size,
                window_size=self.window_size,
                stride_px=self.stride_px,
                overlap=self.overlap,
                windows_per_image=self.grid_count(),
            )
        return d


@dataclass(frozen=True)
class PatchPair:
    """A ground-truth patch with its locally aligned scanned counterpart."""

    gt_patch: Raster
    scan_patch: Raster
    window_origin: tuple[int, int]
    h: Homography
    inlier_count: int
    flagged: bool  # alignment fell back to identity

    def __post_init__(self) -> None:
        if self.gt_patch.size != self.scan_patch.size:
            raise InvalidParameterError("patch pair sides disagree in size")
        if self.flagged and not self.h.is_close(Homography.identity(), 1e-12):
            raise InvalidParameterError("flagged pairs must carry the identity homography")


def compute_patch_grid(frame: Size, w1: int, stride_px: int) -> list[tuple[int, int]]:
    """Window origins (x, y), row-major, windows fully inside the frame."""
    if stride_px < 1:
        raise InvalidParameterError("stride must be >= 1 px")
    if w1 > frame.width or w1 > frame.height:
        raise InvalidParameterError(f"window {w1} exceeds frame {frame.width}x{frame.height}")
    nx = (frame.width - w1) // stride_px + 1
    ny = (frame.height - w1) // stride_px + 1
    return [(i * stride_px, j * stride_px) for j in range(ny) for i in range(nx)]


def prepare_frames(
    gt: Raster, scan: Raster, cfg: LocalAlignConfig
) -> tuple[Raster, Raster, Raster, Raster]:
    """First center crop + bicubic resize to the working frame, plus
    color-balanced copies used only for feature matching."""
    if gt.size != scan.size:
        raise InvalidParameterError(
            f"expected globally aligned inputs of equal size, got {gt.size} vs {scan.size}"
        )
    frames = []
    for img in (gt, scan):
        if cfg.first_crop < 1.0:
            img = center_crop_percent(img, cfg.first_crop)
        frames.append(resize_bicubic(img, cfg.frame_size))
    gt_frame, scan_frame = frames
    gt_balanced = simplest_color_balance(gt_frame, cfg.balance_low, cfg.balance_high)
    scan_balanced = simplest_color_balance(scan_frame, cfg.balance_low, cfg.balance_high)
    return gt_frame, scan_frame, gt_balanced, scan_balanced


def align_patch(
    gt_window: Raster,
    scan_window: Raster,
    gt_balanced_window: Raster,
    scan_balanced_window: Raster,
    cfg: LocalAlignConfig,
    origin: tuple[int, int] = (0, 0),
) -> PatchPair:
    """Align one scan window onto its ground-truth window.

    Failure is not an error: the pair comes back flagged with the identity
    homography and the unwarped crop, and the dataset builder decides
    whether to keep it.
    """
    w2 = cfg.patch_size
    target = Size(w2, w2)
    h = Homography.identity()
    inliers = 0
    flagged = True
    warped = scan_window
    try:
        kps_s, desc_s = detect_and_describe(to_grayscale(scan_balanced_window), cfg.max_keypoints)
        kps_g, desc_g = detect_and_describe(to_grayscale(gt_balanced_window), cfg.max_keypoints)
        matches = match_descriptors(desc_s, desc_g, cfg.match_ratio)
        params = RansacParams(
            reproj_threshold=cfg.reproj_threshold,
            min_inliers=cfg.min_inliers,
            seed=derive_seed(cfg.seed, "patch", origin[0], origin[1]),
        )
        h, mask = ransac_homography(matches, kps_s, kps_g, params)
        warped = warp_perspective(scan_window, h, scan_window.size)
        inliers = int(mask.sum())
        flagged = False
    except AlignmentFailedError:
        h = Homography.identity()
        warped = scan_window
        inliers = 0
        flagged = True
    return PatchPair(
        gt_patch=center_crop_to(gt_window, target),
        scan_patch=center_crop_to(warped, target),
        window_origin=origin,
        h=h,
        inlier_count=inliers,
        flagged=flagged,
    )


def locally_align_pair(gt: Raster, scan: Raster, cfg: LocalAlignConfig) -> list[PatchPair]:
    """Full sliding-window pipeline for one image pair, in grid order.

    Serial by design: callers parallelize across image pairs, where the work
    items are big enough to be worth a process each.
    """
    gt_frame, scan_frame, gt_bal, scan_bal = prepare_frames(gt, scan, cfg)
    if cfg.full_frame:
        return [
            PatchPair(
                gt_patch=gt_frame,
                scan_patch=scan_frame,
                window_origin=(0, 0),
                h=Homography.identity(),
                inlier_count=0,
                flagged=False,
            )
        ]
    w1 = cfg.window_size
    grid = compute_patch_grid(cfg.frame_size, w1, cfg.stride_px)
    pairs = []
    for origin in grid:
        x, y = origin
        sl = np.s_[y : y + w1, x : x + w1, :]
        pairs.append(
            align_patch(
                Raster(gt_frame.data[sl]),
                Raster(scan_frame.data[sl]),
                Raster(gt_bal.data[sl]),
                Raster(scan_bal.data[sl]),
                cfg,
                origin,
            )
        )
    return pairs
