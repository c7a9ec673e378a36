"""Top-down rectification and whole-image feature alignment."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidParameterError
from ..raster import Raster, Size, to_grayscale
from ..registration import (
    Homography,
    RansacParams,
    estimate_homography_dlt,
    match_descriptors,
    ransac_homography,
    warp_perspective,
)
from ..registration.sift import detect_and_describe
from .quad import Quad

MIN_ALIGN_DIM = 64
DEFAULT_MATCH_RATIO = 0.75


def quad_to_rect_homography(q: Quad, out: Size) -> Homography:
    """Map quad corners onto the output rectangle's corner pixel centers."""
    dst = np.array(
        [[0.0, 0.0], [out.width - 1.0, 0.0], [out.width - 1.0, out.height - 1.0], [0.0, out.height - 1.0]]
    )
    pairs = list(zip(map(tuple, q.corners), map(tuple, dst)))
    h, _ = estimate_homography_dlt(pairs)
    return h


def rectify_to_topdown(img: Raster, q: Quad, out: Size) -> Raster:
    """Warp the quad region to a top-down view of the requested size."""
    return warp_perspective(img, quad_to_rect_homography(q, out), out)


def global_align(
    scan: Raster,
    reference: Raster,
    ransac: RansacParams = RansacParams(),
    ratio: float = DEFAULT_MATCH_RATIO,
    max_keypoints: int = 2000,
) -> tuple[Raster, Homography]:
    """Align a rectified scan to its reference via feature matching.

    Features are computed on luminance; the returned homography maps scan
    coordinates into the reference frame and is kept for audit.
    AlignmentFailedError propagates when consensus is too small.
    """
    for name, img in (("scan", scan), ("reference", reference)):
        if min(img.width, img.height) < MIN_ALIGN_DIM:
            raise InvalidParameterError(f"{name} must be at least {MIN_ALIGN_DIM} px per side")
    kps_s, desc_s = detect_and_describe(to_grayscale(scan), max_keypoints)
    kps_r, desc_r = detect_and_describe(to_grayscale(reference), max_keypoints)
    matches = match_descriptors(desc_s, desc_r, ratio)
    h, _ = ransac_homography(matches, kps_s, kps_r, ransac)
    warped = warp_perspective(scan, h, reference.size)
    return warped, h
