"""Feature detection, matching, homography estimation, and warping."""
from .homography import Homography, apply_homography, estimate_homography_dlt
from .matching import Match, match_descriptors
from .ransac import RansacParams, ransac_homography
from .sift import Descriptor, Keypoint, compute_descriptors, detect_keypoints
from .warp import warp_perspective

__all__ = [
    "Homography",
    "apply_homography",
    "estimate_homography_dlt",
    "Match",
    "match_descriptors",
    "RansacParams",
    "ransac_homography",
    "Descriptor",
    "Keypoint",
    "compute_descriptors",
    "detect_keypoints",
    "warp_perspective",
]
