"""Robust homography estimation: 4-point minimal samples + consensus."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AlignmentFailedError, DegenerateInputError, InvalidParameterError
from .homography import Homography, estimate_homography_dlt
from .matching import Match
from .sift import Keypoint


@dataclass(frozen=True)
class RansacParams:
    reproj_threshold: float = 3.0
    max_iterations: int = 2000
    confidence: float = 0.995
    min_inliers: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.reproj_threshold <= 0:
            raise InvalidParameterError("reproj_threshold must be > 0")
        if not 0.0 < self.confidence < 1.0:
            raise InvalidParameterError("confidence must be in (0, 1)")
        if self.min_inliers < 4:
            raise InvalidParameterError("min_inliers must be >= 4")
        if self.max_iterations < 1:
            raise InvalidParameterError("max_iterations must be >= 1")


def _any_three_collinear(pts: np.ndarray, tol: float = 1e-6) -> bool:
    for i in range(4):
        sub = np.delete(pts, i, axis=0)
        area = abs(
            (sub[1, 0] - sub[0, 0]) * (sub[2, 1] - sub[0, 1])
            - (sub[2, 0] - sub[0, 0]) * (sub[1, 1] - sub[0, 1])
        )
        if area < tol:
            return True
    return False


def _reprojection_errors(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    m = h.apply_matrix()
    ph = np.hstack([src, np.ones((src.shape[0], 1))]) @ m.T
    denom = ph[:, 2]
    bad = np.abs(denom) <= 1e-12
    denom = np.where(bad, 1.0, denom)
    proj = ph[:, :2] / denom[:, None]
    err = np.sqrt(((proj - dst) ** 2).sum(axis=1))
    err[bad] = np.inf
    return err


def ransac_homography(
    matches: list[Match],
    kps_a: list[Keypoint],
    kps_b: list[Keypoint],
    params: RansacParams = RansacParams(),
) -> tuple[Homography, np.ndarray]:
    """Estimate the homography mapping kps_a points onto kps_b points.

    Returns the refit-on-inliers homography and a boolean inlier mask over
    ``matches``. Raises AlignmentFailedError when consensus stays below
    ``params.min_inliers`` (callers decide how to fall back).
    """
    n = len(matches)
    if n < max(4, params.min_inliers):
        raise AlignmentFailedError(f"{n} matches, need at least {max(4, params.min_inliers)}")

    src = np.array([[kps_a[m.query_index].x, kps_a[m.query_index].y] for m in matches])
    dst = np.array([[kps_b[m.train_index].x, kps_b[m.train_index].y] for m in matches])

    rng = np.random.default_rng(params.seed)
    best_count = 0
    best_err = np.inf
    best_mask: np.ndarray | None = None
    needed = params.max_iterations

    it = 0
    while it < min(needed, params.max_iterations):
        it += 1
        sample = rng.choice(n, size=4, replace=False)
        s_pts = src[sample]
        if _any_three_collinear(s_pts):
            continue
        try:
            h, _ = estimate_homography_dlt(list(zip(map(tuple, s_pts), map(tuple, dst[sample]))))
        except DegenerateInputError:
            continue
        err = _reprojection_errors(h, src, dst)
        mask = err < params.reproj_threshold
        count = int(mask.sum())
        mean_err = float(err[mask].mean()) if count else np.inf
        if count > best_count or (count == best_count and mean_err < best_err):
            best_count = count
            best_err = mean_err
            best_mask = mask
            if count > 4:
                w = count / n
                denom = np.log1p(-min(w**4, 1.0 - 1e-12))
                needed = int(np.ceil(np.log1p(-params.confidence) / denom)) if denom < 0 else 1

    if best_mask is None or best_count < params.min_inliers:
        raise AlignmentFailedError(
            f"best consensus {best_count} below min_inliers {params.min_inliers}"
        )

    inlier_pairs = [
        (tuple(src[i]), tuple(dst[i])) for i in np.flatnonzero(best_mask)
    ]
    h_final, _ = estimate_homography_dlt(inlier_pairs)
    final_mask = _reprojection_errors(h_final, src, dst) < params.reproj_threshold
    if int(final_mask.sum()) < params.min_inliers:
        raise AlignmentFailedError("refit lost consensus below min_inliers")
    return h_final, final_mask
