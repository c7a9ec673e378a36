"""3x3 projective transforms and normalized-DLT estimation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import DegenerateInputError, InvalidParameterError, NumericDomainError

_SIGN_EPS = 1e-12


def _canonicalize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64).reshape(3, 3)
    norm = float(np.linalg.norm(m))
    if not np.isfinite(norm) or norm < _SIGN_EPS:
        raise InvalidParameterError("homography matrix is zero or non-finite")
    m = m / norm
    if m[2, 2] < -_SIGN_EPS:
        m = -m
    elif abs(m[2, 2]) <= _SIGN_EPS:
        flat = m.ravel()
        nz = np.flatnonzero(np.abs(flat) > _SIGN_EPS)
        if nz.size and flat[nz[0]] < 0:
            m = -m
    return m


@dataclass(frozen=True)
class Homography:
    """Invertible 3x3 projective map, canonically scaled.

    Canonical form: unit Frobenius norm and m[2][2] >= 0, so equal transforms
    compare equal elementwise.
    """

    m: np.ndarray

    def __post_init__(self) -> None:
        m = _canonicalize(self.m)
        if abs(np.linalg.det(m)) <= 1e-12:
            raise InvalidParameterError("homography is singular")
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> "Homography":
        v = np.asarray(list(values), dtype=np.float64)
        if v.shape != (9,):
            raise InvalidParameterError(f"expected 9 values, got {v.shape}")
        return cls(v.reshape(3, 3))

    def to_flat(self) -> list[float]:
        return [float(x) for x in self.m.ravel()]

    def to_text(self) -> str:
        return " ".join(repr(x) for x in self.to_flat())

    @classmethod
    def from_text(cls, text: str) -> "Homography":
        return cls.from_flat([float(tok) for tok in text.split()])

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def compose(self, other: "Homography") -> "Homography":
        """self after other: (self . other)(p) = self(other(p))."""
        return Homography(self.m @ other.m)

    def apply_matrix(self) -> np.ndarray:
        """Matrix rescaled for application: m[2][2] = 1 where possible, so
        affine maps act exactly (identity sends (x, y) to (x, y) bit-for-bit)."""
        if abs(self.m[2, 2]) > 1e-6:
            return self.m / self.m[2, 2]
        return self.m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (N, 2) array of points through the homography."""
        m = self.apply_matrix()
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        ones = np.ones((pts.shape[0], 1))
        ph = np.hstack([pts, ones]) @ m.T
        denom = ph[:, 2]
        if np.any(np.abs(denom) <= 1e-12):
            raise NumericDomainError("point maps to infinity under homography")
        return ph[:, :2] / denom[:, None]

    def is_close(self, other: "Homography", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.m, other.m, atol=atol))


def apply_homography(h: Homography, p: tuple[float, float]) -> tuple[float, float]:
    """Projective action on a single point."""
    out = h.apply(np.array([p], dtype=np.float64))
    return float(out[0, 0]), float(out[0, 1])


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley normalization: centroid at origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    scale = np.sqrt(2.0) / d if d > 1e-12 else 1.0
    t = np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    ones = np.ones((pts.shape[0], 1))
    normed = (np.hstack([pts, ones]) @ t.T)[:, :2]
    return normed, t


def estimate_homography_dlt(
    pairs: Iterable[tuple[tuple[float, float], tuple[float, float]]],
) -> tuple[Homography, float]:
    """Normalized direct linear transform from >= 4 point correspondences.

    Returns the canonical homography mapping source points onto destination
    points together with the mean reprojection error over the inputs.
    """
    pair_list = list(pairs)
    if len(pair_list) < 4:
        raise InvalidParameterError(f"need at least 4 correspondences, got {len(pair_list)}")
    src = np.asarray([p[0] for p in pair_list], dtype=np.float64)
    dst = np.asarray([p[1] for p in pair_list], dtype=np.float64)

    src_n, t_src = _normalize_points(src)
    dst_n, t_dst = _normalize_points(dst)

    n = src_n.shape[0]
    a = np.zeros((2 * n, 9), dtype=np.float64)
    x, y = src_n[:, 0], src_n[:, 1]
    u, v = dst_n[:, 0], dst_n[:, 1]
    a[0::2, 0] = -x
    a[0::2, 1] = -y
    a[0::2, 2] = -1.0
    a[0::2, 6] = x * u
    a[0::2, 7] = y * u
    a[0::2, 8] = u
    a[1::2, 3] = -x
    a[1::2, 4] = -y
    a[1::2, 5] = -1.0
    a[1::2, 6] = x * v
    a[1::2, 7] = y * v
    a[1::2, 8] = v

    _, s, vt = np.linalg.svd(a)
    rank = int(np.sum(s > s[0] * 1e-9)) if s.size else 0
    if rank < 8:
        raise DegenerateInputError(f"correspondence system has rank {rank} < 8")
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_n @ t_src
    try:
        hom = Homography(h)
    except InvalidParameterError as exc:
        raise DegenerateInputError(str(exc)) from exc

    projected = hom.apply(src)
    err = float(np.sqrt(((projected - dst) ** 2).sum(axis=1)).mean())
    return hom, err
