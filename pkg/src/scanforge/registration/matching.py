"""Nearest-neighbor descriptor matching with ratio test and cross-check."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameterError
from .sift import Descriptor


@dataclass(frozen=True)
class Match:
    query_index: int
    train_index: int
    distance: float


def _stack(descs: list[Descriptor | None]) -> tuple[np.ndarray, np.ndarray]:
    """Dense matrix of present descriptors + their original indices."""
    idx = np.array([i for i, d in enumerate(descs) if d is not None], dtype=np.int64)
    if idx.size == 0:
        return np.zeros((0, 0), dtype=np.float64), idx
    mat = np.stack([descs[i].values for i in idx]).astype(np.float64)
    return mat, idx


def match_descriptors(
    a: list[Descriptor | None], b: list[Descriptor | None], ratio: float = 0.75
) -> list[Match]:
    """Mutual nearest-neighbor matches passing the d1/d2 < ratio test.

    Indices in the result refer to positions in the input lists (None
    entries are skipped but keep their index slots).
    """
    if not 0.0 < ratio <= 1.0:
        raise InvalidParameterError(f"ratio must be in (0, 1], got {ratio}")
    mat_a, idx_a = _stack(a)
    mat_b, idx_b = _stack(b)
    if len(idx_a) < 2 or len(idx_b) < 2:
        return []

    # Squared Euclidean distances, clipped against negative round-off.
    d2 = (
        (mat_a**2).sum(axis=1)[:, None]
        + (mat_b**2).sum(axis=1)[None, :]
        - 2.0 * (mat_a @ mat_b.T)
    )
    np.clip(d2, 0.0, None, out=d2)

    nearest_two = np.argpartition(d2, 1, axis=1)[:, :2]
    row = np.arange(d2.shape[0])
    pair = d2[row[:, None], nearest_two]
    swap = pair[:, 0] > pair[:, 1]
    nearest_two[swap] = nearest_two[swap][:, ::-1]
    pair[swap] = pair[swap][:, ::-1]
    d1 = np.sqrt(pair[:, 0])
    d2nd = np.sqrt(pair[:, 1])

    best_for_b = np.argmin(d2, axis=0)  # cross-check direction b -> a

    matches = []
    for i in range(d2.shape[0]):
        j = nearest_two[i, 0]
        if d2nd[i] == 0:
            # Duplicate descriptors in b: the ratio is undefined; skip.
            continue
        if d1[i] / d2nd[i] >= ratio:
            continue
        if best_for_b[j] != i:
            continue
        # Exact distance for the winning pair (the matrix form carries
        # cancellation noise around zero).
        dist = float(np.linalg.norm(mat_a[i] - mat_b[j]))
        matches.append(Match(int(idx_a[i]), int(idx_b[j]), dist))
    return matches


def dump_matches(matches: list[Match]) -> str:
    return "\n".join(f"{m.query_index} {m.train_index} {m.distance:.6f}" for m in matches)
