"""Quadrilateral detection in edge maps and human-annotation overrides."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..errors import InvalidAnnotationError, InvalidParameterError, NoQuadFoundError, OverrideFormatError
from .canny import EdgeMap

# 8-neighborhood in clockwise screen order (y grows downward): E, SE, S, SW, W, NW, N, NE.
_CW = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))

MIN_QUAD_AREA_FRAC = 0.20
SIMPLIFY_TOL_FRAC = 0.02  # of contour perimeter
_MAX_COMPONENTS = 8


def _order_corners(corners: np.ndarray) -> np.ndarray:
    """Sort corners by angle around the centroid; ascending atan2 in image
    coordinates yields TL, TR, BR, BL for mildly rotated quads."""
    c = corners.mean(axis=0)
    ang = np.arctan2(corners[:, 1] - c[1], corners[:, 0] - c[0])
    return corners[np.argsort(ang)]


def _signed_area(corners: np.ndarray) -> float:
    x, y = corners[:, 0], corners[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass(frozen=True)
class Quad:
    """Convex quadrilateral, corners ordered TL, TR, BR, BL."""

    corners: np.ndarray  # (4, 2) float64, x/y image coordinates

    def __post_init__(self) -> None:
        c = np.asarray(self.corners, dtype=np.float64)
        if c.shape != (4, 2):
            raise InvalidParameterError(f"quad needs 4 corner points, got shape {c.shape}")
        c = _order_corners(c)
        edges = np.roll(c, -1, axis=0) - c
        cross = edges[:, 0] * np.roll(edges[:, 1], -1) - edges[:, 1] * np.roll(edges[:, 0], -1)
        if not np.all(cross > 1e-9):
            raise InvalidParameterError("quad corners are not strictly convex")
        c.flags.writeable = False
        object.__setattr__(self, "corners", c)

    def area(self) -> float:
        return abs(_signed_area(self.corners))


def _trace_boundary(mask: np.ndarray) -> np.ndarray:
    """Moore-neighbor boundary trace of a connected component.

    Returns the closed outer contour as (n, 2) x/y points in visit order.
    """
    ys, xs = np.nonzero(mask)
    start = (int(ys[0]), int(xs[0]))  # uppermost-leftmost
    h, w = mask.shape

    def is_fg(p: tuple[int, int]) -> bool:
        return 0 <= p[0] < h and 0 <= p[1] < w and bool(mask[p])

    contour = [start]
    cur = start
    back = (start[0], start[1] - 1)  # west neighbor is background by scan order
    state0 = (cur, back)
    limit = 4 * int(mask.sum()) + 8
    for _ in range(limit):
        back_idx = _CW.index((back[0] - cur[0], back[1] - cur[1]))
        nxt = None
        last_bg = back
        for k in range(1, 9):
            cand_dir = _CW[(back_idx + k) % 8]
            cand = (cur[0] + cand_dir[0], cur[1] + cand_dir[1])
            if is_fg(cand):
                nxt = cand
                break
            last_bg = cand
        if nxt is None:
            break  # isolated pixel
        cur, back = nxt, last_bg
        if (cur, back) == state0:
            break
        contour.append(cur)
    pts = np.array(contour, dtype=np.float64)
    return pts[:, ::-1]  # (y, x) -> (x, y)


def _point_segment_dist(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        return np.sqrt(((pts - a) ** 2).sum(axis=1))
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.sqrt(((pts - proj) ** 2).sum(axis=1))


def _rdp(pts: np.ndarray, eps: float) -> list[np.ndarray]:
    """Iterative endpoint-fit polyline simplification (keeps both endpoints)."""
    keep = [0, pts.shape[0] - 1]
    stack = [(0, pts.shape[0] - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        seg = pts[i + 1 : j]
        d = _point_segment_dist(seg, pts[i], pts[j])
        k = int(np.argmax(d))
        if d[k] > eps:
            mid = i + 1 + k
            keep.append(mid)
            stack.append((i, mid))
            stack.append((mid, j))
    keep.sort()
    return [pts[i] for i in keep]


def _prune_collinear(vertices: list[np.ndarray], eps: float) -> list[np.ndarray]:
    """Drop vertices closer than eps to the chord of their neighbors (the
    arbitrary RDP start point is usually not a true corner)."""
    verts = list(vertices)
    changed = True
    while changed and len(verts) > 3:
        changed = False
        for i in range(len(verts)):
            prev_v = verts[(i - 1) % len(verts)]
            next_v = verts[(i + 1) % len(verts)]
            d = _point_segment_dist(verts[i][None, :], prev_v, next_v)[0]
            if d <= eps:
                verts.pop(i)
                changed = True
                break
    return verts


def _simplify_closed(contour: np.ndarray, eps: float) -> list[np.ndarray]:
    if contour.shape[0] < 4:
        return [contour[i] for i in range(contour.shape[0])]
    # Split the loop at the point farthest from the start, simplify both arcs.
    d0 = np.sqrt(((contour - contour[0]) ** 2).sum(axis=1))
    split = int(np.argmax(d0))
    first = _rdp(contour[: split + 1], eps)
    second = _rdp(np.vstack([contour[split:], contour[:1]]), eps)
    verts = first[:-1] + second[:-1]
    return _prune_collinear(verts, eps)


def _fit_line(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total least-squares line: (point on line, unit direction)."""
    mean = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - mean, full_matrices=False)
    return mean, vt[0]


def _intersect_lines(p1: np.ndarray, d1: np.ndarray, p2: np.ndarray, d2: np.ndarray):
    a = np.array([[d1[0], -d2[0]], [d1[1], -d2[1]]])
    if abs(np.linalg.det(a)) < 1e-9:
        return None
    t, _ = np.linalg.solve(a, p2 - p1)
    return p1 + t * d1


def _refine_corners(contour: np.ndarray, vertices: list[np.ndarray]) -> np.ndarray | None:
    """Sharpen approximate corners by fitting lines to the four contour arcs
    (corner neighborhoods excluded; edge responses round off at corners) and
    intersecting adjacent lines."""
    n = contour.shape[0]
    corner_idx = sorted(
        int(np.argmin(((contour - v) ** 2).sum(axis=1))) for v in vertices
    )
    lines = []
    for a, b in zip(corner_idx, corner_idx[1:] + [corner_idx[0] + n]):
        span = b - a
        if span < 6:
            return None
        trim = max(2, span // 8)
        idx = np.arange(a + trim, b - trim + 1) % n
        if idx.size < 2:
            return None
        lines.append(_fit_line(contour[idx]))
    corners = []
    for i in range(4):
        p_prev, d_prev = lines[i - 1]
        p_cur, d_cur = lines[i]
        pt = _intersect_lines(p_prev, d_prev, p_cur, d_cur)
        if pt is None:
            return None
        corners.append(pt)
    return np.array(corners)


def find_photo_quad(edges: EdgeMap, min_area_frac: float = MIN_QUAD_AREA_FRAC) -> Quad:
    """Locate the photo outline: the largest closed edge contour that
    simplifies to a convex quadrilateral covering enough of the image.

    Raises NoQuadFound when nothing qualifies; callers then consult the
    human-annotated override file.
    """
    if edges.count() == 0:
        raise NoQuadFoundError("empty edge map")
    labels, n = ndimage.label(edges.edges, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        raise NoQuadFoundError("no edge components")
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
    order = np.argsort(sizes)[::-1][:_MAX_COMPONENTS]
    image_area = float(edges.width * edges.height)
    for comp in order:
        mask = labels == (comp + 1)
        contour = _trace_boundary(mask)
        if contour.shape[0] < 8:
            continue
        perimeter = float(np.sqrt((np.diff(contour, axis=0) ** 2).sum(axis=1)).sum())
        verts = _simplify_closed(contour, SIMPLIFY_TOL_FRAC * perimeter)
        if len(verts) != 4:
            continue
        refined = _refine_corners(contour, verts)
        candidates = [refined, np.array(verts)] if refined is not None else [np.array(verts)]
        for corners in candidates:
            try:
                quad = Quad(corners)
            except InvalidParameterError:
                continue
            if quad.area() >= min_area_frac * image_area:
                return quad
    raise NoQuadFoundError("no component simplified to an acceptable quadrilateral")


def load_quad_override(override_path: str | Path, image_id: str) -> Quad | None:
    """Fetch a human-annotated quad for ``image_id``; None when absent.

    File format: JSON array of {"id": str, "corners": [[x, y] * 4]} records
    in capture-pixel coordinates.
    """
    path = Path(override_path)
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise OverrideFormatError(f"{path}: line {exc.lineno}, col {exc.colno}: {exc.msg}") from exc
    if not isinstance(entries, list):
        raise OverrideFormatError(f"{path}: expected a top-level JSON array")
    for i, record in enumerate(entries):
        if not isinstance(record, dict) or "id" not in record or "corners" not in record:
            raise OverrideFormatError(f"{path}: record {i} must have 'id' and 'corners'")
        if record["id"] != image_id:
            continue
        corners = record["corners"]
        if not isinstance(corners, list) or len(corners) != 4 or any(
            not isinstance(p, list) or len(p) != 2 for p in corners
        ):
            raise OverrideFormatError(
                f"{path}: record {i} (id={record['id']!r}): corners must be 4 [x, y] pairs"
            )
        try:
            return Quad(np.array(corners, dtype=np.float64))
        except InvalidParameterError as exc:
            raise InvalidAnnotationError(
                f"{path}: record {i} (id={record['id']!r}): {exc}"
            ) from exc
    return None
