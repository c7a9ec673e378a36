"""Photo contour detection, perspective rectification, global alignment."""
from .canny import CannyParams, EdgeMap, canny_edges
from .quad import Quad, find_photo_quad, load_quad_override
from .topdown import global_align, rectify_to_topdown

__all__ = [
    "CannyParams",
    "EdgeMap",
    "canny_edges",
    "Quad",
    "find_photo_quad",
    "load_quad_override",
    "global_align",
    "rectify_to_topdown",
]
