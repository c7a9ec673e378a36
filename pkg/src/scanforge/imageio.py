"""Image file I/O: PNG via Pillow, binary PPM/PGM as a dependency-light fallback.

8-bit files are converted by v/255 on load; saving quantizes with
round(v*255) clamped to [0, 255].
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidParameterError
from .raster import Raster


def _to_u8(img: Raster) -> np.ndarray:
    return np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)


def load_image(path: str | Path) -> Raster:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pgm"):
        return _load_pnm(path)
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode not in ("1", "I;16", "L") else "L")
        a = np.asarray(im, dtype=np.float32) / 255.0
    return Raster(a)


def save_image(img: Raster, path: str | Path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pgm"):
        _save_pnm(img, path)
        return
    u8 = _to_u8(img)
    if img.channels == 1:
        Image.fromarray(u8[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(u8, mode="RGB").save(path)


def _load_pnm(path: Path) -> Raster:
    raw = path.read_bytes()
    # Header: magic, width, height, maxval, separated by whitespace/comments.
    fields: list[bytes] = []
    i = 0
    while len(fields) < 4 and i < len(raw):
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(raw) and not raw[i : i + 1].isspace():
            i += 1
        fields.append(raw[start:i])
    if len(fields) < 4:
        raise InvalidParameterError(f"truncated PNM header in {path}")
    magic = fields[0]
    if magic not in (b"P5", b"P6"):
        raise InvalidParameterError(f"unsupported PNM magic {magic!r} in {path}")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise InvalidParameterError(f"only maxval 255 PNM supported, got {maxval}")
    i += 1  # single whitespace after maxval
    channels = 3 if magic == b"P6" else 1
    count = width * height * channels
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=i)
    a = data.reshape(height, width, channels).astype(np.float32) / 255.0
    return Raster(a)


def _save_pnm(img: Raster, path: Path) -> None:
    u8 = _to_u8(img)
    if img.channels == 1:
        header = f"P5\n{img.width} {img.height}\n255\n".encode()
        path.write_bytes(header + u8[:, :, 0].tobytes())
    else:
        header = f"P6\n{img.width} {img.height}\n255\n".encode()
        path.write_bytes(header + u8.tobytes())
