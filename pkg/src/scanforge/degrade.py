"""Color-balance preprocessing and degradation-domain simulation.

One captured degradation domain is expanded into many simulated ones by
channel-statistics color transfer in a decorrelated (log-LMS opponent)
color space, optionally jittered with mild blur/noise to mimic device
variation. Ground-truth pixels are never touched.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidParameterError
from .raster import Raster

_LOG_EPS = 1e-6

# RGB -> LMS cone response (Ruderman basis).
_RGB_TO_LMS = np.array(
    [
        [0.3811, 0.5783, 0.0402],
        [0.1967, 0.7244, 0.0782],
        [0.0241, 0.1288, 0.8444],
    ]
)
_LMS_TO_RGB = np.linalg.inv(_RGB_TO_LMS)

# Decorrelating opponent axes over log-LMS.
_OPPONENT = np.diag([1.0 / np.sqrt(3.0), 1.0 / np.sqrt(6.0), 1.0 / np.sqrt(2.0)]) @ np.array(
    [[1.0, 1.0, 1.0], [1.0, 1.0, -2.0], [1.0, -1.0, 0.0]]
)
_OPPONENT_INV = np.linalg.inv(_OPPONENT)


def rgb_to_decorrelated(img: Raster) -> np.ndarray:
    """(H, W, 3) opponent-space representation of a 3-channel raster."""
    if img.channels != 3:
        raise InvalidParameterError("color conversion expects a 3-channel raster")
    rgb = img.data.astype(np.float64)
    lms = rgb @ _RGB_TO_LMS.T
    log_lms = np.log10(lms + _LOG_EPS)
    return log_lms @ _OPPONENT.T


def decorrelated_to_rgb(lab: np.ndarray) -> Raster:
    log_lms = lab @ _OPPONENT_INV.T
    lms = np.power(10.0, log_lms) - _LOG_EPS
    rgb = lms @ _LMS_TO_RGB.T
    return Raster(np.clip(rgb, 0.0, 1.0).astype(np.float32))


@dataclass(frozen=True)
class ColorStats:
    """Per-channel mean/std in the decorrelated space (3 + 3 values)."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.mean) != 3 or len(self.std) != 3:
            raise InvalidParameterError("ColorStats needs 3 means and 3 stds")
        if any(s < 0 for s in self.std):
            raise InvalidParameterError("std must be >= 0")

    @classmethod
    def from_image(cls, img: Raster) -> "ColorStats":
        lab = rgb_to_decorrelated(img).reshape(-1, 3)
        return cls(tuple(lab.mean(axis=0)), tuple(lab.std(axis=0)))

    def to_json(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_json(cls, obj: dict) -> "ColorStats":
        return cls(tuple(obj["mean"]), tuple(obj["std"]))


def simplest_color_balance(img: Raster, s_low: float = 0.01, s_high: float = 0.01) -> Raster:
    """Per channel: clip at the s_low / (1 - s_high) quantiles and stretch
    affinely to [0, 1]. Constant channels are left unchanged.

    Quantiles use nearest-rank on the sorted channel.
    """
    if s_low < 0 or s_high < 0 or s_low + s_high >= 1.0:
        raise InvalidParameterError("need s_low, s_high >= 0 and s_low + s_high < 1")
    data = img.data.astype(np.float64)
    n = data.shape[0] * data.shape[1]
    out = np.empty_like(data)
    for c in range(data.shape[2]):
        chan = data[:, :, c]
        flat = np.sort(chan, axis=None)
        lo_idx = min(max(int(np.ceil(s_low * n)) - 1, 0), n - 1)
        hi_idx = min(max(int(np.ceil((1.0 - s_high) * n)) - 1, 0), n - 1)
        lo, hi = flat[lo_idx], flat[hi_idx]
        if hi - lo < 1e-12:
            out[:, :, c] = chan
            continue
        out[:, :, c] = (chan - lo) / (hi - lo)
    return Raster(np.clip(out, 0.0, 1.0).astype(np.float32))


def transfer_color_style(content: Raster, style: ColorStats) -> Raster:
    """Match the content's decorrelated channel statistics to the style's.

    Channels with vanishing content deviation get the mean shift only.
    """
    lab = rgb_to_decorrelated(content)
    flat = lab.reshape(-1, 3)
    mean_c = flat.mean(axis=0)
    std_c = flat.std(axis=0)
    mean_s = np.asarray(style.mean)
    std_s = np.asarray(style.std)
    gain = np.where(std_c < 1e-6, 1.0, std_s / np.where(std_c < 1e-6, 1.0, std_c))
    mapped = (lab - mean_c) * gain + mean_s
    return decorrelated_to_rgb(mapped)


@dataclass(frozen=True)
class StyleJitter:
    """Optional low-level device-variation extras; both off by default."""

    blur_sigma: float = 0.0  # <= 1 recommended
    noise_sigma: float = 0.0  # <= 0.01 recommended


@dataclass(frozen=True)
class StyleLibrary:
    """Ordered, deterministically indexable collection of color styles."""

    names: tuple[str, ...]
    stats: tuple[ColorStats, ...]

    def __post_init__(self) -> None:
        if len(self.stats) < 1:
            raise InvalidParameterError("style library must hold at least one style")
        if len(self.names) != len(self.stats):
            raise InvalidParameterError("names and stats must align")

    def __len__(self) -> int:
        return len(self.stats)

    def __getitem__(self, i: int) -> ColorStats:
        return self.stats[i]

    @classmethod
    def from_images(cls, named_images: list[tuple[str, Raster]]) -> "StyleLibrary":
        names = tuple(n for n, _ in named_images)
        stats = tuple(ColorStats.from_image(img) for _, img in named_images)
        return cls(names, stats)

    @classmethod
    def from_dir(cls, directory: str | Path) -> "StyleLibrary":
        from .imageio import load_image

        paths = sorted(
            p for p in Path(directory).iterdir() if p.suffix.lower() in (".png", ".ppm", ".pgm")
        )
        if not paths:
            raise InvalidParameterError(f"no style images found in {directory}")
        return cls.from_images([(p.stem, load_image(p)) for p in paths])

    @classmethod
    def from_json(cls, path: str | Path) -> "StyleLibrary":
        obj = json.loads(Path(path).read_text())
        names = tuple(e["name"] for e in obj)
        stats = tuple(ColorStats.from_json(e) for e in obj)
        return cls(names, stats)

    def to_json(self, path: str | Path) -> None:
        obj = [{"name": n, **s.to_json()} for n, s in zip(self.names, self.stats)]
        Path(path).write_text(json.dumps(obj, indent=1))


def derive_seed(global_seed: int, *parts: object) -> int:
    """Stable per-item seed from hashing (seed, identifying parts); keeps
    parallel execution order out of the results."""
    digest = hashlib.sha256(
        ("\x1f".join([str(global_seed), *map(str, parts)])).encode()
    ).digest()
    return int.from_bytes(digest[:8], "little")


def apply_style(scan: Raster, style: ColorStats, jitter: StyleJitter, seed: int) -> Raster:
    out = transfer_color_style(scan, style)
    if jitter.blur_sigma > 0:
        blurred = np.stack(
            [gaussian_filter(out.data[:, :, c].astype(np.float64), jitter.blur_sigma, mode="nearest")
             for c in range(out.channels)],
            axis=-1,
        )
        out = Raster(np.clip(blurred, 0.0, 1.0).astype(np.float32))
    if jitter.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noisy = out.data.astype(np.float64) + rng.normal(0.0, jitter.noise_sigma, out.data.shape)
        out = Raster(np.clip(noisy, 0.0, 1.0).astype(np.float32))
    return out


def _simulate_task(task, styles: StyleLibrary, jitter: StyleJitter, seed: int):
    rec, style_idx = task
    if rec.scan is None:
        raise InvalidParameterError(f"record {rec.patch_id} has no scan patch to restyle")
    item_seed = derive_seed(seed, rec.patch_id, style_idx)
    styled = apply_style(rec.scan, styles[style_idx], jitter, item_seed)
    return replace(rec, patch_id=f"{rec.patch_id}_s{style_idx:03d}", scan=styled)


def simulate_domains(store, styles: StyleLibrary, k: int, seed: int = 0,
                     jitter: StyleJitter = StyleJitter(), jobs: int = 1):
    """Expand a patch store across the first ``k`` styles of the library.

    Every input pair yields k output pairs: the scan patch restyled, the
    ground truth byte-identical. Output order is (pair, style), so the count
    is k * len(store) and results are bit-reproducible for a given seed
    regardless of worker count.
    """
    from functools import partial

    from .parallel import parallel_map
    from .store import PatchStore

    if k < 1 or k > len(styles):
        raise InvalidParameterError(f"k must be in [1, {len(styles)}], got {k}")

    tasks = [(rec, style_idx) for rec in store.records for style_idx in range(k)]
    job = partial(_simulate_task, styles=styles, jitter=jitter, seed=seed)
    records = parallel_map(job, tasks, jobs)
    config = dict(store.config)
    config["simulated_styles"] = {"k": k, "seed": seed,
                                  "names": list(styles.names[:k]),
                                  "blur_sigma": jitter.blur_sigma,
                                  "noise_sigma": jitter.noise_sigma}
    return PatchStore(records=list(records), config=config)


def augment_pair(pair, seed: int):
    """One random (flip_h, flip_v, rotation) draw applied to both patches."""
    from .raster import flip_rotate
    from .store import PatchRecord

    rng = np.random.default_rng(seed)
    flip_h = bool(rng.integers(0, 2))
    flip_v = bool(rng.integers(0, 2))
    rot = int(rng.integers(0, 4)) * 90
    gt = flip_rotate(pair.gt, flip_h, flip_v, rot)
    scan = flip_rotate(pair.scan, flip_h, flip_v, rot) if pair.scan is not None else None
    return replace(pair, gt=gt, scan=scan)
