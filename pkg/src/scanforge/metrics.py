"""Similarity metrics (PSNR, SSIM, MS-SSIM) and the evaluation protocol.

All metrics treat samples as floating values with data range 1.0 and are
computed on RGB (SSIM-family scores averaged over channels, PSNR over all
samples). Aggregation follows the per-(size, domain) mean plus a three-size
average over 176/256/384 patches.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InvalidParameterError
from .raster import Raster

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
MS_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
THREE_SIZES = ("176", "256", "384")


def _as_planes(img: "Raster | np.ndarray") -> np.ndarray:
    """(H, W, C) float64 view of a Raster or bare array (data range 1.0)."""
    a = img.data if isinstance(img, Raster) else np.asarray(img)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise InvalidParameterError(f"expected an image array, got shape {a.shape}")
    return a.astype(np.float64)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise InvalidParameterError(f"images differ in shape: {a.shape} vs {b.shape}")


def psnr(a: "Raster | np.ndarray", b: "Raster | np.ndarray") -> float:
    """10*log10(1/MSE) over all samples; identical images give +inf."""
    x, y = _as_planes(a), _as_planes(b)
    _check_same_shape(x, y)
    diff = x - y
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian; the 2-D window is its outer product."""
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _windowed_mean(plane: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Valid-region Gaussian-weighted local means via separable correlation."""
    full = correlate1d(correlate1d(plane, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    r = (g.size - 1) // 2
    return full[r:-r, r:-r]


def _ssim_plane(x: np.ndarray, y: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    """Mean SSIM and mean contrast-structure over one channel's valid map."""
    mu_x = _windowed_mean(x, g)
    mu_y = _windowed_mean(y, g)
    mu_xx = _windowed_mean(x * x, g)
    mu_yy = _windowed_mean(y * y, g)
    mu_xy = _windowed_mean(x * y, g)
    var_x = mu_xx - mu_x * mu_x
    var_y = mu_yy - mu_y * mu_y
    cov = mu_xy - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + SSIM_C1) / (mu_x * mu_x + mu_y * mu_y + SSIM_C1)
    cs = (2.0 * cov + SSIM_C2) / (var_x + var_y + SSIM_C2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def ssim(a: "Raster | np.ndarray", b: "Raster | np.ndarray") -> float:
    """Single-scale structural similarity (11x11 Gaussian window, sigma 1.5)."""
    pa, pb = _as_planes(a), _as_planes(b)
    _check_same_shape(pa, pb)
    if min(pa.shape[0], pa.shape[1]) < SSIM_WINDOW:
        raise InvalidParameterError(f"images must be at least {SSIM_WINDOW} px per side")
    g = gaussian_window()
    scores = [_ssim_plane(pa[:, :, c], pb[:, :, c], g)[0] for c in range(pa.shape[2])]
    return float(np.mean(scores))


def _downsample2(plane: np.ndarray) -> np.ndarray:
    """Binomial [1,2,1] low-pass (clamped borders) then 2x2 average pooling."""
    k = np.array([0.25, 0.5, 0.25])
    low = correlate1d(correlate1d(plane, k, axis=0, mode="nearest"), k, axis=1, mode="nearest")
    h, w = low.shape
    low = low[: h - h % 2, : w - w % 2]
    return 0.25 * (low[0::2, 0::2] + low[1::2, 0::2] + low[0::2, 1::2] + low[1::2, 1::2])


def ms_ssim(a: Raster, b: Raster) -> float:
    """Multi-scale structural similarity over up to 5 dyadic scales.

    Contrast-structure terms enter at every scale, luminance only at the
    coarsest; inputs too small for 5 scales use the largest feasible count
    with the exponent weights renormalized to sum 1.
    """
    pa, pb = _as_planes(a), _as_planes(b)
    _check_same_shape(pa, pb)
    if min(pa.shape[0], pa.shape[1]) < SSIM_WINDOW:
        raise InvalidParameterError(f"images must be at least {SSIM_WINDOW} px per side")

    n_scales = 1
    dim = min(pa.shape[0], pa.shape[1])
    while n_scales < len(MS_WEIGHTS) and dim // 2 >= SSIM_WINDOW:
        dim //= 2
        n_scales += 1
    weights = np.array(MS_WEIGHTS[:n_scales])
    weights = weights / weights.sum()

    g = gaussian_window()
    channel_scores = []
    for c_idx in range(pa.shape[2]):
        x = pa[:, :, c_idx]
        y = pb[:, :, c_idx]
        channel_score = 1.0
        for s in range(n_scales):
            ssim_mean, cs_mean = _ssim_plane(x, y, g)
            if s == n_scales - 1:
                term = ssim_mean  # luminance folded in at the coarsest scale
            else:
                term = cs_mean
                x = _downsample2(x)
                y = _downsample2(y)
            # Fractional powers need a nonnegative base.
            channel_score *= max(term, 0.0) ** weights[s]
        channel_scores.append(channel_score)
    return float(np.mean(channel_scores))


@dataclass
class ItemScore:
    item_id: str
    size: str
    domain: str
    psnr: float
    ms_ssim: float


@dataclass
class MetricReport:
    items: list[ItemScore] = field(default_factory=list)
    missing: list[dict] = field(default_factory=list)
    note: str = "metrics computed on RGB; PSNR over all samples, SSIM-family averaged per channel"

    def aggregates(self) -> dict:
        groups: dict[tuple[str, str], list[ItemScore]] = {}
        for item in self.items:
            groups.setdefault((item.size, item.domain), []).append(item)
        out = {}
        for (size, domain), items in sorted(groups.items()):
            out[f"{size}/{domain}"] = {
                "size": size,
                "domain": domain,
                "count": len(items),
                "psnr": float(np.mean([i.psnr for i in items])),
                "ms_ssim": float(np.mean([i.ms_ssim for i in items])),
                "psnr_infinite_count": sum(1 for i in items if math.isinf(i.psnr)),
            }
        return out

    def three_size_average(self) -> dict:
        """Per-domain mean of the per-size aggregates over 176/256/384."""
        agg = self.aggregates()
        domains = sorted({v["domain"] for v in agg.values()})
        out = {}
        for domain in domains:
            rows = [agg.get(f"{size}/{domain}") for size in THREE_SIZES]
            if any(r is None for r in rows):
                continue
            out[domain] = {
                "psnr": float(np.mean([r["psnr"] for r in rows])),
                "ms_ssim": float(np.mean([r["ms_ssim"] for r in rows])),
                "sizes": list(THREE_SIZES),
            }
        return out

    def to_json(self) -> dict:
        return {
            "note": self.note,
            "items": [
                {
                    "id": i.item_id,
                    "size": i.size,
                    "domain": i.domain,
                    "psnr": i.psnr,
                    "ms_ssim": i.ms_ssim,
                    "lpips": None,  # reserved: needs a pretrained perceptual net
                }
                for i in self.items
            ],
            "missing": self.missing,
            "aggregates": self.aggregates(),
            "three_size_average": self.three_size_average(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    def text_table(self) -> str:
        lines = [f"{'size':>8} {'domain':>16} {'n':>5} {'PSNR':>9} {'MS-SSIM':>9}"]
        for row in self.aggregates().values():
            p = "inf" if math.isinf(row["psnr"]) else f"{row['psnr']:.2f}"
            lines.append(
                f"{row['size']:>8} {row['domain']:>16} {row['count']:>5} {p:>9} {row['ms_ssim']:>9.4f}"
            )
        tsa = self.three_size_average()
        for domain, row in tsa.items():
            p = "inf" if math.isinf(row["psnr"]) else f"{row['psnr']:.2f}"
            lines.append(f"{'avg3':>8} {domain:>16} {'':>5} {p:>9} {row['ms_ssim']:>9.4f}")
        if self.missing:
            lines.append(f"missing outputs: {len(self.missing)}")
        return "\n".join(lines)


def evaluate_sets(
    stores: Mapping[tuple[str, str], "object"],
    outputs_dir: str | Path,
) -> MetricReport:
    """Score restored outputs against the ground truth of each patch store.

    ``stores`` maps (size label, domain) to a PatchStore; outputs are looked
    up as outputs_dir/{size}/{domain}/{id}.png. Missing outputs are listed in
    the report and excluded from the means.
    """
    from .imageio import load_image

    outputs_dir = Path(outputs_dir)
    report = MetricReport()
    for (size, domain), store in sorted(stores.items()):
        for rec in store.records:
            pred_path = outputs_dir / str(size) / domain / f"{rec.patch_id}.png"
            if not pred_path.is_file():
                report.missing.append({"id": rec.patch_id, "size": str(size), "domain": domain})
                continue
            pred = load_image(pred_path)
            report.items.append(
                ItemScore(
                    item_id=rec.patch_id,
                    size=str(size),
                    domain=domain,
                    psnr=psnr(pred, rec.gt),
                    ms_ssim=ms_ssim(pred, rec.gt),
                )
            )
    return report
