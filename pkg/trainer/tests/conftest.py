from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image


def _save_png(arr: np.ndarray, path: Path) -> None:
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path)


def write_store(directory: Path, n: int, side: int = 32, seed: int = 0, with_scan: bool = True) -> None:
    """Materialize a patch store in the pipeline's on-disk format."""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        gt = rng.random((side, side, 3))
        gt_file = f"p{i}_gt.png"
        _save_png(gt, directory / gt_file)
        scan_file = None
        if with_scan:
            scan = np.clip(gt * 0.7 + 0.1 + rng.normal(0, 0.05, gt.shape), 0, 1)
            scan_file = f"p{i}_scan.png"
            _save_png(scan, directory / scan_file)
        records.append(
            {
                "id": f"p{i}",
                "gt_file": gt_file,
                "scan_file": scan_file,
                "origin": [0, 0],
                "homography": [1, 0, 0, 0, 1, 0, 0, 0, 1] if with_scan else None,
                "inlier_count": 20 if with_scan else 0,
                "flagged": False,
            }
        )
    (directory / "index.json").write_text(json.dumps({"config": {}, "records": records}))


@pytest.fixture
def scanned_store(tmp_path):
    d = tmp_path / "scanned"
    write_store(d, n=8, seed=1, with_scan=True)
    return d


@pytest.fixture
def unscanned_store(tmp_path):
    d = tmp_path / "unscanned"
    write_store(d, n=6, seed=2, with_scan=False)
    return d


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def fd_gradient(fn, tensor: torch.Tensor, index: tuple, h: float = 1e-6) -> float:
    """Central finite difference of fn() w.r.t. tensor[index]."""
    with torch.no_grad():
        orig = tensor[index].item()
        tensor[index] = orig + h
        plus = float(fn())
        tensor[index] = orig - h
        minus = float(fn())
        tensor[index] = orig
    return (plus - minus) / (2 * h)
