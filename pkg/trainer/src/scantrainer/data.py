"""Reading scanforge patch stores (index.json + PNG pairs) as tensors.

This is the trainer's only coupling to the data pipeline: the on-disk store
format. Records with a scan file become supervised pairs; ground-truth-only
records feed the unsupervised branch.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

INDEX_NAME = "index.json"


class StoreFormatError(RuntimeError):
    pass


def _load_png(path: Path) -> torch.Tensor:
    with Image.open(path) as im:
        if im.mode != "RGB":
            im = im.convert("RGB")
        a = np.asarray(im, dtype=np.float32) / 255.0
    return torch.from_numpy(a).permute(2, 0, 1)  # (3, H, W)


@dataclass
class PatchFolder:
    """All patches of one store, loaded eagerly (stores are toy-sized here)."""

    ids: list[str]
    gt: torch.Tensor  # (N, 3, H, W)
    scan: torch.Tensor | None  # aligned with gt, or None for gt-only stores

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def load(cls, directory: str | Path) -> "PatchFolder":
        directory = Path(directory)
        index_path = directory / INDEX_NAME
        if not index_path.is_file():
            raise StoreFormatError(f"no {INDEX_NAME} in {directory}")
        try:
            index = json.loads(index_path.read_text())
        except json.JSONDecodeError as exc:
            raise StoreFormatError(f"{index_path}: {exc}") from exc
        records = index.get("records", [])
        ids = []
        gts = []
        scans = []
        has_scan = None
        for rec in records:
            ids.append(rec["id"])
            gts.append(_load_png(directory / rec["gt_file"]))
            rec_has_scan = bool(rec.get("scan_file"))
            if has_scan is None:
                has_scan = rec_has_scan
            elif has_scan != rec_has_scan:
                raise StoreFormatError(f"{index_path}: mixed scan/gt-only records")
            if rec_has_scan:
                scans.append(_load_png(directory / rec["scan_file"]))
        if not ids:
            return cls(ids=[], gt=torch.zeros(0, 3, 1, 1), scan=None)
        gt = torch.stack(gts)
        scan = torch.stack(scans) if has_scan else None
        return cls(ids=ids, gt=gt, scan=scan)


class BatchSampler:
    """Seeded with-replacement batches; order depends only on the seed."""

    def __init__(self, n_items: int, batch_size: int, seed: int = 0):
        if n_items < 1:
            raise ValueError("cannot sample from an empty store")
        self.n = n_items
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)

    def next_indices(self) -> np.ndarray:
        return self.rng.integers(0, self.n, size=self.batch_size)
