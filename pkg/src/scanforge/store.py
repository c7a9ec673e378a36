"""On-disk patch stores: PNG patches plus a provenance index.

Layout: one directory per store holding {id}_gt.png, {id}_scan.png and a
single index.json recording config, per-patch homography, inlier count and
fallback flags. The index is written last via atomic rename, so a partially
failed build never leaves a readable store behind.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import StoreFormatError
from .imageio import load_image, save_image
from .local_align import PatchPair
from .raster import Raster
from .registration import Homography

INDEX_NAME = "index.json"


@dataclass(frozen=True)
class PatchRecord:
    """One stored patch pair; ``scan`` is None for ground-truth-only sources."""

    patch_id: str
    gt: Raster
    scan: Raster | None
    origin: tuple[int, int] = (0, 0)
    h: Homography | None = None
    inlier_count: int = 0
    flagged: bool = False

    @classmethod
    def from_pair(cls, patch_id: str, pair: PatchPair) -> "PatchRecord":
        return cls(
            patch_id=patch_id,
            gt=pair.gt_patch,
            scan=pair.scan_patch,
            origin=pair.window_origin,
            h=pair.h,
            inlier_count=pair.inlier_count,
            flagged=pair.flagged,
        )


@dataclass
class PatchStore:
    records: list[PatchRecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.patch_id for r in self.records]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        index_records = []
        for rec in self.records:
            gt_file = f"{rec.patch_id}_gt.png"
            save_image(rec.gt, directory / gt_file)
            scan_file = None
            if rec.scan is not None:
                scan_file = f"{rec.patch_id}_scan.png"
                save_image(rec.scan, directory / scan_file)
            index_records.append(
                {
                    "id": rec.patch_id,
                    "gt_file": gt_file,
                    "scan_file": scan_file,
                    "origin": list(rec.origin),
                    "homography": rec.h.to_flat() if rec.h is not None else None,
                    "inlier_count": rec.inlier_count,
                    "flagged": rec.flagged,
                }
            )
        index = {"config": self.config, "records": index_records}
        tmp = directory / (INDEX_NAME + ".tmp")
        tmp.write_text(json.dumps(index, indent=1))
        os.replace(tmp, directory / INDEX_NAME)

    @classmethod
    def load(cls, directory: str | Path) -> "PatchStore":
        directory = Path(directory)
        index_path = directory / INDEX_NAME
        if not index_path.is_file():
            raise StoreFormatError(f"no {INDEX_NAME} in {directory}")
        try:
            index = json.loads(index_path.read_text())
        except json.JSONDecodeError as exc:
            raise StoreFormatError(f"{index_path}: line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(index, dict) or "records" not in index:
            raise StoreFormatError(f"{index_path}: missing 'records'")
        records = []
        for i, rec in enumerate(index["records"]):
            try:
                patch_id = rec["id"]
                gt_path = directory / rec["gt_file"]
                if not gt_path.is_file():
                    raise StoreFormatError(
                        f"{index_path}: record {patch_id!r} references missing file {rec['gt_file']}"
                    )
                scan = None
                if rec.get("scan_file"):
                    scan_path = directory / rec["scan_file"]
                    if not scan_path.is_file():
                        raise StoreFormatError(
                            f"{index_path}: record {patch_id!r} references missing file {rec['scan_file']}"
                        )
                    scan = load_image(scan_path)
                records.append(
                    PatchRecord(
                        patch_id=patch_id,
                        gt=load_image(gt_path),
                        scan=scan,
                        origin=tuple(rec.get("origin", (0, 0))),
                        h=Homography.from_flat(rec["homography"]) if rec.get("homography") else None,
                        inlier_count=int(rec.get("inlier_count", 0)),
                        flagged=bool(rec.get("flagged", False)),
                    )
                )
            except StoreFormatError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise StoreFormatError(f"{index_path}: record {i}: {exc!r}") from exc
        return cls(records=records, config=index.get("config", {}))

    def extend_from_pairs(self, base_id: str, pairs: list[PatchPair], grid_columns: int) -> None:
        """Append pairs named {base}_{row}_{col} following grid order."""
        for k, pair in enumerate(pairs):
            row, col = divmod(k, grid_columns) if grid_columns > 0 else (0, k)
            self.records.append(PatchRecord.from_pair(f"{base_id}_{row}_{col}", pair))
