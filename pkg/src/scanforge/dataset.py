"""Manifest-driven dataset construction and the val/test split.

A manifest lists source images (ground truth plus per-domain scans); the
builders run local alignment per entry and materialize patch stores under
out/{size}/{domain}/{split}/. Splitting assigns whole source images, never
patches.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, StoreFormatError
from .imageio import load_image
from .local_align import LocalAlignConfig, compute_patch_grid, locally_align_pair
from .parallel import parallel_map
from .raster import Raster, center_crop_percent, resize_bicubic
from .store import PatchRecord, PatchStore

UNSCANNED_DOMAIN = "unscanned"
FULL_FRAME_SIZE_KEY = "full"


@dataclass(frozen=True)
class ManifestEntry:
    entry_id: str
    gt_path: str
    scans: dict[str, str] = field(default_factory=dict)  # domain -> path
    role: str = "train"  # train | eval

    def __post_init__(self) -> None:
        if self.role not in ("train", "eval"):
            raise InvalidParameterError(f"role must be train|eval, got {self.role!r}")


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    domains: list[str]
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [e.entry_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InvalidParameterError(f"duplicate manifest ids: {dupes}")

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise StoreFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        entries = [
            ManifestEntry(
                entry_id=e["id"],
                gt_path=e["gt_path"],
                scans=dict(e.get("scans", {})),
                role=e.get("role", "train"),
            )
            for e in obj.get("entries", [])
        ]
        return cls(entries=entries, domains=list(obj.get("domains", [])), config=dict(obj.get("config", {})))

    def save(self, path: str | Path) -> None:
        obj = {
            "domains": self.domains,
            "config": self.config,
            "entries": [
                {"id": e.entry_id, "gt_path": e.gt_path, "scans": e.scans, "role": e.role}
                for e in self.entries
            ],
        }
        Path(path).write_text(json.dumps(obj, indent=1))

    def missing_paths(self) -> list[str]:
        missing = []
        for e in self.entries:
            if not Path(e.gt_path).is_file():
                missing.append(f"{e.entry_id}: gt {e.gt_path}")
            for domain, p in e.scans.items():
                if not Path(p).is_file():
                    missing.append(f"{e.entry_id}: {domain} {p}")
        return missing

    def check_resolvable(self) -> None:
        missing = self.missing_paths()
        if missing:
            raise InvalidParameterError(
                "manifest references missing files:\n  " + "\n  ".join(missing)
            )

    def by_role(self, role: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.role == role]


@dataclass(frozen=True)
class SplitSpec:
    val_fraction: float = 0.40
    test_fraction: float = 0.60
    seed: int = 0

    def __post_init__(self) -> None:
        if abs(self.val_fraction + self.test_fraction - 1.0) > 1e-9:
            raise InvalidParameterError("val and test fractions must sum to 1")

    def assign(self, entry_ids: list[str]) -> dict[str, str]:
        """Whole-image assignment, stable for a given seed and id set."""
        ids = sorted(entry_ids)
        rng = np.random.default_rng(self.seed)
        order = rng.permutation(len(ids))
        n_val = int(round(self.val_fraction * len(ids)))
        val = {ids[i] for i in order[:n_val]}
        return {i: ("val" if i in val else "test") for i in ids}


def set_first_crop(cfg: LocalAlignConfig, r1: float) -> LocalAlignConfig:
    """Override the black-border removal crop (e.g. 0.85 for captures with
    large borders); validation happens in the config constructor."""
    return replace(cfg, first_crop=r1)


def _gt_only_records(entry: ManifestEntry, cfg: LocalAlignConfig) -> list[PatchRecord]:
    """Grid crops of a ground-truth-only source (no scan, no alignment).

    The grid is applied to whatever frame size the source resizes to; counts
    follow the same closed form as aligned pairs.
    """
    img = load_image(entry.gt_path)
    if cfg.first_crop < 1.0:
        img = center_crop_percent(img, cfg.first_crop)
    frame = resize_bicubic(img, cfg.frame_size)
    if cfg.full_frame:
        return [PatchRecord(patch_id=f"{entry.entry_id}_0_0", gt=frame, scan=None)]
    w1 = cfg.window_size
    grid = compute_patch_grid(cfg.frame_size, w1, cfg.stride_px)
    nx = (cfg.frame_width - w1) // cfg.stride_px + 1
    out = []
    half = (w1 - cfg.patch_size) // 2
    for k, (x, y) in enumerate(grid):
        row, col = divmod(k, nx)
        patch = Raster(frame.data[y + half : y + half + cfg.patch_size, x + half : x + half + cfg.patch_size, :])
        out.append(
            PatchRecord(patch_id=f"{entry.entry_id}_{row}_{col}", gt=patch, scan=None, origin=(x, y))
        )
    return out


def _aligned_records(
    entry: ManifestEntry, domain: str, cfg: LocalAlignConfig, drop_flagged: bool
) -> list[PatchRecord]:
    gt = load_image(entry.gt_path)
    scan = load_image(entry.scans[domain])
    pairs = locally_align_pair(gt, scan, cfg)
    if cfg.full_frame:
        nx = 1
    else:
        nx = (cfg.frame_width - cfg.window_size) // cfg.stride_px + 1
    records = []
    for k, pair in enumerate(pairs):
        if drop_flagged and pair.flagged:
            continue
        row, col = divmod(k, nx)
        records.append(PatchRecord.from_pair(f"{entry.entry_id}_{row}_{col}", pair))
    return records


def _store_config(cfg: LocalAlignConfig, manifest: Manifest, extra: dict) -> dict:
    return {
        "local_align": cfg.describe(),
        "sources": {
            e.entry_id: {"gt": e.gt_path, "scans": e.scans} for e in manifest.entries
        },
        **extra,
    }


def _train_task(task, cfg: LocalAlignConfig, drop_flagged: bool):
    entry, domain = task
    if domain is None:
        return (UNSCANNED_DOMAIN, _gt_only_records(entry, cfg))
    return (domain, _aligned_records(entry, domain, cfg, drop_flagged))


def build_training_set(
    manifest: Manifest,
    cfg: LocalAlignConfig,
    out_dir: str | Path,
    drop_flagged: bool = False,
    jobs: int = 1,
) -> dict[tuple[str, str, str], PatchStore]:
    """Locally align every train entry per domain; gt-only entries yield
    unscanned patches on the same grid. Stores land in
    out/{patch_size}/{domain}/train/."""
    from functools import partial

    manifest.check_resolvable()
    out_dir = Path(out_dir)
    size_key = f"{cfg.frame_width}x{cfg.frame_height}" if cfg.full_frame else str(cfg.patch_size)
    entries = manifest.by_role("train")

    tasks: list[tuple[ManifestEntry, str | None]] = []
    for e in entries:
        if e.scans:
            tasks.extend((e, d) for d in sorted(e.scans))
        else:
            tasks.append((e, None))

    results = parallel_map(partial(_train_task, cfg=cfg, drop_flagged=drop_flagged), tasks, jobs)
    grouped: dict[str, list[PatchRecord]] = {}
    for domain, records in results:
        grouped.setdefault(domain, []).extend(records)

    stores = {}
    for domain, records in sorted(grouped.items()):
        store = PatchStore(records=records, config=_store_config(cfg, manifest, {"split": "train"}))
        store.save(out_dir / size_key / domain / "train")
        stores[(size_key, domain, "train")] = store
    return stores


def eval_config_for_size(base: LocalAlignConfig, size: "int | str") -> tuple[str, LocalAlignConfig]:
    if size == FULL_FRAME_SIZE_KEY:
        cfg = replace(base, full_frame=True)
        return f"{cfg.frame_width}x{cfg.frame_height}", cfg
    return str(int(size)), replace(base, patch_size=int(size), full_frame=False)


def _eval_task(task, cfg: LocalAlignConfig, drop_flagged: bool):
    entry, domain = task
    return (entry.entry_id, domain, _aligned_records(entry, domain, cfg, drop_flagged))


def build_eval_sets(
    manifest: Manifest,
    sizes: list,
    base_cfg: LocalAlignConfig,
    split: SplitSpec,
    out_dir: str | Path,
    drop_flagged: bool = False,
    jobs: int = 1,
) -> dict[tuple[str, str, str], PatchStore]:
    """Per requested size, align eval entries per domain and write
    out/{size}/{domain}/{val|test}/ stores (whole-image split)."""
    from functools import partial

    manifest.check_resolvable()
    out_dir = Path(out_dir)
    entries = manifest.by_role("eval")
    assignment = split.assign([e.entry_id for e in entries])

    stores: dict[tuple[str, str, str], PatchStore] = {}
    for size in sizes:
        size_key, cfg = eval_config_for_size(base_cfg, size)
        tasks = [(e, d) for e in entries for d in sorted(e.scans)]
        results = parallel_map(partial(_eval_task, cfg=cfg, drop_flagged=drop_flagged), tasks, jobs)
        grouped: dict[tuple[str, str], list[PatchRecord]] = {}
        for entry_id, domain, records in results:
            grouped.setdefault((domain, assignment[entry_id]), []).extend(records)
        for (domain, part), records in sorted(grouped.items()):
            store = PatchStore(
                records=records,
                config=_store_config(cfg, manifest, {"split": part, "split_seed": split.seed}),
            )
            store.save(out_dir / size_key / domain / part)
            stores[(size_key, domain, part)] = store
    return stores
