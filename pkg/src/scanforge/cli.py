"""Command-line pipeline: rectify, align, extract, simulate, dataset, metrics, info."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig, load_config
from .dataset import Manifest, SplitSpec, build_eval_sets, build_training_set, set_first_crop
from .degrade import StyleJitter, StyleLibrary, simulate_domains
from .errors import (
    AlignmentFailedError,
    InvalidParameterError,
    NoQuadFoundError,
    ScanForgeError,
)
from .imageio import load_image, save_image
from .local_align import locally_align_pair
from .metrics import ItemScore, MetricReport, evaluate_sets, ms_ssim, psnr
from .raster import Size, to_grayscale
from .rectify import canny_edges, find_photo_quad, global_align, load_quad_override, rectify_to_topdown
from .store import PatchStore

log = logging.getLogger("scanforge")

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


def _image_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _write_snapshot(out_dir: Path, command: str, argv: list[str], cfg: PipelineConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "command": command,
        "argv": argv,
        "seed": cfg.seed,
        "version": __version__,
        "config": cfg.to_dict(),
    }
    (out_dir / "config_snapshot.json").write_text(json.dumps(snapshot, indent=1))


def _write_log_json(path: str | None, payload: dict) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=1))


def cmd_info(args, cfg: PipelineConfig, argv) -> int:
    print(json.dumps(cfg.to_dict(), indent=1))
    return EXIT_OK


def cmd_rectify(args, cfg: PipelineConfig, argv) -> int:
    captures = Path(args.captures)
    out_dir = Path(args.out)
    _write_snapshot(out_dir, "rectify", argv, cfg)
    out_size = Size(args.width or cfg.rectify.width, args.height or cfg.rectify.height)
    audit: dict[str, dict] = {}
    failures = []
    for path in _image_files(captures):
        image_id = path.stem
        img = load_image(path)
        quad = None
        source = "canny"
        try:
            quad = find_photo_quad(canny_edges(to_grayscale(img), cfg.canny))
        except NoQuadFoundError:
            if args.override:
                quad = load_quad_override(args.override, image_id)
                source = "override"
        if quad is None:
            log.warning("%s: no contour found and no override entry", image_id)
            failures.append(image_id)
            audit[image_id] = {"status": "failed"}
            continue
        rectified = rectify_to_topdown(img, quad, out_size)
        save_image(rectified, out_dir / f"{image_id}.png")
        from .rectify.topdown import quad_to_rect_homography

        audit[image_id] = {
            "status": "ok",
            "source": source,
            "quad": [list(map(float, c)) for c in quad.corners],
            "homography": quad_to_rect_homography(quad, out_size).to_flat(),
        }
        log.info("%s: rectified via %s", image_id, source)
    (out_dir / "rectify_audit.json").write_text(json.dumps(audit, indent=1))
    _write_log_json(args.log_json, {"rectified": len(audit) - len(failures), "failed": failures})
    return EXIT_FAILURE if failures else EXIT_OK


def cmd_align(args, cfg: PipelineConfig, argv) -> int:
    scans = Path(args.scans)
    refs = Path(args.refs)
    out_dir = Path(args.out)
    _write_snapshot(out_dir, "align", argv, cfg)
    audit: dict[str, dict] = {}
    failures = []
    for scan_path in _image_files(scans):
        ref_path = refs / scan_path.name
        if not ref_path.is_file():
            log.warning("%s: no reference image", scan_path.name)
            failures.append(scan_path.stem)
            continue
        try:
            warped, h = global_align(load_image(scan_path), load_image(ref_path), cfg.ransac)
        except (AlignmentFailedError, InvalidParameterError) as exc:
            log.warning("%s: alignment failed: %s", scan_path.stem, exc)
            failures.append(scan_path.stem)
            audit[scan_path.stem] = {"status": "failed", "reason": str(exc)}
            continue
        save_image(warped, out_dir / scan_path.name)
        audit[scan_path.stem] = {"status": "ok", "homography": h.to_flat()}
        log.info("%s: aligned", scan_path.stem)
    (out_dir / "align_audit.json").write_text(json.dumps(audit, indent=1))
    _write_log_json(args.log_json, {"aligned": len(audit) - len(failures), "failed": failures})
    return EXIT_FAILURE if failures else EXIT_OK


def _extract_config(args, cfg: PipelineConfig):
    from .dataset import eval_config_for_size

    if args.mode == "train":
        base = cfg.train_align
        if args.size:
            _, base = eval_config_for_size(base, args.size)
        return base
    base = cfg.eval_align
    _, base = eval_config_for_size(base, args.size or cfg.eval_align.patch_size)
    return base


def cmd_extract(args, cfg: PipelineConfig, argv) -> int:
    out_dir = Path(args.out)
    _write_snapshot(out_dir, "extract", argv, cfg)
    la_cfg = _extract_config(args, cfg)
    gt = load_image(args.gt)
    scan = load_image(args.scan)
    pairs = locally_align_pair(gt, scan, la_cfg)
    base_id = args.id or Path(args.gt).stem
    store = PatchStore(config={"local_align": la_cfg.describe()})
    nx = 1 if la_cfg.full_frame else (la_cfg.frame_width - la_cfg.window_size) // la_cfg.stride_px + 1
    kept = [p for p in pairs if not (args.drop_flagged and p.flagged)]
    store.extend_from_pairs(base_id, kept, nx)
    store.save(out_dir)
    flagged = sum(p.flagged for p in pairs)
    log.info("%s: %d pairs (%d flagged)", base_id, len(pairs), flagged)
    _write_log_json(args.log_json, {"pairs": len(kept), "flagged": flagged})
    return EXIT_OK


def cmd_simulate(args, cfg: PipelineConfig, argv) -> int:
    out_dir = Path(args.out)
    _write_snapshot(out_dir, "simulate", argv, cfg)
    if args.styles_dir:
        styles = StyleLibrary.from_dir(args.styles_dir)
    elif args.styles_json:
        styles = StyleLibrary.from_json(args.styles_json)
    else:
        raise InvalidParameterError("simulate needs --styles-dir or --styles-json")
    store = PatchStore.load(args.store)
    k = args.k or cfg.style.k
    jitter = StyleJitter(blur_sigma=cfg.style.blur_sigma, noise_sigma=cfg.style.noise_sigma)
    simulated = simulate_domains(store, styles, k, seed=cfg.seed, jitter=jitter, jobs=cfg.resolved_jobs())
    simulated.save(out_dir)
    log.info("simulated %d pairs (k=%d x %d inputs)", len(simulated), k, len(store))
    _write_log_json(args.log_json, {"inputs": len(store), "k": k, "outputs": len(simulated)})
    return EXIT_OK


def cmd_dataset(args, cfg: PipelineConfig, argv) -> int:
    if args.dataset_cmd != "build":
        raise InvalidParameterError(f"unknown dataset subcommand {args.dataset_cmd!r}")
    out_dir = Path(args.out)
    _write_snapshot(out_dir, "dataset build", argv, cfg)
    manifest = Manifest.load(args.manifest)
    jobs = cfg.resolved_jobs()
    if args.mode == "train":
        la_cfg = cfg.train_align
        if args.r1 is not None:
            la_cfg = set_first_crop(la_cfg, args.r1)
        stores = build_training_set(manifest, la_cfg, out_dir, drop_flagged=args.drop_flagged, jobs=jobs)
    else:
        la_cfg = cfg.eval_align
        if args.r1 is not None:
            la_cfg = set_first_crop(la_cfg, args.r1)
        sizes = [s for s in (args.sizes.split(",") if args.sizes else cfg.eval_sizes)]
        sizes = [s if s == "full" else int(s) for s in sizes]
        stores = build_eval_sets(
            manifest,
            sizes,
            la_cfg,
            SplitSpec(seed=cfg.seed),
            out_dir,
            drop_flagged=args.drop_flagged,
            jobs=jobs,
        )
    summary = {f"{k[0]}/{k[1]}/{k[2]}": len(v) for k, v in stores.items()}
    for key, count in summary.items():
        log.info("%s: %d patches", key, count)
    _write_log_json(args.log_json, {"stores": summary})
    return EXIT_OK


def _flat_metrics(gt_dir: Path, pred_dir: Path) -> MetricReport:
    report = MetricReport()
    for gt_path in _image_files(gt_dir):
        pred_path = pred_dir / gt_path.name
        if not pred_path.is_file():
            report.missing.append({"id": gt_path.stem, "size": "?", "domain": "all"})
            continue
        gt = load_image(gt_path)
        pred = load_image(pred_path)
        size = str(gt.width) if gt.width == gt.height else f"{gt.width}x{gt.height}"
        report.items.append(
            ItemScore(
                item_id=gt_path.stem,
                size=size,
                domain="all",
                psnr=psnr(pred, gt),
                ms_ssim=ms_ssim(pred, gt),
            )
        )
    return report


def _store_metrics(store_root: Path, pred_root: Path) -> MetricReport:
    stores = {}
    for index in sorted(store_root.glob("*/*/*/index.json")):
        leaf = index.parent
        size, domain = leaf.parent.parent.name, leaf.parent.name
        stores[(size, domain)] = PatchStore.load(leaf)
    if not stores:
        raise InvalidParameterError(f"no patch stores under {store_root}")
    return evaluate_sets(stores, pred_root)


def cmd_metrics(args, cfg: PipelineConfig, argv) -> int:
    if args.store_root:
        report = _store_metrics(Path(args.store_root), Path(args.pred))
    else:
        if not args.gt:
            raise InvalidParameterError("metrics needs --gt (or --store-root)")
        report = _flat_metrics(Path(args.gt), Path(args.pred))
    print(report.text_table())
    if args.report:
        report.save(args.report)
    _write_log_json(args.log_json, report.to_json())
    return EXIT_FAILURE if report.missing else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanforge",
        description="Photo-scan dataset machinery: rectification, alignment, simulation, metrics.",
    )
    parser.add_argument("--version", action="version", version=f"scanforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--jobs", type=int, default=None, help="worker parallelism (0 = cores)")
        p.add_argument("--log-json", default=None, help="write a machine-readable summary here")

    p = sub.add_parser("rectify", help="detect photo contours and warp to top-down view")
    p.add_argument("--captures", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--override", help="JSON quad override file for failed detections")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    common(p)

    p = sub.add_parser("align", help="globally align scans to references by filename")
    p.add_argument("--scans", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--out", required=True)
    common(p)

    p = sub.add_parser("extract", help="locally align one gt/scan pair into patches")
    p.add_argument("--gt", required=True)
    p.add_argument("--scan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("train", "eval"), default="train")
    p.add_argument("--size", default=None, help="patch size override (int or 'full')")
    p.add_argument("--id", default=None, help="base id for patch names")
    p.add_argument("--drop-flagged", action="store_true")
    common(p)

    p = sub.add_parser("simulate", help="expand a patch store across color styles")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--styles-dir")
    p.add_argument("--styles-json")
    p.add_argument("--k", type=int, default=None)
    common(p)

    p = sub.add_parser("dataset", help="manifest-driven dataset builds")
    p.add_argument("dataset_cmd", choices=("build",))
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("train", "eval"), default="train")
    p.add_argument("--r1", type=float, default=None, help="first center-crop fraction override")
    p.add_argument("--sizes", default=None, help="comma list for eval mode (e.g. 176,256,full)")
    p.add_argument("--drop-flagged", action="store_true")
    common(p)

    p = sub.add_parser("metrics", help="score restored outputs against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", help="flat directory of ground-truth images")
    p.add_argument("--store-root", help="root of dataset-build output (size/domain/split)")
    p.add_argument("--report", help="write the JSON report here")
    common(p)

    p = sub.add_parser("info", help="print the resolved configuration")
    common(p)

    return parser


_COMMANDS = {
    "rectify": cmd_rectify,
    "align": cmd_align,
    "extract": cmd_extract,
    "simulate": cmd_simulate,
    "dataset": cmd_dataset,
    "metrics": cmd_metrics,
    "info": cmd_info,
}


def run(argv: list[str] | None = None) -> int:
    """Dispatch a CLI invocation; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; fold into our codes.
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.jobs is not None:
            overrides["jobs"] = args.jobs
        cfg = load_config(args.config, overrides)
        return _COMMANDS[args.command](args, cfg, argv)
    except InvalidParameterError as exc:
        log.error("invalid parameters: %s", exc)
        return EXIT_USAGE
    except ScanForgeError as exc:
        log.error("processing failed: %s", exc)
        return EXIT_FAILURE
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return EXIT_FAILURE


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
