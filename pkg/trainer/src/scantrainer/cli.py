"""Trainer CLI: `train` on patch stores, `restore` a store with a checkpoint."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import PatchFolder
from .train import TrainConfig, Trainer, TrainingDiverged, load_restorer, restore_store


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scantrainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on scanforge patch stores")
    p.add_argument("--scanned", required=True, help="store dir with gt+scan pairs")
    p.add_argument("--unscanned", default=None, help="store dir with gt-only patches")
    p.add_argument("--out", required=True)
    p.add_argument("--stage", choices=("pretrain", "semi", "both"), default="both")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--base-width", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("restore", help="apply a checkpoint to a store's scans")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--base-width", type=int, default=16)
    return parser


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    if args.command == "train":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        scanned = PatchFolder.load(args.scanned)
        unscanned = PatchFolder.load(args.unscanned) if args.unscanned else None
        cfg = TrainConfig(
            steps=args.steps,
            batch_size=args.batch_size,
            base_width=args.base_width,
            seed=args.seed,
        )
        trainer = Trainer(scanned, unscanned, cfg)
        try:
            if args.stage in ("pretrain", "both"):
                trainer.pretrain()
                trainer.save_checkpoint(out / "pretrain.pt", "pretrain")
            if args.stage in ("semi", "both"):
                trainer.finetune()
                trainer.save_checkpoint(out / "semi.pt", "semi")
        except TrainingDiverged as exc:
            print(f"diverged: {exc}", file=sys.stderr)
            trainer.save_curves(out / "loss_curves.csv")
            return 2
        trainer.save_curves(out / "loss_curves.csv")
        (out / "train_summary.json").write_text(
            json.dumps(
                {
                    "stage": args.stage,
                    "steps": args.steps,
                    "seed": args.seed,
                    "scanned_patches": len(scanned),
                    "unscanned_patches": len(unscanned) if unscanned else 0,
                    "final": trainer.curves[-1] if trainer.curves else None,
                },
                indent=1,
            )
        )
        return 0

    if args.command == "restore":
        model = load_restorer(args.checkpoint, base_width=args.base_width)
        folder = PatchFolder.load(args.store)
        written = restore_store(model, folder, args.out)
        print(f"restored {len(written)} patches to {args.out}", file=sys.stderr)
        return 0
    return 1


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
