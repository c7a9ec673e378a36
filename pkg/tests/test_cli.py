import json
from pathlib import Path

import numpy as np
import pytest

from scanforge.cli import run
from scanforge.imageio import load_image, save_image
from scanforge.raster import Raster
from scanforge.store import PatchStore

from conftest import smooth_warp, textured


def tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != "config_snapshot.json"
    }


def test_unknown_subcommand_exits_1(capsys):
    assert run(["definitely-not-a-command"]) == 1


def test_unknown_flag_exits_1():
    assert run(["info", "--bogus"]) == 1


def test_info_prints_derived_values(capsys):
    assert run(["info"]) == 0
    out = json.loads(capsys.readouterr().out)
    derived = out["derived"]["train_align"]
    assert derived["window_size"] == 269
    assert derived["stride_px"] == 175
    assert derived["overlap"] == pytest.approx(1 - 0.65 / 0.95)
    assert derived["windows_per_image"] == 15


def test_info_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(
        """
seed = 9
[train_align]
frame_width = 432
frame_height = 288
patch_size = 128
"""
    )
    assert run(["info", "--config", str(cfg)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["seed"] == 9
    assert out["derived"]["train_align"]["windows_per_image"] == 8


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[train_align]\nnot_a_key = 1\n")
    assert run(["info", "--config", str(cfg)]) == 1


def test_seed_env_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SCANFORGE_SEED", "77")
    assert run(["info"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 77
    monkeypatch.setenv("SCANFORGE_SEED", "5")
    assert run(["info", "--seed", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 3  # flag wins


@pytest.fixture
def pair_files(tmp_path):
    gt = textured(300, 450, seed=1000, sigma=2.0)
    scan = smooth_warp(gt, 2.0, seed=4)
    gt_path = tmp_path / "gt.png"
    scan_path = tmp_path / "scan.png"
    save_image(gt, gt_path)
    save_image(scan, scan_path)
    cfg = tmp_path / "desk.toml"
    cfg.write_text(
        """
[train_align]
frame_width = 432
frame_height = 288
patch_size = 128
"""
    )
    return gt_path, scan_path, cfg


def test_extract_writes_store_and_snapshot(tmp_path, pair_files):
    gt_path, scan_path, cfg = pair_files
    out = tmp_path / "patches"
    code = run(
        ["extract", "--gt", str(gt_path), "--scan", str(scan_path), "--out", str(out), "--config", str(cfg)]
    )
    assert code == 0
    store = PatchStore.load(out)
    assert len(store) == 8
    assert (out / "config_snapshot.json").is_file()
    snapshot = json.loads((out / "config_snapshot.json").read_text())
    assert snapshot["command"] == "extract"


def test_extract_deterministic_rerun(tmp_path, pair_files):
    gt_path, scan_path, cfg = pair_files
    out1 = tmp_path / "p1"
    out2 = tmp_path / "p2"
    args = ["extract", "--gt", str(gt_path), "--scan", str(scan_path), "--config", str(cfg)]
    assert run(args + ["--out", str(out1)]) == 0
    assert run(args + ["--out", str(out2), "--jobs", "3"]) == 0
    assert tree_bytes(out1) == tree_bytes(out2)


def test_rectify_cli_with_override(tmp_path):
    captures = tmp_path / "caps"
    captures.mkdir()
    # One detectable photo-on-white and one undetectable blank capture.
    photo = textured(150, 225, seed=1100)
    canvas = np.ones((240, 320, 3), dtype=np.float32)
    canvas[45:195, 48:273, :] = photo.data * 0.6
    save_image(Raster(canvas), captures / "ok.png")
    save_image(Raster(np.ones((240, 320, 3), dtype=np.float32)), captures / "blank.png")
    override = tmp_path / "override.json"
    override.write_text(
        json.dumps([{"id": "blank", "corners": [[48, 45], [272, 45], [272, 194], [48, 194]]}])
    )
    out = tmp_path / "rect"
    code = run(
        [
            "rectify",
            "--captures",
            str(captures),
            "--out",
            str(out),
            "--override",
            str(override),
            "--width",
            "225",
            "--height",
            "150",
        ]
    )
    assert code == 0
    audit = json.loads((out / "rectify_audit.json").read_text())
    assert audit["ok"]["status"] == "ok" and audit["ok"]["source"] == "canny"
    assert audit["blank"]["source"] == "override"
    assert (out / "ok.png").is_file() and (out / "blank.png").is_file()


def test_rectify_cli_failure_exit_code(tmp_path):
    captures = tmp_path / "caps"
    captures.mkdir()
    save_image(Raster(np.ones((120, 160, 3), dtype=np.float32)), captures / "blank.png")
    out = tmp_path / "rect"
    assert run(["rectify", "--captures", str(captures), "--out", str(out)]) == 2


def test_align_cli(tmp_path):
    mono = textured(256, 384, seed=1200, sigma=1.5, channels=1)
    ref = Raster(np.repeat(mono.data, 3, axis=2))
    from scanforge.registration import Homography, warp_perspective

    h = Homography(np.array([[1.005, 0.004, 2.0], [-0.003, 0.998, -1.5], [1e-5, -5e-6, 1.0]]))
    scan = warp_perspective(ref, h, ref.size)
    scans = tmp_path / "scans"
    refs = tmp_path / "refs"
    scans.mkdir()
    refs.mkdir()
    save_image(scan, scans / "a.png")
    save_image(ref, refs / "a.png")
    out = tmp_path / "aligned"
    assert run(["align", "--scans", str(scans), "--refs", str(refs), "--out", str(out)]) == 0
    audit = json.loads((out / "align_audit.json").read_text())
    assert audit["a"]["status"] == "ok"
    from scanforge.metrics import psnr

    aligned = load_image(out / "a.png")
    inner = np.s_[20:236, 30:354, :]
    assert psnr(aligned.data[inner], ref.data[inner]) > 28.0


def test_simulate_cli_jobs_determinism(tmp_path, pair_files):
    gt_path, scan_path, cfg = pair_files
    patches = tmp_path / "patches"
    assert run(
        ["extract", "--gt", str(gt_path), "--scan", str(scan_path), "--out", str(patches), "--config", str(cfg)]
    ) == 0
    styles = tmp_path / "styles"
    styles.mkdir()
    for i in range(5):
        save_image(textured(24, 24, seed=1300 + i), styles / f"s{i}.png")
    out1 = tmp_path / "sim1"
    out2 = tmp_path / "sim2"
    base = ["simulate", "--store", str(patches), "--styles-dir", str(styles), "--k", "5"]
    assert run(base + ["--out", str(out1), "--jobs", "1"]) == 0
    assert run(base + ["--out", str(out2), "--jobs", "4"]) == 0
    assert tree_bytes(out1) == tree_bytes(out2)
    store = PatchStore.load(out1)
    assert len(store) == 40  # 8 inputs x k=5


def test_dataset_build_and_metrics_cli(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    entries = []
    for i in range(2):
        gt = textured(300, 450, seed=1400 + i, sigma=2.0)
        save_image(gt, src / f"g{i}.png")
        save_image(smooth_warp(gt, 2.0, seed=i), src / f"s{i}.png")
        entries.append(
            {
                "id": f"e{i}",
                "gt_path": str(src / f"g{i}.png"),
                "scans": {"dom": str(src / f"s{i}.png")},
                "role": "eval",
            }
        )
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"domains": ["dom"], "entries": entries}))
    cfg = tmp_path / "c.toml"
    cfg.write_text(
        """
[eval_align]
frame_width = 288
frame_height = 192
patch_size = 64
"""
    )
    out = tmp_path / "ds"
    code = run(
        [
            "dataset",
            "build",
            "--manifest",
            str(manifest),
            "--out",
            str(out),
            "--mode",
            "eval",
            "--sizes",
            "64",
            "--config",
            str(cfg),
        ]
    )
    assert code == 0
    leaves = sorted(p.parent for p in out.rglob("index.json"))
    assert leaves

    # identical pred: copy gt patches as predictions
    preds = tmp_path / "preds"
    for leaf in leaves:
        store = PatchStore.load(leaf)
        split = leaf.name
        domain = leaf.parent.name
        size = leaf.parent.parent.name
        pdir = preds / size / domain
        pdir.mkdir(parents=True, exist_ok=True)
        for rec in store.records:
            save_image(rec.gt, pdir / f"{rec.patch_id}.png")
    code = run(["metrics", "--store-root", str(out), "--pred", str(preds), "--report", str(tmp_path / "r.json")])
    assert code == 0
    report = json.loads((tmp_path / "r.json").read_text())
    for agg in report["aggregates"].values():
        assert agg["ms_ssim"] == pytest.approx(1.0, abs=1e-9)


def test_metrics_flat_identical_dirs(tmp_path, capsys):
    d = tmp_path / "imgs"
    d.mkdir()
    for i in range(3):
        save_image(textured(32, 32, seed=1500 + i), d / f"i{i}.png")
    assert run(["metrics", "--pred", str(d), "--gt", str(d)]) == 0
    out = capsys.readouterr().out
    assert "1.0000" in out


def test_metrics_missing_pred_exits_2(tmp_path):
    gt = tmp_path / "gt"
    pred = tmp_path / "pred"
    gt.mkdir()
    pred.mkdir()
    save_image(textured(32, 32, seed=1600), gt / "a.png")
    assert run(["metrics", "--pred", str(pred), "--gt", str(gt)]) == 2
