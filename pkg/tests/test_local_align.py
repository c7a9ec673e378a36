import numpy as np
import pytest

from scanforge.errors import InvalidParameterError
from scanforge.local_align import (
    LocalAlignConfig,
    align_patch,
    compute_patch_grid,
    locally_align_pair,
    overlap_fraction,
    prepare_frames,
)
from scanforge.metrics import psnr
from scanforge.raster import Raster, Size, constant
from scanforge.registration import Homography

from conftest import smooth_warp, textured

TRAIN = LocalAlignConfig()  # 1080x720, W2=256, crops 0.95/0.95, stride 0.65
EVAL_BASE = dict(frame_width=1072, frame_height=720, second_crop=0.80, stride_frac=0.50)

DESK = LocalAlignConfig(
    frame_width=432, frame_height=288, patch_size=128, second_crop=0.95, stride_frac=0.65
)


# --- geometry: the paper's patch-count ledger --------------------------------


def test_training_grid_is_15():
    grid = compute_patch_grid(TRAIN.frame_size, TRAIN.window_size, TRAIN.stride_px)
    assert len(grid) == 15  # x 800 images = 12,000 pairs


@pytest.mark.parametrize(
    "patch,expected",
    [(176, 40), (256, 15), (384, 6), (576, 1)],
)
def test_eval_grids(patch, expected):
    cfg = LocalAlignConfig(patch_size=patch, **EVAL_BASE)
    assert cfg.grid_count() == expected


def test_full_frame_grid_is_1():
    cfg = LocalAlignConfig(full_frame=True, **EVAL_BASE)
    assert cfg.grid_count() == 1


def test_grid_count_closed_form():
    cfg = LocalAlignConfig(patch_size=176, **EVAL_BASE)
    w1, s = cfg.window_size, cfg.stride_px
    nx = (1072 - w1) // s + 1
    ny = (720 - w1) // s + 1
    assert cfg.grid_count() == nx * ny == 40


def test_grid_single_window_when_exact_fit():
    grid = compute_patch_grid(Size(100, 100), 100, 37)
    assert grid == [(0, 0)]


def test_grid_row_major_order():
    grid = compute_patch_grid(Size(30, 20), 10, 10)
    assert grid == [(0, 0), (10, 0), (20, 0), (0, 10), (10, 10), (20, 10)]


def test_grid_rejects_oversize_window():
    with pytest.raises(InvalidParameterError):
        compute_patch_grid(Size(50, 50), 60, 10)


# --- overlap ------------------------------------------------------------------


def test_overlap_training_value():
    assert overlap_fraction(0.65, 0.95) == pytest.approx(0.3157894736842105, abs=5e-5)


def test_overlap_eval_value():
    assert overlap_fraction(0.50, 0.80) == pytest.approx(0.375, abs=5e-5)


def test_overlap_zero_when_stride_equals_crop():
    assert overlap_fraction(0.8, 0.8) == 0.0


def test_overlap_rejects_negative():
    with pytest.raises(InvalidParameterError):
        overlap_fraction(0.9, 0.8)


# --- config derivation ---------------------------------------------------------


def test_window_derivation_roundtrip():
    # round(W1 * R2) must land back on W2 for every paper configuration.
    for cfg in [
        TRAIN,
        LocalAlignConfig(patch_size=176, **EVAL_BASE),
        LocalAlignConfig(patch_size=256, **EVAL_BASE),
        LocalAlignConfig(patch_size=384, **EVAL_BASE),
        LocalAlignConfig(patch_size=576, **EVAL_BASE),
    ]:
        assert round(cfg.window_size * cfg.second_crop) == cfg.patch_size


def test_config_rejects_bad_fractions():
    with pytest.raises(InvalidParameterError):
        LocalAlignConfig(first_crop=0.0)
    with pytest.raises(InvalidParameterError):
        LocalAlignConfig(stride_frac=0.96, second_crop=0.95)


def test_config_rejects_window_larger_than_frame():
    with pytest.raises(InvalidParameterError):
        LocalAlignConfig(frame_width=200, frame_height=200, patch_size=256)


# --- prepare_frames -------------------------------------------------------------


def test_prepare_frames_identical_inputs():
    img = textured(150, 225, seed=30)
    gt_f, scan_f, gt_b, scan_b = prepare_frames(img, img, DESK)
    assert np.array_equal(gt_f.data, scan_f.data)
    assert np.array_equal(gt_b.data, scan_b.data)
    assert gt_f.size == DESK.frame_size


def test_prepare_frames_two_stage_arithmetic():
    cfg = LocalAlignConfig(
        frame_width=1080, frame_height=720, first_crop=0.95, patch_size=256
    )
    img = textured(720, 1080, seed=31)
    gt_f, _, _, _ = prepare_frames(img, img, cfg)
    # 1026x684 crop then upsize back to 1080x720
    assert gt_f.size == Size(1080, 720)


def test_prepare_frames_no_crop_when_r1_is_1():
    from scanforge.raster import resize_bicubic

    cfg = LocalAlignConfig(
        frame_width=216, frame_height=144, first_crop=1.0, patch_size=64,
        second_crop=0.95, stride_frac=0.65,
    )
    img = textured(150, 225, seed=32)
    gt_f, _, _, _ = prepare_frames(img, img, cfg)
    assert np.array_equal(gt_f.data, resize_bicubic(img, cfg.frame_size).data)


def test_prepare_frames_size_mismatch():
    with pytest.raises(InvalidParameterError):
        prepare_frames(textured(100, 100), textured(100, 101), DESK)


# --- align_patch -----------------------------------------------------------------


def _window_pair(seed, shift=None):
    w1 = DESK.window_size
    mono = textured(w1 + 20, w1 + 20, seed=seed, sigma=1.5, channels=1)
    big = Raster(np.repeat(mono.data, 3, axis=2))
    gt_w = Raster(big.data[10 : 10 + w1, 10 : 10 + w1, :])
    if shift is None:
        scan_w = gt_w
    else:
        dx, dy = shift
        scan_w = Raster(big.data[10 - dy : 10 - dy + w1, 10 - dx : 10 - dx + w1, :])
    return gt_w, scan_w


def test_align_patch_self():
    gt_w, scan_w = _window_pair(40)
    pair = align_patch(gt_w, scan_w, gt_w, scan_w, DESK)
    assert not pair.flagged
    assert pair.gt_patch.size == Size(128, 128)
    assert psnr(pair.gt_patch, pair.scan_patch) > 45.0


def test_align_patch_planted_shift():
    gt_w, scan_w = _window_pair(41, shift=(3, 2))
    pair = align_patch(gt_w, scan_w, gt_w, scan_w, DESK)
    assert not pair.flagged
    # Content moved by (+3, +2), so the scan->gt map translates by (-3, -2).
    m = pair.h.apply_matrix()
    assert m[0, 2] == pytest.approx(-3.0, abs=0.5)
    assert m[1, 2] == pytest.approx(-2.0, abs=0.5)
    unaligned = psnr(
        pair.gt_patch,
        Raster(scan_w.data[3 : 3 + 128, 3 : 3 + 128, :]),
    )
    assert psnr(pair.gt_patch, pair.scan_patch) > unaligned + 5.0


def test_align_patch_constant_flagged():
    w1 = DESK.window_size
    flat = constant(w1, w1, 0.5)
    pair = align_patch(flat, flat, flat, flat, DESK)
    assert pair.flagged
    assert pair.inlier_count == 0
    assert pair.h.is_close(Homography.identity(), 1e-12)
    # fallback keeps the unwarped crop bit-exactly
    assert np.array_equal(pair.scan_patch.data, pair.gt_patch.data)


# --- locally_align_pair ------------------------------------------------------------


def test_locally_align_pair_counts_and_types():
    img = textured(300, 450, seed=42)
    pairs = locally_align_pair(img, img, DESK)
    assert len(pairs) == DESK.grid_count() == 8
    for p in pairs:
        assert p.gt_patch.size == Size(128, 128)
        assert not p.flagged


def test_locally_align_gt_never_warped():
    gt = textured(300, 450, seed=43)
    scan = smooth_warp(gt, 3.0, seed=1)
    pairs = locally_align_pair(gt, scan, DESK)
    gt_frame, _, _, _ = prepare_frames(gt, scan, DESK)
    w1, w2 = DESK.window_size, DESK.patch_size
    half = (w1 - w2) // 2
    for pair in pairs:
        x, y = pair.window_origin
        direct = gt_frame.data[y + half : y + half + w2, x + half : x + half + w2, :]
        assert np.array_equal(pair.gt_patch.data, direct)


@pytest.mark.parametrize(
    "cfg",
    [
        DESK,
        TRAIN,
        LocalAlignConfig(patch_size=176, **EVAL_BASE),
        LocalAlignConfig(patch_size=256, **EVAL_BASE),
    ],
)
def test_locally_align_overlap_identity(cfg):
    # Consecutive windows sit stride_px apart with the same crop offset, so
    # final patches share W2 - stride_px columns = round(overlap * W2) +- 1.
    shared = cfg.patch_size - cfg.stride_px
    expected = round(cfg.overlap * cfg.patch_size)
    assert abs(shared - expected) <= 1


def test_locally_align_determinism():
    gt = textured(300, 450, seed=44)
    scan = smooth_warp(gt, 2.0, seed=2)
    a = locally_align_pair(gt, scan, DESK)
    b = locally_align_pair(gt, scan, DESK)
    assert len(a) == len(b)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.scan_patch.data, pb.scan_patch.data)
        assert np.array_equal(pa.gt_patch.data, pb.gt_patch.data)
        assert pa.h.is_close(pb.h, 1e-15)
        assert pa.inlier_count == pb.inlier_count


def test_locally_align_full_frame_mode():
    cfg = LocalAlignConfig(
        frame_width=268, frame_height=180, full_frame=True, second_crop=0.8, stride_frac=0.5
    )
    gt = textured(190, 280, seed=45)
    scan = textured(190, 280, seed=46)
    pairs = locally_align_pair(gt, scan, cfg)
    assert len(pairs) == 1
    assert pairs[0].gt_patch.size == Size(268, 180)
    assert pairs[0].h.is_close(Homography.identity(), 1e-12)
    assert not pairs[0].flagged


def test_local_alignment_beats_global_only():
    # Smooth spatially-varying misalignment: per-window homographies must
    # recover most of the PSNR lost to the distortion.
    gains = []
    for i in range(3):
        gt = textured(300, 450, seed=100 + i, sigma=2.0)
        scan = smooth_warp(gt, 4.0, seed=i)
        aligned = locally_align_pair(gt, scan, DESK)
        gt_frame, scan_frame, _, _ = prepare_frames(gt, scan, DESK)
        w1, w2 = DESK.window_size, DESK.patch_size
        half = (w1 - w2) // 2
        psnr_aligned = []
        psnr_global = []
        for pair in aligned:
            x, y = pair.window_origin
            sl = np.s_[y + half : y + half + w2, x + half : x + half + w2, :]
            psnr_aligned.append(psnr(pair.gt_patch, pair.scan_patch))
            psnr_global.append(psnr(gt_frame.data[sl], scan_frame.data[sl]))
        gains.append(np.mean(psnr_aligned) - np.mean(psnr_global))
    assert np.mean(gains) >= 2.0
