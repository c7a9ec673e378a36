import numpy as np
import pytest

from scanforge.errors import InvalidParameterError
from scanforge.raster import (
    Raster,
    Size,
    center_crop_percent,
    center_crop_to,
    constant,
    crop_to_aspect,
    flip_rotate,
    orient_landscape,
    resize_bicubic,
    to_grayscale,
)

from conftest import textured


def test_center_crop_percent_identity():
    img = textured(720, 1080, seed=1)
    out = center_crop_percent(img, 1.0)
    assert out.size == img.size
    assert np.array_equal(out.data, img.data)


def test_center_crop_percent_95():
    img = textured(720, 1080, seed=2)
    out = center_crop_percent(img, 0.95)
    # round(1080*0.95), round(720*0.95) by hand
    assert out.size == Size(1026, 684)


def test_center_crop_percent_constant():
    out = center_crop_percent(constant(100, 100, 0.5), 0.5)
    assert out.size == Size(50, 50)
    assert np.all(out.data == np.float32(0.5))


@pytest.mark.parametrize("p", [0.0, -0.1, 1.0001])
def test_center_crop_percent_rejects_bad_fraction(p):
    with pytest.raises(InvalidParameterError):
        center_crop_percent(constant(10, 10), p)


def test_center_crop_to_offsets():
    img = textured(270, 270, seed=3)
    out = center_crop_to(img, Size(256, 256))
    # floor((270-256)/2) = 7 on both axes
    assert np.array_equal(out.data, img.data[7:263, 7:263, :])


def test_center_crop_to_odd_remainder_biases_right_bottom():
    img = textured(11, 11, seed=4)
    out = center_crop_to(img, Size(10, 10))
    assert np.array_equal(out.data, img.data[0:10, 0:10, :])


def test_center_crop_to_identity_and_error():
    img = textured(10, 10, seed=5)
    assert np.array_equal(center_crop_to(img, Size(10, 10)).data, img.data)
    with pytest.raises(InvalidParameterError):
        center_crop_to(img, Size(11, 11))


@pytest.mark.parametrize(
    "w,h,expected",
    [
        (1500, 1000, Size(1500, 1000)),  # already 15:10
        (2000, 1000, Size(1500, 1000)),  # min over both fit directions
        (1000, 1000, Size(1000, 666)),  # floor(1000*10/15)
    ],
)
def test_crop_to_aspect(w, h, expected):
    out = crop_to_aspect(constant(w, h, 0.2), 15, 10)
    assert out.size == expected


def test_resize_bicubic_identity():
    img = textured(48, 64, seed=6)
    out = resize_bicubic(img, img.size)
    assert np.abs(out.data - img.data).max() <= 1e-6


def test_resize_bicubic_constant():
    img = constant(33, 17, 0.437)
    for size in (Size(64, 64), Size(5, 9), Size(33, 17)):
        out = resize_bicubic(img, size)
        assert np.abs(out.data - np.float32(0.437)).max() <= 1e-6


def test_resize_bicubic_ramp_monotone():
    ramp = Raster(np.tile(np.linspace(0, 1, 4, dtype=np.float32)[None, :, None], (4, 1, 3)))
    up = resize_bicubic(ramp, Size(8, 4))
    diffs = np.diff(up.data[:, :, 0], axis=1)
    assert np.all(diffs >= -1e-12)


def test_orient_landscape():
    assert orient_landscape(constant(720, 1080)).size == Size(1080, 720)
    img = textured(720, 1080, seed=7)
    assert orient_landscape(img) is img
    square = textured(500, 500, seed=8)
    assert orient_landscape(square) is square


def test_orient_landscape_rotates_clockwise():
    # A marker in the bottom-left of a portrait image lands top-left after
    # the clockwise quarter turn.
    a = np.zeros((4, 2, 1), dtype=np.float32)
    a[3, 0, 0] = 1.0
    out = orient_landscape(Raster(a))
    assert out.size == Size(4, 2)
    assert out.data[0, 0, 0] == 1.0


def test_flip_rotate_identity_and_involution():
    img = textured(24, 36, seed=9)
    assert np.array_equal(flip_rotate(img, False, False, 0).data, img.data)
    twice = flip_rotate(flip_rotate(img, True, False, 0), True, False, 0)
    assert np.array_equal(twice.data, img.data)


def test_flip_rotate_four_cycle():
    img = textured(24, 36, seed=10)
    out = img
    for _ in range(4):
        out = flip_rotate(out, False, False, 90)
    assert np.array_equal(out.data, img.data)


def test_flip_rotate_rejects_bad_angle():
    with pytest.raises(InvalidParameterError):
        flip_rotate(constant(4, 4), False, False, 45)


def test_flip_rotate_is_pixel_permutation(rng):
    img = textured(16, 12, seed=11)
    out = flip_rotate(img, True, True, 270)
    assert np.array_equal(np.sort(out.data, axis=None), np.sort(img.data, axis=None))


def test_to_grayscale_weights():
    assert to_grayscale(constant(3, 3, 1.0)).data.max() == pytest.approx(1.0)
    green = np.zeros((2, 2, 3), dtype=np.float32)
    green[:, :, 1] = 1.0
    assert to_grayscale(Raster(green)).data[0, 0, 0] == pytest.approx(0.587, abs=1e-6)
    gray_in = constant(2, 2, 0.73)
    assert np.allclose(to_grayscale(gray_in).data, 0.73, atol=1e-6)


def test_to_grayscale_single_channel_passthrough():
    img = textured(8, 8, seed=12, channels=1)
    assert to_grayscale(img) is img


def test_samples_stay_in_unit_interval(rng):
    # Property: every public op preserves [0, 1] on random inputs.
    for seed in range(5):
        img = textured(40, 56, seed=seed)
        outputs = [
            center_crop_percent(img, 0.7),
            center_crop_to(img, Size(31, 17)),
            crop_to_aspect(img, 15, 10),
            resize_bicubic(img, Size(91, 23)),
            orient_landscape(img),
            flip_rotate(img, True, True, 180),
            to_grayscale(img),
        ]
        for out in outputs:
            assert out.data.min() >= 0.0 and out.data.max() <= 1.0


def test_crop_composition_on_divisible_sizes():
    # On sizes divisible by 400 the two-step and composed crops agree.
    img = textured(400, 800, seed=13)
    two_step = center_crop_percent(center_crop_percent(img, 0.5), 0.5)
    composed = center_crop_percent(img, 0.25)
    assert two_step.size == composed.size


def test_raster_rejects_bad_shapes():
    with pytest.raises(InvalidParameterError):
        Raster(np.zeros((4, 4, 2), dtype=np.float32))
    with pytest.raises(InvalidParameterError):
        Raster(np.zeros((0, 4, 3), dtype=np.float32))


def test_raster_is_immutable():
    img = constant(4, 4, 0.5)
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0
