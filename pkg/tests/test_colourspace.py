import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucapsnet.colourspace import (
    lab_to_rgb,
    load_rgb,
    merge_lab,
    resize_bilinear,
    resize_to_input,
    rgb_to_lab,
    save_rgb,
    split_lab,
)

FIXTURES = Path(__file__).parent / "data" / "lab_fixtures.csv"

rgb_pixels = st.tuples(
    st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)
)


def test_white_and_black():
    white = rgb_to_lab(np.array([[[255, 255, 255]]], dtype=np.uint8))[0, 0]
    np.testing.assert_allclose(white, [100.0, 0.0, 0.0], atol=1e-3)
    black = rgb_to_lab(np.array([[[0, 0, 0]]], dtype=np.uint8))[0, 0]
    np.testing.assert_allclose(black, [0.0, 0.0, 0.0], atol=1e-3)


def test_pinned_conversions():
    # Fixture values computed with an independent arbitrary-precision
    # implementation of the CIE formulas.
    with open(FIXTURES, newline="") as fh:
        reader = csv.reader(fh)
        assert next(reader) == ["r", "g", "b", "L", "a", "b"]
        for row in reader:
            rgb = np.array([[row[:3]]], dtype=np.uint8)
            lab = rgb_to_lab(rgb)[0, 0]
            expected = [float(v) for v in row[3:]]
            np.testing.assert_allclose(lab, expected, atol=1e-6, err_msg=str(row))


def test_primary_red_reference():
    lab = rgb_to_lab(np.array([[[255, 0, 0]]], dtype=np.uint8))[0, 0]
    np.testing.assert_allclose(lab, [53.24, 80.09, 67.20], atol=0.01)


def test_lab_to_rgb_trivial():
    assert tuple(lab_to_rgb(np.array([100.0, 0.0, 0.0]))) == (255, 255, 255)
    assert tuple(lab_to_rgb(np.array([0.0, 0.0, 0.0]))) == (0, 0, 0)


def test_round_trip_random_pixels():
    rng = np.random.default_rng(7)
    rgb = rng.integers(0, 256, size=(1000, 1, 3), dtype=np.uint8)
    lab = rgb_to_lab(rgb)
    assert 0.0 <= lab[..., 0].min() and lab[..., 0].max() <= 100.0
    assert np.abs(lab[..., 1:]).max() <= 110.0
    back = lab_to_rgb(lab)
    err = np.abs(back.astype(int) - rgb.astype(int))
    assert err.max() <= 1


@given(rgb_pixels)
@settings(max_examples=200, deadline=None)
def test_round_trip_property(pixel):
    rgb = np.array([[pixel]], dtype=np.uint8)
    back = lab_to_rgb(rgb_to_lab(rgb))
    assert np.abs(back.astype(int) - rgb.astype(int)).max() <= 1


@given(st.integers(0, 255))
@settings(max_examples=64, deadline=None)
def test_gray_axis(v):
    lab = rgb_to_lab(np.array([[[v, v, v]]], dtype=np.uint8))[0, 0]
    assert abs(lab[1]) <= 0.5
    assert abs(lab[2]) <= 0.5


def test_luminance_monotone_in_gray():
    grays = np.stack([np.arange(256)] * 3, axis=-1).astype(np.uint8)[None]
    luminance = rgb_to_lab(grays)[0, :, 0]
    assert np.all(np.diff(luminance) > 0)


def test_split_merge_identity():
    rng = np.random.default_rng(0)
    lab = rng.uniform(-100, 100, size=(5, 7, 3))
    l_plane, ab = split_lab(lab)
    assert l_plane.shape == (5, 7)
    assert ab.shape == (5, 7, 2)
    np.testing.assert_array_equal(merge_lab(l_plane, ab), lab)


def test_split_shapes_224():
    lab = np.zeros((224, 224, 3))
    l_plane, ab = split_lab(lab)
    assert l_plane.shape == (224, 224)
    assert ab.shape == (224, 224, 2)


def test_merge_dimension_mismatch():
    with pytest.raises(ValueError):
        merge_lab(np.zeros((4, 4)), np.zeros((5, 4, 2)))


def _bilinear_oracle(src, out_h, out_w):
    # Independent scalar implementation: half-pixel sample centres,
    # replicated edges.
    src = np.asarray(src, dtype=np.float64)
    h, w = src.shape[:2]
    out = np.zeros((out_h, out_w) + src.shape[2:], dtype=np.float64)
    for i in range(out_h):
        for j in range(out_w):
            y = (i + 0.5) * h / out_h - 0.5
            x = (j + 0.5) * w / out_w - 0.5
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            dy, dx = y - y0, x - x0
            total = 0.0
            for oy, wy in ((0, 1 - dy), (1, dy)):
                for ox, wx in ((0, 1 - dx), (1, dx)):
                    yy = min(max(y0 + oy, 0), h - 1)
                    xx = min(max(x0 + ox, 0), w - 1)
                    total = total + wy * wx * src[yy, xx]
            out[i, j] = total
    return out


def test_resize_matches_oracle():
    rng = np.random.default_rng(3)
    for (h, w, oh, ow) in [(32, 32, 16, 16), (20, 10, 7, 13), (8, 8, 17, 5)]:
        src = rng.uniform(0, 255, size=(h, w, 3))
        np.testing.assert_allclose(
            resize_bilinear(src, oh, ow), _bilinear_oracle(src, oh, ow), atol=1e-9
        )


def test_resize_to_input_identity():
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, size=(224, 224, 3), dtype=np.uint8)
    out = resize_to_input(img, 224)
    np.testing.assert_array_equal(out, img)


def test_resize_to_input_downsample_vs_oracle():
    rng = np.random.default_rng(11)
    img = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    out = resize_to_input(img, 32)
    oracle = np.clip(np.rint(_bilinear_oracle(img.astype(np.float64), 32, 32)), 0, 255)
    assert np.abs(out.astype(int) - oracle.astype(int)).max() <= 1


def test_resize_to_input_shape_contract():
    img = np.zeros((100, 50, 3), dtype=np.uint8)
    assert resize_to_input(img, 224).shape == (224, 224, 3)


def test_resize_to_input_errors():
    with pytest.raises(ValueError):
        resize_to_input(np.zeros((0, 10, 3), dtype=np.uint8), 32)
    with pytest.raises(ValueError):
        resize_to_input(np.zeros((10, 10, 3), dtype=np.uint8), 4)


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    img = rng.integers(0, 256, size=(12, 9, 3), dtype=np.uint8)
    path = tmp_path / "img.png"
    save_rgb(path, img)
    np.testing.assert_array_equal(load_rgb(path), img)
