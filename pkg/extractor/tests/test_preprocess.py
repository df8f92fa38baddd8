"""Pixel pipeline: shape, normalization, channel replication, errors."""
from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from embexport.preprocess import (
    IMAGE_MEAN,
    IMAGE_STD,
    TARGET_SIDE,
    load_image,
    preprocess_file,
    preprocess_image,
)


def test_output_shape_and_dtype(frame_png):
    px = preprocess_file(frame_png)
    assert px.shape == (3, TARGET_SIDE, TARGET_SIDE)
    assert px.dtype == np.float32
    assert np.all(np.isfinite(px))


@pytest.mark.parametrize("size", [(64, 64), (500, 500), (700, 300), (518, 518)])
def test_any_input_size_maps_to_target(size):
    img = Image.new("L", size, 100)
    assert preprocess_image(img).shape == (3, TARGET_SIDE, TARGET_SIDE)


def test_constant_image_normalizes_exactly():
    # A flat gray image needs no resampling, so each channel must equal
    # (v/255 - mean_c) / std_c everywhere.
    v = 128
    px = preprocess_image(Image.new("L", (TARGET_SIDE, TARGET_SIDE), v))
    for c in range(3):
        expected = (v / 255.0 - IMAGE_MEAN[c]) / IMAGE_STD[c]
        assert np.allclose(px[c], expected, atol=1e-6)


def test_channels_are_replicated_grayscale(frame_png):
    # All three channels come from one gray plane, so undoing the
    # per-channel affine normalization must give identical planes.
    px = preprocess_file(frame_png)
    planes = [
        px[c] * IMAGE_STD[c] + IMAGE_MEAN[c]
        for c in range(3)
    ]
    assert np.allclose(planes[0], planes[1], atol=1e-6)
    assert np.allclose(planes[0], planes[2], atol=1e-6)


def test_color_input_collapses_to_grayscale():
    rgb = Image.new("RGB", (100, 100), (200, 30, 90))
    gray_value = np.asarray(rgb.convert("L"))[0, 0]
    px = preprocess_image(rgb)
    expected = (gray_value / 255.0 - IMAGE_MEAN[0]) / IMAGE_STD[0]
    assert np.allclose(px[0], expected, atol=1e-6)


def test_preprocess_is_deterministic(frame_png):
    a = preprocess_file(frame_png)
    b = preprocess_file(frame_png)
    assert np.array_equal(a, b)


def test_missing_file_names_path(tmp_path):
    missing = tmp_path / "nope.png"
    with pytest.raises(FileNotFoundError, match="nope.png"):
        load_image(missing)


def test_undecodable_file_names_path(tmp_path):
    bad = tmp_path / "garbage.png"
    bad.write_bytes(b"this is not an image at all")
    with pytest.raises(ValueError, match="garbage.png"):
        load_image(bad)


def test_bad_target_side_rejected(frame_png):
    with pytest.raises(ValueError, match="target_side"):
        preprocess_image(Image.new("L", (10, 10)), target_side=0)
