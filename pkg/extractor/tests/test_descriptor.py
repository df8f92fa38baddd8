"""Frame descriptors: width, halves, determinism, input validation."""
from __future__ import annotations

import numpy as np
import pytest

from embexport.backbone import EMBED_WIDTH, PATCH_SIZE, StubBackbone, make_backbone
from embexport.descriptor import DESCRIPTOR_WIDTH, embed_image
from embexport.preprocess import TARGET_SIDE, preprocess_file


@pytest.fixture(scope="module")
def backbone():
    return StubBackbone()


def test_descriptor_width_constant():
    assert DESCRIPTOR_WIDTH == 2 * EMBED_WIDTH == 1536


def test_descriptor_shape_and_dtype(frame_png, backbone):
    vec = embed_image(preprocess_file(frame_png), backbone)
    assert vec.shape == (DESCRIPTOR_WIDTH,)
    assert vec.dtype == np.float32
    assert np.all(np.isfinite(vec))


def test_first_half_is_class_token(frame_png, backbone):
    px = preprocess_file(frame_png)
    vec = embed_image(px, backbone)
    cls, _ = backbone.embed(px)
    assert np.allclose(vec[:EMBED_WIDTH], cls, atol=1e-6)


def test_second_half_is_patch_mean(frame_png, backbone):
    # Recompute the unweighted patch-token mean independently and compare.
    px = preprocess_file(frame_png)
    vec = embed_image(px, backbone)
    _, patches = backbone.embed(px)
    recomputed = np.asarray(patches, dtype=np.float64).mean(axis=0)
    assert np.max(np.abs(vec[EMBED_WIDTH:] - recomputed)) < 1e-5


def test_same_image_twice_is_identical(frame_png, backbone):
    px = preprocess_file(frame_png)
    a = embed_image(px, backbone)
    b = embed_image(px, backbone)
    assert np.max(np.abs(a.astype(np.float64) - b.astype(np.float64))) < 1e-6


def test_stub_is_stable_across_instances(frame_png):
    px = preprocess_file(frame_png)
    a = embed_image(px, StubBackbone())
    b = embed_image(px, StubBackbone())
    assert np.array_equal(a, b)


def test_different_images_differ(tmp_path, backbone):
    from conftest import make_frame

    p1 = make_frame(tmp_path / "one.png", seed=1)
    p2 = make_frame(tmp_path / "two.png", seed=2)
    v1 = embed_image(preprocess_file(p1), backbone)
    v2 = embed_image(preprocess_file(p2), backbone)
    assert not np.allclose(v1, v2)


def test_stub_patch_grid(frame_png, backbone):
    px = preprocess_file(frame_png)
    cls, patches = backbone.embed(px)
    grid = TARGET_SIDE // PATCH_SIZE
    assert cls.shape == (EMBED_WIDTH,)
    assert patches.shape == (grid * grid, EMBED_WIDTH)


def test_make_backbone_stub_prefix():
    assert isinstance(make_backbone("stub"), StubBackbone)
    assert isinstance(make_backbone("stub-vit-b14"), StubBackbone)


def test_backbone_rejects_bad_pixel_shapes(backbone):
    with pytest.raises(ValueError, match="3, side, side"):
        backbone.embed(np.zeros((518, 518), dtype=np.float32))
    with pytest.raises(ValueError, match="square"):
        backbone.embed(np.zeros((3, 518, 200), dtype=np.float32))
    with pytest.raises(ValueError, match="at least"):
        backbone.embed(np.zeros((3, 4, 4), dtype=np.float32))


def test_embed_image_validates_backbone_output(frame_png):
    class Broken:
        def embed(self, pixels):
            return np.zeros(10), np.zeros((5, 10))

    with pytest.raises(ValueError, match="class token"):
        embed_image(preprocess_file(frame_png), Broken())

    class NoPatches:
        def embed(self, pixels):
            return np.zeros(EMBED_WIDTH), np.zeros((0, EMBED_WIDTH))

    with pytest.raises(ValueError, match="patch tokens"):
        embed_image(preprocess_file(frame_png), NoPatches())
