"""Image loading and pixel normalization for the frame embedder.

Incubator snapshots arrive as single-channel images of varying size.  The
vision backbone expects fixed-size three-channel input normalized with the
statistics its published weights were trained under, so every frame goes
through the same pipeline: decode, collapse to grayscale, bilinear resize
to a square, replicate the channel, then standardize per channel.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

# Channel statistics published with the pretrained backbone weights.
IMAGE_MEAN = (0.485, 0.456, 0.406)
IMAGE_STD = (0.229, 0.224, 0.225)

# Square input side expected by the ViT-B/14 family: 37 * 14 = 518.
TARGET_SIDE = 518


def load_image(path: str | Path) -> Image.Image:
    """Open an image file, failing with the offending path in the message."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            return img.copy()
    except FileNotFoundError:
        raise FileNotFoundError(f"frame image not found: {path}") from None
    except UnidentifiedImageError as exc:
        raise ValueError(f"cannot decode frame image {path}: {exc}") from exc


def preprocess_image(
    image: Image.Image,
    target_side: int = TARGET_SIDE,
) -> np.ndarray:
    """Convert one PIL image into a normalized (3, side, side) float32 tensor.

    The image is collapsed to grayscale first so that color cameras and
    monochrome cameras produce identical input, then resized with bilinear
    interpolation and replicated across three channels before per-channel
    standardization.

    >>> from PIL import Image
    >>> px = preprocess_image(Image.new("L", (64, 64), 128))
    >>> px.shape
    (3, 518, 518)
    """
    if target_side < 1:
        raise ValueError("target_side must be positive")
    gray = image.convert("L")
    if gray.size != (target_side, target_side):
        gray = gray.resize((target_side, target_side), Image.BILINEAR)
    plane = np.asarray(gray, dtype=np.float32) / 255.0
    mean = np.asarray(IMAGE_MEAN, dtype=np.float32).reshape(3, 1, 1)
    std = np.asarray(IMAGE_STD, dtype=np.float32).reshape(3, 1, 1)
    stacked = np.broadcast_to(plane, (3, target_side, target_side))
    return ((stacked - mean) / std).astype(np.float32)


def preprocess_file(path: str | Path, target_side: int = TARGET_SIDE) -> np.ndarray:
    """Load and preprocess a frame image from disk in one call."""
    return preprocess_image(load_image(path), target_side)
