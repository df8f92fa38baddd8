"""Vision backbones producing per-frame token embeddings.

A backbone maps one preprocessed frame, shaped (3, side, side), to a class
token plus one token per image patch, each of width 768.  Two
implementations are provided:

* :class:`StubBackbone` is a deterministic stand-in that needs no model
  weights.  It summarizes each 14x14 patch with local statistics and sends
  them through a fixed random projection.  It exists so the full export
  pipeline can run, and be tested, on machines without GPU weights; its
  embeddings carry coarse brightness/texture information only.
* :class:`TransformersBackbone` wraps a pretrained ViT checkpoint loaded
  through the ``transformers`` library (install the ``vit`` extra).

Both are frozen: embedding the same pixels twice gives the same output.
"""
from __future__ import annotations

import numpy as np

# Token width of the ViT-B/14 family; the stub matches it so downstream
# files have the same geometry regardless of backbone choice.
EMBED_WIDTH = 768

PATCH_SIZE = 14

# Fixed seed for the stub's random projection. Changing it changes every
# stub embedding ever produced, so treat it as part of the format.
_STUB_SEED = 2718


class StubBackbone:
    """Weight-free deterministic backbone used as a pretrained stand-in.

    Each patch is reduced to six numbers (mean, standard deviation, min,
    max of its pixels plus its normalized grid position) and projected to
    ``EMBED_WIDTH`` dimensions by a fixed seeded matrix followed by tanh.
    The class token applies the same recipe to whole-image statistics.
    """

    def __init__(self, name: str = "stub") -> None:
        self.name = name
        self.width = EMBED_WIDTH
        rng = np.random.default_rng(_STUB_SEED)
        scale = 1.0 / np.sqrt(6.0)
        self._w_patch = rng.normal(0.0, scale, size=(6, EMBED_WIDTH))
        self._b_patch = rng.normal(0.0, 0.1, size=EMBED_WIDTH)
        self._w_cls = rng.normal(0.0, scale, size=(6, EMBED_WIDTH))
        self._b_cls = rng.normal(0.0, 0.1, size=EMBED_WIDTH)

    def embed(self, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (class token, patch tokens) for one preprocessed frame."""
        plane = _validate_pixels(pixels)
        side = plane.shape[0]
        grid = side // PATCH_SIZE
        trimmed = plane[: grid * PATCH_SIZE, : grid * PATCH_SIZE]
        patches = (
            trimmed.reshape(grid, PATCH_SIZE, grid, PATCH_SIZE)
            .transpose(0, 2, 1, 3)
            .reshape(grid * grid, PATCH_SIZE * PATCH_SIZE)
        )
        rows, cols = np.divmod(np.arange(grid * grid, dtype=np.float64), grid)
        denom = max(grid - 1, 1)
        feats = np.column_stack(
            [
                patches.mean(axis=1),
                patches.std(axis=1),
                patches.min(axis=1),
                patches.max(axis=1),
                rows / denom,
                cols / denom,
            ]
        )
        patch_tokens = np.tanh(feats @ self._w_patch + self._b_patch)
        global_feats = np.array(
            [
                plane.mean(),
                plane.std(),
                plane.min(),
                plane.max(),
                np.median(plane),
                np.percentile(plane, 90),
            ],
            dtype=np.float64,
        )
        cls = np.tanh(global_feats @ self._w_cls + self._b_cls)
        return cls, patch_tokens


class TransformersBackbone:
    """Pretrained ViT checkpoint loaded via the ``transformers`` library.

    The checkpoint name is any hub or local identifier understood by
    ``AutoModel.from_pretrained``.  Token layout follows the ViT
    convention: position 0 is the class token, the rest are patch tokens.
    """

    def __init__(self, name: str, device: str = "cpu") -> None:
        try:
            import torch
            from transformers import AutoModel
        except ImportError as exc:
            raise RuntimeError(
                "backbone {!r} needs the 'vit' extra "
                "(pip install embexport[vit])".format(name)
            ) from exc
        self.name = name
        self.device = device
        self._torch = torch
        self._model = AutoModel.from_pretrained(name).to(device).eval()
        self.width = int(self._model.config.hidden_size)

    def embed(self, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (class token, patch tokens) for one preprocessed frame."""
        plane = _validate_pixels(pixels)
        del plane  # only validated; the model consumes all three channels
        torch = self._torch
        batch = torch.from_numpy(np.ascontiguousarray(pixels, dtype=np.float32))
        with torch.no_grad():
            out = self._model(pixel_values=batch.unsqueeze(0).to(self.device))
        hidden = out.last_hidden_state[0].cpu().double().numpy()
        return hidden[0], hidden[1:]


def make_backbone(name: str, device: str = "cpu"):
    """Build a backbone from its identifier.

    Names starting with ``stub`` select :class:`StubBackbone`; anything
    else is treated as a pretrained checkpoint identifier.
    """
    if name.startswith("stub"):
        return StubBackbone(name)
    return TransformersBackbone(name, device)


def _validate_pixels(pixels: np.ndarray) -> np.ndarray:
    """Check the (3, side, side) contract and return channel 0 as float64."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected pixels shaped (3, side, side), got {arr.shape}")
    if arr.shape[1] != arr.shape[2]:
        raise ValueError(f"expected square input, got {arr.shape}")
    if arr.shape[1] < PATCH_SIZE:
        raise ValueError(f"input side must be at least {PATCH_SIZE}")
    return np.asarray(arr[0], dtype=np.float64)
