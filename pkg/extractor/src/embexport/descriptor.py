"""Fixed-width frame descriptors built from backbone tokens."""
from __future__ import annotations

import numpy as np

from embexport.backbone import EMBED_WIDTH

# One frame descriptor: class token followed by the mean patch token.
DESCRIPTOR_WIDTH = 2 * EMBED_WIDTH


def embed_image(pixels: np.ndarray, backbone) -> np.ndarray:
    """Describe one preprocessed frame as a (1536,) float32 vector.

    The first half is the backbone's class token; the second half is the
    unweighted mean over its patch tokens, giving a global summary plus an
    averaged local one.  The backbone is frozen, so identical pixels give
    identical descriptors.
    """
    cls, patches = backbone.embed(pixels)
    cls = np.asarray(cls, dtype=np.float64)
    patches = np.asarray(patches, dtype=np.float64)
    if cls.shape != (EMBED_WIDTH,):
        raise ValueError(f"class token must have shape ({EMBED_WIDTH},), got {cls.shape}")
    if patches.ndim != 2 or patches.shape[1] != EMBED_WIDTH or patches.shape[0] == 0:
        raise ValueError(
            f"patch tokens must be (n_patches, {EMBED_WIDTH}) with n_patches >= 1, "
            f"got {patches.shape}"
        )
    return np.concatenate([cls, patches.mean(axis=0)]).astype(np.float32)
