"""Writers for the embedding-sequence interchange format.

One ``.embs`` file holds a single video: a little-endian header (magic
``EMBS``, version byte, length-prefixed UTF-8 video id, int32 label,
uint32 feature width, uint32 frame count) followed by float64 timestamps
and row-major float32 features.  A cohort is tied together by a
tab-separated manifest whose header line is exactly
``path<TAB>video_id<TAB>label<TAB>n_frames``.  Both layouts are the
published input contract of the downstream sequence classifier; this
module restates them independently and is held to byte-level conformance
tests.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

EMBS_MAGIC = b"EMBS"
EMBS_VERSION = 1

MANIFEST_HEADER = "path\tvideo_id\tlabel\tn_frames"

SIDECAR_NAME = "extraction.json"


def write_embs(
    path: str | Path,
    video_id: str,
    timestamps: np.ndarray,
    features: np.ndarray,
    label: int = -1,
) -> None:
    """Write one video's embedding sequence to ``path``.

    ``timestamps`` is (T,) strictly increasing hours, ``features`` is
    (T, D) with T >= 1 and D >= 1, and ``label`` is 0, 1 or -1 for
    unlabeled.  Everything is validated before the file is opened.
    """
    ts = np.asarray(timestamps, dtype=np.float64)
    feats = np.asarray(features, dtype=np.float32)
    if not video_id:
        raise ValueError("video_id must be non-empty")
    id_bytes = video_id.encode("utf-8")
    if len(id_bytes) > 0xFFFF:
        raise ValueError("video_id longer than 65535 bytes")
    if label not in (-1, 0, 1):
        raise ValueError(f"label must be -1, 0 or 1, got {label}")
    if ts.ndim != 1 or ts.size == 0:
        raise ValueError("timestamps must be a non-empty 1-D array")
    if feats.ndim != 2 or feats.shape[0] != ts.size or feats.shape[1] == 0:
        raise ValueError(
            f"features must be ({ts.size}, D) with D >= 1, got {feats.shape}"
        )
    if ts.size > 1 and not np.all(np.diff(ts) > 0):
        raise ValueError("timestamps must be strictly increasing")
    if not np.all(np.isfinite(ts)) or not np.all(np.isfinite(feats)):
        raise ValueError("timestamps and features must be finite")

    header = struct.pack(
        f"<4sBH{len(id_bytes)}siII",
        EMBS_MAGIC,
        EMBS_VERSION,
        len(id_bytes),
        id_bytes,
        int(label),
        feats.shape[1],
        feats.shape[0],
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ts.astype("<f8").tobytes())
        fh.write(feats.astype("<f4").tobytes())


def write_manifest(
    rows: list[tuple[str, str, int, int]],
    path: str | Path,
) -> Path:
    """Write manifest rows as (relative path, video_id, label, n_frames)."""
    path = Path(path)
    if not rows:
        raise ValueError("manifest needs at least one row")
    lines = [MANIFEST_HEADER]
    for rel_path, video_id, label, n_frames in rows:
        lines.append(f"{rel_path}\t{video_id}\t{label}\t{n_frames}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_sidecar(
    out_dir: str | Path,
    *,
    backbone_name: str,
    backbone_width: int,
    descriptor_width: int,
    target_side: int,
    image_mean: tuple[float, ...],
    image_std: tuple[float, ...],
    delta_t: float,
    m_max: int,
) -> Path:
    """Record how a cohort was extracted next to its manifest.

    The sidecar pins the backbone identity and the normalization
    constants so embeddings from different extraction runs can be told
    apart and reproduced.
    """
    payload = {
        "format": "embs-extraction",
        "version": 1,
        "backbone": backbone_name,
        "backbone_width": backbone_width,
        "descriptor_width": descriptor_width,
        "target_side": target_side,
        "image_mean": list(image_mean),
        "image_std": list(image_std),
        "delta_t": delta_t,
        "m_max": m_max,
    }
    path = Path(out_dir) / SIDECAR_NAME
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path
