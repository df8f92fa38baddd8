"""Shared helpers: synthetic grayscale frames and tiny cohorts on disk."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def make_frame(path: Path, seed: int, size: tuple[int, int] = (200, 160)) -> Path:
    """Write a deterministic grayscale PNG with seed-dependent content."""
    rng = np.random.default_rng(seed)
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w]
    ramp = (xx / max(w - 1, 1) + yy / max(h - 1, 1)) / 2.0
    noise = rng.random((h, w))
    arr = np.clip(0.6 * ramp + 0.4 * noise, 0.0, 1.0)
    Image.fromarray((arr * 255).astype(np.uint8), mode="L").save(path)
    return path


@pytest.fixture
def frame_png(tmp_path):
    """One synthetic frame image."""
    return make_frame(tmp_path / "frame.png", seed=0)


@pytest.fixture
def cohort_dir(tmp_path):
    """A two-video cohort: frame index, images, and stage annotations.

    video a: frames at 0, 25, 50 h (all selected), reaches tB (label 1).
    video b: frames at 5, 40 h, stops at tM (label 0).
    """
    root = tmp_path / "cohort"
    root.mkdir()
    rows = []
    for vid, hours in [("a", [0.0, 25.0, 50.0]), ("b", [5.0, 40.0])]:
        for k, t in enumerate(hours):
            name = f"{vid}_{k}.png"
            make_frame(root / name, seed=hash((vid, k)) % 1000)
            rows.append(f"{vid}\t{t}\t{name}")
    (root / "frames.tsv").write_text(
        "video_id\thours\tpath\n" + "\n".join(rows) + "\n", encoding="utf-8"
    )
    (root / "stages.tsv").write_text(
        "video_id\tstage_code\thours\n"
        "a\tt2\t26.0\n"
        "a\ttB\t48.0\n"
        "b\ttM\t30.0\n",
        encoding="utf-8",
    )
    return root
