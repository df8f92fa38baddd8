"""Frame index files, sparse frame selection, and stage labels.

The exporter consumes two tab-separated inputs.  A frame index lists every
available snapshot: ``video_id<TAB>hours<TAB>path``, one row per frame,
with an optional header row.  An annotation file lists developmental
events: ``video_id<TAB>stage_code<TAB>hours``.  Both formats are shared
with the downstream sequence classifier, so the selection rule and the
label rule here restate the published contract and are covered by
conformance fixtures rather than invented locally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_DELTA_T = 24.0
DEFAULT_MAX_FRAMES = 7

# Valid developmental stage codes, in annotation order.
STAGE_ORDER = (
    "tPB2", "tPNa", "tPNf",
    "t2", "t3", "t4", "t5", "t6", "t7", "t8", "t9",
    "tM", "tSB", "tB", "tEB", "tHB",
)
_STAGE_SET = frozenset(STAGE_ORDER)

# Reaching any of these stages marks the video as a positive sample.
BLASTOCYST_STAGES = frozenset({"tSB", "tB", "tEB", "tHB"})


@dataclass
class VideoFrames:
    """All available snapshots of one video, ordered by capture time."""

    video_id: str
    hours: list[float] = field(default_factory=list)
    paths: list[Path] = field(default_factory=list)

    def validate(self) -> None:
        if not self.video_id:
            raise ValueError("video_id must be non-empty")
        if not self.hours:
            raise ValueError(f"video {self.video_id!r} has no frames")
        if len(self.hours) != len(self.paths):
            raise ValueError("hours and paths must have equal length")
        for prev, cur in zip(self.hours, self.hours[1:]):
            if cur <= prev:
                raise ValueError(
                    f"video {self.video_id!r}: frame times must be strictly "
                    f"increasing, got {prev} then {cur}"
                )


def select_frame_indices(
    hours: list[float] | np.ndarray,
    delta_t: float = DEFAULT_DELTA_T,
    m_max: int = DEFAULT_MAX_FRAMES,
) -> list[int]:
    """Pick at most ``m_max`` frame positions covering the video.

    Targets sit at first + i*delta_t for i = 0..m_max-2.  Each target maps
    to the earliest frame at-or-after it among all frames before the last
    one; misses are dropped and duplicates merged.  The final frame is
    always appended, so a single-frame video yields exactly one pick.

    >>> select_frame_indices([3, 10, 29, 50, 55, 99, 131])
    [0, 2, 4, 5, 6]
    """
    times = [float(t) for t in np.asarray(hours, dtype=np.float64).ravel()]
    if not times:
        raise ValueError("frame index must be non-empty")
    for prev, cur in zip(times, times[1:]):
        if cur <= prev:
            raise ValueError("frame timestamps must be strictly increasing")
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    if m_max < 2:
        raise ValueError("m_max must be >= 2")

    last = len(times) - 1
    picked: list[int] = []
    for i in range(m_max - 1):
        target = times[0] + i * delta_t
        hit = next((j for j in range(last) if times[j] >= target), None)
        if hit is None:
            continue
        if not picked or hit > picked[-1]:
            picked.append(hit)
    picked.append(last)
    return picked


def read_frame_index(path: str | Path) -> dict[str, VideoFrames]:
    """Parse a frame index file into per-video frame lists.

    Rows are ``video_id<TAB>hours<TAB>path``; a header row naming the
    columns is skipped.  Relative frame paths are resolved against the
    index file's directory.  Rows may arrive in any order; frames are
    sorted by time per video.
    """
    path = Path(path)
    root = path.parent
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if lines and lines[0].split("\t")[:1] == ["video_id"]:
        lines = lines[1:]
    if not lines:
        raise ValueError(f"{path}: no frame rows")
    videos: dict[str, VideoFrames] = {}
    for i, ln in enumerate(lines, start=1):
        parts = ln.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{i}: expected video_id, hours, path")
        vid, hours_text, frame_path = (p.strip() for p in parts)
        try:
            hours = float(hours_text)
        except ValueError:
            raise ValueError(f"{path}:{i}: bad hours value {hours_text!r}") from None
        if not vid:
            raise ValueError(f"{path}:{i}: empty video_id")
        entry = videos.setdefault(vid, VideoFrames(vid))
        entry.hours.append(hours)
        entry.paths.append(root / frame_path)
    for entry in videos.values():
        order = np.argsort(entry.hours, kind="stable")
        entry.hours = [entry.hours[j] for j in order]
        entry.paths = [entry.paths[j] for j in order]
        try:
            entry.validate()
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from exc
    return videos


def read_stage_labels(path: str | Path) -> dict[str, int]:
    """Derive a binary label per video from a stage annotation file.

    Rows are ``video_id<TAB>stage_code<TAB>hours`` with an optional header
    row.  A video labels 1 when any of its events reaches a blastocyst
    stage (tSB, tB, tEB or tHB), else 0.
    """
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if lines and lines[0].split("\t")[:1] == ["video_id"]:
        lines = lines[1:]
    if not lines:
        raise ValueError(f"{path}: no annotation rows")
    labels: dict[str, int] = {}
    for i, ln in enumerate(lines, start=1):
        parts = ln.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{i}: expected video_id, stage_code, hours")
        vid, stage, hours_text = (p.strip() for p in parts)
        if stage not in _STAGE_SET:
            raise ValueError(f"{path}:{i}: unknown stage code {stage!r}")
        try:
            hours = float(hours_text)
        except ValueError:
            raise ValueError(f"{path}:{i}: bad hours value {hours_text!r}") from None
        if hours < 0:
            raise ValueError(f"{path}:{i}: annotation time must be >= 0")
        reached = int(stage in BLASTOCYST_STAGES)
        labels[vid] = max(labels.get(vid, 0), reached)
    return labels
