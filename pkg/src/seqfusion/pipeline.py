"""From raw frame metadata to model-ready inputs.

Covers the 24-hour frame selection rule, stage-based labeling,
zero-padding / truncation to a fixed length, and the cohort-level
blastulation proportion curve.  All functions are pure.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from seqfusion.embio import EmbeddingSequence

# Developmental stage codes in annotation order: second polar body,
# pronuclei appearance/fading, 2..9 cells, morula, then blastulation
# start, formation, expansion and hatching.
STAGE_ORDER = (
    "tPB2", "tPNa", "tPNf",
    "t2", "t3", "t4", "t5", "t6", "t7", "t8", "t9",
    "tM", "tSB", "tB", "tEB", "tHB",
)
STAGE_RANK = {code: i for i, code in enumerate(STAGE_ORDER)}

# Reaching any of these stages makes a video a positive (blastocyst) sample.
BLASTOCYST_STAGES = frozenset({"tSB", "tB", "tEB", "tHB"})

DEFAULT_DELTA_T = 24.0
DEFAULT_MAX_FRAMES = 7


@dataclass(frozen=True)
class StageAnnotation:
    """One annotated developmental event: stage code + hours post insemination."""

    stage: str
    hours: float

    def __post_init__(self) -> None:
        if self.stage not in STAGE_RANK:
            raise ValueError(f"unknown stage code {self.stage!r}")
        if not self.hours >= 0:
            raise ValueError(f"annotation time must be >= 0, got {self.hours}")


def validate_annotation_times(annotations: list[StageAnnotation]) -> None:
    """Times must be non-decreasing when ordered by developmental stage."""
    ranked = sorted(annotations, key=lambda a: STAGE_RANK[a.stage])
    for prev, cur in zip(ranked, ranked[1:]):
        if cur.hours < prev.hours:
            raise ValueError(
                f"stage {cur.stage} at {cur.hours} h precedes "
                f"{prev.stage} at {prev.hours} h"
            )


def derive_label(annotations: list[StageAnnotation]) -> int:
    """1 if the video reaches any blastocyst stage (tSB/tB/tEB/tHB), else 0."""
    if not annotations:
        raise ValueError("cannot derive a label from an empty annotation list")
    return int(any(a.stage in BLASTOCYST_STAGES for a in annotations))


def earliest_blastulation(annotations: list[StageAnnotation]) -> float | None:
    times = [a.hours for a in annotations if a.stage in BLASTOCYST_STAGES]
    return min(times) if times else None


# ---------------------------------------------------------------------------
# frame selection
# ---------------------------------------------------------------------------

def select_frames(
    frame_times: np.ndarray,
    delta_t: float = DEFAULT_DELTA_T,
    m_max: int = DEFAULT_MAX_FRAMES,
) -> np.ndarray:
    """Pick at most ``m_max`` frames covering the video at ``delta_t`` spacing.

    Targets are first + (i-1)*delta_t for i = 1..m_max-1.  Each target is
    mapped to the nearest available frame at-or-after it that lies before
    the final frame; unreachable targets are dropped, duplicates merged,
    and the final available frame is always appended.
    """
    times = np.ascontiguousarray(frame_times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("frame index must be a non-empty 1-D array of hours")
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise ValueError("frame timestamps must be strictly increasing")
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    if m_max < 2:
        raise ValueError("m_max must be >= 2")

    last = times[-1]
    body = times[:-1]  # candidates strictly before the final frame
    selected: list[float] = []
    for i in range(m_max - 1):
        target = times[0] + i * delta_t
        pos = bisect_left(body, target)
        if pos >= body.size:
            continue
        t = body[pos]
        if not selected or t > selected[-1]:
            selected.append(float(t))
    selected.append(float(last))
    return np.asarray(selected, dtype=np.float64)


def select_frame_indices(
    frame_times: np.ndarray,
    delta_t: float = DEFAULT_DELTA_T,
    m_max: int = DEFAULT_MAX_FRAMES,
) -> np.ndarray:
    """Same rule as :func:`select_frames` but returning positions."""
    times = np.ascontiguousarray(frame_times, dtype=np.float64)
    chosen = select_frames(times, delta_t, m_max)
    return np.searchsorted(times, chosen)


# ---------------------------------------------------------------------------
# padding
# ---------------------------------------------------------------------------

def pad_sequence(rows: np.ndarray, l_max: int) -> tuple[np.ndarray, int]:
    """Zero-pad (or truncate) an (L, D) array to (l_max, D).

    Shorter inputs keep their rows bit-exactly and gain trailing all-zero
    rows; longer inputs keep their first ``l_max`` rows.  Returns the
    padded array and valid_length = min(L, l_max).
    """
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("expected a non-empty (L, D) array")
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    length = rows.shape[0]
    if length >= l_max:
        return rows[:l_max].copy(), l_max
    padded = np.zeros((l_max, rows.shape[1]), dtype=rows.dtype)
    padded[:length] = rows
    return padded, length


@dataclass
class PaddedBatch:
    """Fixed-length batch: data (N, L_max, D), valid lengths, labels."""

    data: np.ndarray
    valid_lengths: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.data.shape[0]

    @property
    def l_max(self) -> int:
        return self.data.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.data.shape[2]

    def validate(self) -> None:
        n, l_max, _ = self.data.shape
        if self.valid_lengths.shape != (n,) or self.labels.shape != (n,):
            raise ValueError("valid_lengths and labels must have one entry per row")
        if np.any(self.valid_lengths < 1) or np.any(self.valid_lengths > l_max):
            raise ValueError("valid lengths must lie in [1, L_max]")
        for i, vl in enumerate(self.valid_lengths):
            if np.any(self.data[i, vl:] != 0.0):
                raise ValueError(f"row {i}: padding beyond valid length is non-zero")


def build_batch(
    sequences: list[EmbeddingSequence], l_max: int = DEFAULT_MAX_FRAMES
) -> PaddedBatch:
    """Pad every sequence to ``l_max`` rows and stack into one float64 batch."""
    if not sequences:
        raise ValueError("cannot build a batch from zero sequences")
    dim = sequences[0].feature_dim
    for seq in sequences:
        if seq.feature_dim != dim:
            raise ValueError(
                f"{seq.video_id}: feature dim {seq.feature_dim} != {dim}"
            )
    data = np.zeros((len(sequences), l_max, dim), dtype=np.float64)
    lengths = np.zeros(len(sequences), dtype=np.int64)
    labels = np.zeros(len(sequences), dtype=np.int64)
    for i, seq in enumerate(sequences):
        padded, valid = pad_sequence(seq.features.astype(np.float64), l_max)
        data[i] = padded
        lengths[i] = valid
        labels[i] = seq.label
    return PaddedBatch(data, lengths, labels)


# ---------------------------------------------------------------------------
# cohort statistics
# ---------------------------------------------------------------------------

def cohort_blastulation_curve(
    cohort: list[tuple[list[StageAnnotation], float, float]],
    grid: np.ndarray,
) -> list[tuple[float, float, int]]:
    """Proportion of the cohort that has started blastulation by each time.

    ``cohort`` holds (annotations, first_observed, last_observed) per
    embryo.  At each grid time t the proportion counts embryos whose
    earliest blastocyst-stage annotation is <= t, over the full cohort
    size; active_count counts embryos whose observation window contains t.
    """
    if not cohort:
        raise ValueError("cohort must be non-empty")
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    if grid.size > 1 and np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")
    onset_times = []
    windows = []
    for annotations, first_seen, last_seen in cohort:
        onset_times.append(earliest_blastulation(annotations))
        windows.append((first_seen, last_seen))
    total = len(cohort)
    curve = []
    for t in grid:
        formed = sum(1 for onset in onset_times if onset is not None and onset <= t)
        active = sum(1 for lo, hi in windows if lo <= t <= hi)
        curve.append((float(t), formed / total, active))
    return curve


# ---------------------------------------------------------------------------
# stage annotation files: video_id <tab> stage_code <tab> hours
# ---------------------------------------------------------------------------

def parse_annotation_file(path: str | Path) -> dict[str, list[StageAnnotation]]:
    """Read per-video stage events from tab-separated text.

    A first line naming the columns (video_id, stage_code, hours) is
    skipped; event order within the file is preserved per video.
    """
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if lines and lines[0].split("\t")[:1] == ["video_id"]:
        lines = lines[1:]
    if not lines:
        raise ValueError(f"{path}: no annotation rows")
    videos: dict[str, list[StageAnnotation]] = {}
    for i, ln in enumerate(lines, start=1):
        parts = ln.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{i}: expected video_id, stage_code, hours")
        vid, stage, hours = parts
        try:
            ann = StageAnnotation(stage.strip(), float(hours))
        except ValueError as exc:
            raise ValueError(f"{path}:{i}: {exc}") from exc
        videos.setdefault(vid.strip(), []).append(ann)
    for vid, annotations in videos.items():
        try:
            validate_annotation_times(annotations)
        except ValueError as exc:
            raise ValueError(f"{path}: video {vid!r}: {exc}") from exc
    return videos


def annotation_cohort(
    videos: dict[str, list[StageAnnotation]],
) -> list[tuple[list[StageAnnotation], float, float]]:
    """Build curve input with observation windows spanning each video's events."""
    cohort = []
    for vid in videos:
        annotations = videos[vid]
        times = [a.hours for a in annotations]
        cohort.append((annotations, min(times), max(times)))
    return cohort
