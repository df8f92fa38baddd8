"""End-to-end export: frame images to embedding-sequence files.

Videos are independent of one another, so a cohort extraction is a plain
per-video loop that can be sharded across processes by splitting the
frame index; each video touches only its own frames and writes only its
own output file.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from embexport.backbone import EMBED_WIDTH, make_backbone
from embexport.descriptor import DESCRIPTOR_WIDTH, embed_image
from embexport.embsio import write_embs, write_manifest, write_sidecar
from embexport.frames import (
    DEFAULT_DELTA_T,
    DEFAULT_MAX_FRAMES,
    VideoFrames,
    read_frame_index,
    read_stage_labels,
    select_frame_indices,
)
from embexport.preprocess import IMAGE_MEAN, IMAGE_STD, TARGET_SIDE, preprocess_file


@dataclass(frozen=True)
class ExtractorConfig:
    """Settings for one extraction run."""

    backbone: str = "stub"
    target_side: int = TARGET_SIDE
    delta_t: float = DEFAULT_DELTA_T
    m_max: int = DEFAULT_MAX_FRAMES
    device: str = "cpu"

    def __post_init__(self) -> None:
        # The ViT-B/14 patch grid assumes this side; other values would
        # silently change the token count, so refuse them here.
        if self.target_side != TARGET_SIDE:
            raise ValueError(f"target_side must be {TARGET_SIDE}")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if self.m_max < 2:
            raise ValueError("m_max must be >= 2")


def extract_video(
    video: VideoFrames,
    backbone,
    config: ExtractorConfig,
    out_dir: str | Path,
    label: int = -1,
) -> tuple[str, int]:
    """Embed one video's selected frames and write its .embs file.

    Frames are selected by time before any image is decoded, so dense
    videos cost no more than sparse ones.  Returns the written filename
    (relative to ``out_dir``) and the number of frames it holds; a
    single-frame video yields a one-row sequence, padding is downstream
    work.
    """
    video.validate()
    picked = select_frame_indices(video.hours, config.delta_t, config.m_max)
    rows = np.empty((len(picked), DESCRIPTOR_WIDTH), dtype=np.float32)
    for r, j in enumerate(picked):
        pixels = preprocess_file(video.paths[j], config.target_side)
        rows[r] = embed_image(pixels, backbone)
    times = np.asarray([video.hours[j] for j in picked], dtype=np.float64)
    filename = f"{video.video_id}.embs"
    write_embs(Path(out_dir) / filename, video.video_id, times, rows, label)
    return filename, len(picked)


def extract_cohort(
    frame_index: str | Path,
    out_dir: str | Path,
    annotations: str | Path | None = None,
    config: ExtractorConfig | None = None,
) -> Path:
    """Export every video in a frame index; return the manifest path.

    When ``annotations`` is given every video must appear in it and gets
    its stage-derived label; without it all videos are written unlabeled
    (label -1).  The output directory receives one .embs file per video,
    a manifest.tsv, and an extraction.json sidecar recording the backbone
    and normalization constants.
    """
    config = config or ExtractorConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    videos = read_frame_index(frame_index)
    labels: dict[str, int] = {}
    if annotations is not None:
        labels = read_stage_labels(annotations)
        missing = sorted(set(videos) - set(labels))
        if missing:
            raise ValueError(
                "videos missing from annotations: " + ", ".join(missing)
            )

    backbone = make_backbone(config.backbone, config.device)
    if backbone.width != EMBED_WIDTH:
        raise ValueError(
            f"backbone width {backbone.width} != expected {EMBED_WIDTH}"
        )

    manifest_rows = []
    for vid in sorted(videos):
        label = labels.get(vid, -1)
        filename, n_frames = extract_video(
            videos[vid], backbone, config, out_dir, label
        )
        manifest_rows.append((filename, vid, label, n_frames))

    write_sidecar(
        out_dir,
        backbone_name=backbone.name,
        backbone_width=backbone.width,
        descriptor_width=DESCRIPTOR_WIDTH,
        target_side=config.target_side,
        image_mean=IMAGE_MEAN,
        image_std=IMAGE_STD,
        delta_t=config.delta_t,
        m_max=config.m_max,
    )
    return write_manifest(manifest_rows, out_dir / "manifest.tsv")
