"""embexport: turn time-lapse frame images into embedding sequence files.

The pipeline is preprocess -> backbone -> descriptor -> .embs file: each
selected frame becomes a 1536-wide vector (class token plus mean patch
token), and each video becomes one .embs file plus a manifest row that
the downstream sequence classifier reads directly.
"""
from embexport.backbone import EMBED_WIDTH, StubBackbone, make_backbone
from embexport.descriptor import DESCRIPTOR_WIDTH, embed_image
from embexport.embsio import write_embs, write_manifest, write_sidecar
from embexport.extract import ExtractorConfig, extract_cohort, extract_video
from embexport.frames import (
    BLASTOCYST_STAGES,
    DEFAULT_DELTA_T,
    DEFAULT_MAX_FRAMES,
    STAGE_ORDER,
    VideoFrames,
    read_frame_index,
    read_stage_labels,
    select_frame_indices,
)
from embexport.preprocess import (
    IMAGE_MEAN,
    IMAGE_STD,
    TARGET_SIDE,
    load_image,
    preprocess_file,
    preprocess_image,
)

__version__ = "0.1.0"

__all__ = [
    "BLASTOCYST_STAGES",
    "DEFAULT_DELTA_T",
    "DEFAULT_MAX_FRAMES",
    "DESCRIPTOR_WIDTH",
    "EMBED_WIDTH",
    "ExtractorConfig",
    "IMAGE_MEAN",
    "IMAGE_STD",
    "STAGE_ORDER",
    "StubBackbone",
    "TARGET_SIDE",
    "VideoFrames",
    "embed_image",
    "extract_cohort",
    "extract_video",
    "load_image",
    "make_backbone",
    "preprocess_file",
    "preprocess_image",
    "read_frame_index",
    "read_stage_labels",
    "select_frame_indices",
    "write_embs",
    "write_manifest",
    "write_sidecar",
]
