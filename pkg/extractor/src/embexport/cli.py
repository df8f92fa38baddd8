"""Command line front end for cohort extraction.

Usage:
    embexport --frames frames.tsv --out-dir embeddings/
        [--annotations stages.tsv] [--backbone stub] [--delta-t 24]
        [--m-max 7] [--device cpu]
"""
from __future__ import annotations

import argparse
import sys

from embexport.extract import ExtractorConfig, extract_cohort


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Embed time-lapse frame images into .embs sequence files.",
    )
    parser.add_argument(
        "--frames", required=True,
        help="frame index TSV: video_id, hours, path per row",
    )
    parser.add_argument(
        "--out-dir", required=True,
        help="directory receiving .embs files, manifest.tsv and extraction.json",
    )
    parser.add_argument(
        "--annotations", default=None,
        help="stage annotation TSV used to derive labels (omit for unlabeled export)",
    )
    parser.add_argument(
        "--backbone", default="stub",
        help="backbone id: 'stub' or a pretrained checkpoint name (default: stub)",
    )
    parser.add_argument("--delta-t", type=float, default=24.0,
                        help="target spacing between frames in hours (default: 24)")
    parser.add_argument("--m-max", type=int, default=7,
                        help="maximum frames kept per video (default: 7)")
    parser.add_argument("--device", default="cpu",
                        help="device hint for pretrained backbones (default: cpu)")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExtractorConfig(
            backbone=args.backbone,
            delta_t=args.delta_t,
            m_max=args.m_max,
            device=args.device,
        )
        manifest = extract_cohort(
            args.frames, args.out_dir, args.annotations, config
        )
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    with open(manifest, encoding="utf-8") as fh:
        n_videos = sum(1 for _ in fh) - 1
    print(f"exported {n_videos} videos -> {manifest}")
    return 0


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
