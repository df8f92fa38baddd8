"""Stage annotations to labels, cohort curve, and frame selection.

A small hand-written annotation table is parsed into per-video stage
timelines; videos reaching any blastocyst stage get label 1.  The
cohort curve tracks the fraction blastulated over time next to how many
videos were actively recorded.  Frame selection picks at most seven
daily frames from irregular recording timestamps.
"""

import tempfile
from pathlib import Path

import numpy as np

from seqfusion.pipeline import (
    annotation_cohort,
    cohort_blastulation_curve,
    derive_label,
    earliest_blastulation,
    parse_annotation_file,
    select_frames,
)

ANNOTATIONS = """\
video_id\tstage_code\thours
e01\tt2\t25.0
e01\ttM\t85.0
e01\ttSB\t98.5
e02\tt2\t27.5
e02\ttM\t90.0
e03\tt2\t24.0
e03\ttSB\t101.0
e03\ttB\t108.0
"""


def main():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "annotations.tsv"
        path.write_text(ANNOTATIONS, encoding="utf-8")
        videos = parse_annotation_file(path)

    for vid in sorted(videos):
        stages = videos[vid]
        onset = earliest_blastulation(stages)
        onset_text = f"blastocyst at {onset:.1f}h" if onset else "no blastocyst"
        print(f"{vid}: label {derive_label(stages)}, "
              f"{len(stages)} stage events, {onset_text}")

    cohort = annotation_cohort(videos)
    grid = np.arange(0.0, 121.0, 20.0)
    print("\nhours  blastulated  observed")
    for t, proportion, active in cohort_blastulation_curve(cohort, grid):
        print(f"{t:>5.0f}  {proportion:>11.2f}  {active:>8}")

    times = np.array([3.0, 10.0, 29.0, 50.0, 55.0, 99.0, 131.0, 140.0])
    picked = select_frames(times)
    print(f"\nrecorded at hours {times.tolist()}")
    print(f"selected {picked.tolist()} (daily targets, last frame always kept)")


if __name__ == "__main__":
    main()
