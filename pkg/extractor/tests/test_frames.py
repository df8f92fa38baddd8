"""Frame selection and label conformance against the shared contract.

The selection rule and the stage-label rule must match the downstream
classifier exactly.  Both are checked two ways: against the exported
fixture table (always), and live against the downstream implementation
when that package is importable.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from embexport.frames import (
    BLASTOCYST_STAGES,
    STAGE_ORDER,
    VideoFrames,
    read_frame_index,
    read_stage_labels,
    select_frame_indices,
)

FIXTURE = Path(__file__).parent / "fixtures" / "frame_selection_cases.tsv"


def fixture_cases():
    lines = FIXTURE.read_text(encoding="utf-8").splitlines()
    cases = []
    for ln in lines[1:]:
        name, times, delta_t, m_max, expected = ln.split("\t")
        cases.append(
            pytest.param(
                [float(t) for t in times.split(",")],
                float(delta_t),
                int(m_max),
                [float(t) for t in expected.split(",")],
                id=name,
            )
        )
    return cases


@pytest.mark.parametrize("times, delta_t, m_max, expected", fixture_cases())
def test_selection_matches_fixture(times, delta_t, m_max, expected):
    picked = select_frame_indices(times, delta_t, m_max)
    assert [times[j] for j in picked] == expected


def test_selection_matches_downstream_on_random_grids():
    pipeline = pytest.importorskip("seqfusion.pipeline")
    rng = np.random.default_rng(13)
    for _ in range(200):
        n = int(rng.integers(1, 30))
        times = np.sort(rng.uniform(0, 160, size=n))
        times = np.unique(np.round(times, 3))
        if times.size == 0:
            continue
        delta_t = float(rng.choice([6.0, 12.0, 24.0, 48.0]))
        m_max = int(rng.integers(2, 10))
        ours = [times[j] for j in select_frame_indices(times, delta_t, m_max)]
        theirs = list(pipeline.select_frames(times, delta_t, m_max))
        assert ours == pytest.approx(theirs)


def test_selection_basic_properties():
    times = list(np.arange(0.0, 150.0, 1.5))
    picked = select_frame_indices(times)
    assert len(picked) <= 7
    assert picked == sorted(set(picked))
    assert picked[-1] == len(times) - 1


def test_single_frame_selects_it():
    assert select_frame_indices([42.0]) == [0]


def test_selection_input_validation():
    with pytest.raises(ValueError, match="non-empty"):
        select_frame_indices([])
    with pytest.raises(ValueError, match="strictly increasing"):
        select_frame_indices([0.0, 0.0, 5.0])
    with pytest.raises(ValueError, match="delta_t"):
        select_frame_indices([0.0, 24.0], delta_t=0.0)
    with pytest.raises(ValueError, match="m_max"):
        select_frame_indices([0.0, 24.0], m_max=1)


def test_stage_constants_match_downstream():
    pipeline = pytest.importorskip("seqfusion.pipeline")
    assert tuple(STAGE_ORDER) == tuple(pipeline.STAGE_ORDER)
    assert BLASTOCYST_STAGES == pipeline.BLASTOCYST_STAGES


def test_blastocyst_stages_label_one(tmp_path):
    rows = ["video_id\tstage_code\thours"]
    for i, code in enumerate(STAGE_ORDER):
        rows.append(f"v{i}\t{code}\t10.0")
    path = tmp_path / "ann.tsv"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    labels = read_stage_labels(path)
    for i, code in enumerate(STAGE_ORDER):
        assert labels[f"v{i}"] == int(code in BLASTOCYST_STAGES)


def test_label_is_one_if_any_event_reaches_blastulation(tmp_path):
    path = tmp_path / "ann.tsv"
    path.write_text(
        "a\tt2\t20.0\na\ttM\t60.0\na\ttSB\t90.0\nb\tt2\t22.0\nb\ttM\t70.0\n",
        encoding="utf-8",
    )
    labels = read_stage_labels(path)
    assert labels == {"a": 1, "b": 0}


def test_stage_label_errors(tmp_path):
    path = tmp_path / "ann.tsv"
    path.write_text("a\ttXX\t10.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="unknown stage"):
        read_stage_labels(path)
    path.write_text("a\ttB\t-3.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match=">= 0"):
        read_stage_labels(path)
    path.write_text("a\ttB\n", encoding="utf-8")
    with pytest.raises(ValueError, match="expected video_id"):
        read_stage_labels(path)
    path.write_text("", encoding="utf-8")
    with pytest.raises(ValueError, match="no annotation rows"):
        read_stage_labels(path)


def test_frame_index_roundtrip(tmp_path):
    (tmp_path / "x.png").write_bytes(b"")
    body = (
        "video_id\thours\tpath\n"
        "v1\t24.0\tx.png\n"
        "v1\t0.0\tx.png\n"
        "v2\t5.5\tsub/y.png\n"
    )
    path = tmp_path / "frames.tsv"
    path.write_text(body, encoding="utf-8")
    videos = read_frame_index(path)
    assert set(videos) == {"v1", "v2"}
    assert videos["v1"].hours == [0.0, 24.0]
    assert videos["v1"].paths == [tmp_path / "x.png", tmp_path / "x.png"]
    assert videos["v2"].paths == [tmp_path / "sub" / "y.png"]


def test_frame_index_errors(tmp_path):
    path = tmp_path / "frames.tsv"
    path.write_text("v1\t0.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="expected video_id"):
        read_frame_index(path)
    path.write_text("v1\tnoon\tx.png\n", encoding="utf-8")
    with pytest.raises(ValueError, match="bad hours"):
        read_frame_index(path)
    path.write_text("v1\t3.0\tx.png\nv1\t3.0\ty.png\n", encoding="utf-8")
    with pytest.raises(ValueError, match="strictly increasing"):
        read_frame_index(path)
    path.write_text("video_id\thours\tpath\n", encoding="utf-8")
    with pytest.raises(ValueError, match="no frame rows"):
        read_frame_index(path)


def test_video_frames_validate():
    with pytest.raises(ValueError, match="no frames"):
        VideoFrames("v").validate()
    with pytest.raises(ValueError, match="video_id"):
        VideoFrames("", [1.0], [Path("a")]).validate()
    with pytest.raises(ValueError, match="equal length"):
        VideoFrames("v", [1.0, 2.0], [Path("a")]).validate()
