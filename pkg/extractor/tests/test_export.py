"""Export conformance: EMBS bytes, manifests, cohorts, and the CLI.

Byte-level checks parse written files with struct directly; when the
downstream classifier package is importable its readers are used as the
second, independent parser.
"""
from __future__ import annotations

import json
import struct

import numpy as np
import pytest

from conftest import make_frame
from embexport.cli import run
from embexport.descriptor import DESCRIPTOR_WIDTH
from embexport.embsio import MANIFEST_HEADER, write_embs, write_manifest
from embexport.extract import ExtractorConfig, extract_cohort, extract_video
from embexport.frames import VideoFrames, read_frame_index


def parse_embs_bytes(blob: bytes):
    """Minimal independent reader for the written layout."""
    assert blob[:4] == b"EMBS"
    assert blob[4] == 1
    (id_len,) = struct.unpack_from("<H", blob, 5)
    off = 7
    video_id = blob[off : off + id_len].decode("utf-8")
    off += id_len
    label, dim, length = struct.unpack_from("<iII", blob, off)
    off += 12
    ts = np.frombuffer(blob, dtype="<f8", count=length, offset=off)
    off += 8 * length
    data = np.frombuffer(blob, dtype="<f4", count=length * dim, offset=off)
    assert off + 4 * length * dim == len(blob)
    return video_id, label, ts, data.reshape(length, dim)


# ---------------------------------------------------------------------------
# write_embs
# ---------------------------------------------------------------------------

def test_write_embs_byte_layout(tmp_path):
    ts = np.array([0.0, 24.0, 55.5])
    feats = np.arange(6, dtype=np.float32).reshape(3, 2)
    path = tmp_path / "v.embs"
    write_embs(path, "vid-7", ts, feats, label=1)
    video_id, label, rts, rdata = parse_embs_bytes(path.read_bytes())
    assert video_id == "vid-7"
    assert label == 1
    assert np.array_equal(rts, ts)
    assert np.array_equal(rdata, feats)


def test_write_embs_parses_in_downstream_reader(tmp_path):
    embio = pytest.importorskip("seqfusion.embio")
    ts = np.array([3.0, 29.0, 55.0, 99.0, 131.0])
    rng = np.random.default_rng(4)
    feats = rng.normal(size=(5, 16)).astype(np.float32)
    path = tmp_path / "v.embs"
    write_embs(path, "roundtrip", ts, feats, label=0)
    seq = embio.read_sequence_file(path)
    assert seq.video_id == "roundtrip"
    assert seq.label == 0
    assert np.array_equal(seq.timestamps, ts)
    assert np.array_equal(seq.features, feats)


def test_write_embs_validation(tmp_path):
    ts = np.array([0.0, 10.0])
    feats = np.zeros((2, 4), dtype=np.float32)
    path = tmp_path / "v.embs"
    with pytest.raises(ValueError, match="video_id"):
        write_embs(path, "", ts, feats)
    with pytest.raises(ValueError, match="label"):
        write_embs(path, "v", ts, feats, label=3)
    with pytest.raises(ValueError, match="strictly increasing"):
        write_embs(path, "v", np.array([10.0, 0.0]), feats)
    with pytest.raises(ValueError, match="features"):
        write_embs(path, "v", ts, np.zeros((3, 4), dtype=np.float32))
    with pytest.raises(ValueError, match="finite"):
        write_embs(path, "v", ts, np.full((2, 4), np.nan, dtype=np.float32))
    assert not path.exists()


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def test_manifest_header_and_rows(tmp_path):
    path = write_manifest([("a.embs", "a", 1, 3), ("b.embs", "b", -1, 1)],
                          tmp_path / "manifest.tsv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == MANIFEST_HEADER == "path\tvideo_id\tlabel\tn_frames"
    assert lines[1] == "a.embs\ta\t1\t3"
    assert lines[2] == "b.embs\tb\t-1\t1"


def test_manifest_requires_rows(tmp_path):
    with pytest.raises(ValueError, match="at least one"):
        write_manifest([], tmp_path / "manifest.tsv")


# ---------------------------------------------------------------------------
# extract_video / extract_cohort
# ---------------------------------------------------------------------------

def test_extract_video_single_frame(tmp_path, frame_png):
    from embexport.backbone import StubBackbone

    video = VideoFrames("solo", [42.0], [frame_png])
    name, n = extract_video(video, StubBackbone(), ExtractorConfig(), tmp_path)
    assert (name, n) == ("solo.embs", 1)
    vid, label, ts, data = parse_embs_bytes((tmp_path / name).read_bytes())
    assert vid == "solo"
    assert label == -1
    assert list(ts) == [42.0]
    assert data.shape == (1, DESCRIPTOR_WIDTH)


def test_extract_video_decodes_only_selected_frames(tmp_path, frame_png):
    # A dense 6-day video sampled every 15 minutes must collapse to 7
    # frames, and only those 7 files may be touched.  All rows point at
    # one real image; if selection ran after decoding, the fake paths
    # would blow up.
    from embexport.backbone import StubBackbone

    hours = [round(0.25 * k, 2) for k in range(577)]  # 0 .. 144 h
    keep = {0.0, 24.0, 48.0, 72.0, 96.0, 120.0, 144.0}
    paths = [
        frame_png if t in keep else tmp_path / f"missing_{k}.png"
        for k, t in enumerate(hours)
    ]
    video = VideoFrames("dense", hours, paths)
    name, n = extract_video(video, StubBackbone(), ExtractorConfig(), tmp_path)
    assert n == 7
    _, _, ts, data = parse_embs_bytes((tmp_path / name).read_bytes())
    assert list(ts) == sorted(keep)
    assert data.shape == (7, DESCRIPTOR_WIDTH)


def test_extract_cohort_end_to_end(cohort_dir, tmp_path):
    out = tmp_path / "out"
    manifest = extract_cohort(
        cohort_dir / "frames.tsv", out, cohort_dir / "stages.tsv"
    )
    lines = manifest.read_text(encoding="utf-8").splitlines()
    assert lines[0] == MANIFEST_HEADER
    assert lines[1] == "a.embs\ta\t1\t3"
    assert lines[2] == "b.embs\tb\t0\t2"
    for fn, t_len, label in [("a.embs", 3, 1), ("b.embs", 2, 0)]:
        vid, lab, ts, data = parse_embs_bytes((out / fn).read_bytes())
        assert lab == label
        assert data.shape == (t_len, DESCRIPTOR_WIDTH)
    sidecar = json.loads((out / "extraction.json").read_text(encoding="utf-8"))
    assert sidecar["descriptor_width"] == DESCRIPTOR_WIDTH
    assert sidecar["backbone_width"] == 768
    assert sidecar["target_side"] == 518
    assert sidecar["image_mean"] == [0.485, 0.456, 0.406]
    assert sidecar["image_std"] == [0.229, 0.224, 0.225]
    assert sidecar["delta_t"] == 24.0
    assert sidecar["m_max"] == 7
    assert sidecar["backbone"].startswith("stub")


def test_cohort_loads_in_downstream_package(cohort_dir, tmp_path):
    embio = pytest.importorskip("seqfusion.embio")
    out = tmp_path / "out"
    manifest = extract_cohort(
        cohort_dir / "frames.tsv", out, cohort_dir / "stages.tsv"
    )
    loaded = embio.load_manifest(manifest)
    seqs = embio.load_sequences(loaded)
    by_id = {s.video_id: s for s in seqs}
    assert set(by_id) == {"a", "b"}
    assert by_id["a"].label == 1
    assert by_id["b"].label == 0
    assert by_id["a"].features.shape == (3, DESCRIPTOR_WIDTH)
    assert by_id["a"].timestamps.tolist() == [0.0, 25.0, 50.0]


def test_cohort_without_annotations_is_unlabeled(cohort_dir, tmp_path):
    out = tmp_path / "out"
    manifest = extract_cohort(cohort_dir / "frames.tsv", out)
    lines = manifest.read_text(encoding="utf-8").splitlines()
    assert lines[1].split("\t")[2] == "-1"
    assert lines[2].split("\t")[2] == "-1"


def test_cohort_missing_annotation_is_an_error(cohort_dir, tmp_path):
    (cohort_dir / "partial.tsv").write_text("a\ttB\t48.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="missing from annotations: b"):
        extract_cohort(cohort_dir / "frames.tsv", tmp_path / "out",
                       cohort_dir / "partial.tsv")


def test_cohort_is_deterministic(cohort_dir, tmp_path):
    m1 = extract_cohort(cohort_dir / "frames.tsv", tmp_path / "o1",
                        cohort_dir / "stages.tsv")
    m2 = extract_cohort(cohort_dir / "frames.tsv", tmp_path / "o2",
                        cohort_dir / "stages.tsv")
    assert m1.read_bytes() == m2.read_bytes()
    for fn in ("a.embs", "b.embs"):
        assert (tmp_path / "o1" / fn).read_bytes() == (tmp_path / "o2" / fn).read_bytes()


def test_extractor_config_invariants():
    with pytest.raises(ValueError, match="target_side"):
        ExtractorConfig(target_side=224)
    with pytest.raises(ValueError, match="delta_t"):
        ExtractorConfig(delta_t=-1.0)
    with pytest.raises(ValueError, match="m_max"):
        ExtractorConfig(m_max=1)


def test_custom_spacing_changes_selection(cohort_dir, tmp_path):
    out = tmp_path / "out"
    config = ExtractorConfig(delta_t=10.0, m_max=3)
    extract_cohort(cohort_dir / "frames.tsv", out, config=config)
    _, _, ts, _ = parse_embs_bytes((out / "a.embs").read_bytes())
    # frames at 0, 25, 50: targets 0 and 10 pick 0 and 25, last appended
    assert list(ts) == [0.0, 25.0, 50.0]
    sidecar = json.loads((out / "extraction.json").read_text(encoding="utf-8"))
    assert sidecar["delta_t"] == 10.0
    assert sidecar["m_max"] == 3


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_export_flow(cohort_dir, tmp_path, capsys):
    out = tmp_path / "out"
    code = run([
        "--frames", str(cohort_dir / "frames.tsv"),
        "--out-dir", str(out),
        "--annotations", str(cohort_dir / "stages.tsv"),
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert printed.startswith("exported 2 videos -> ")
    assert (out / "manifest.tsv").exists()
    assert (out / "extraction.json").exists()


def test_cli_reports_errors(tmp_path, capsys):
    code = run(["--frames", str(tmp_path / "absent.tsv"),
                "--out-dir", str(tmp_path / "out")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_cli_rejects_bad_m_max(cohort_dir, tmp_path, capsys):
    code = run([
        "--frames", str(cohort_dir / "frames.tsv"),
        "--out-dir", str(tmp_path / "out"),
        "--m-max", "1",
    ])
    assert code == 1
    assert "m_max" in capsys.readouterr().err


def test_cli_usage_error_is_exit_2():
    with pytest.raises(SystemExit) as exc:
        run(["--out-dir", "somewhere"])
    assert exc.value.code == 2


def test_module_entrypoint_runs(cohort_dir, tmp_path):
    import subprocess
    import sys

    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "embexport.cli",
         "--frames", str(cohort_dir / "frames.tsv"),
         "--out-dir", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "exported 2 videos" in proc.stdout


# ---------------------------------------------------------------------------
# larger cohort exercising varied sequence lengths
# ---------------------------------------------------------------------------

def test_varied_length_cohort(tmp_path):
    root = tmp_path / "cohort"
    root.mkdir()
    specs = {
        "solo": [10.0],
        "weekly": [0.0, 24.0, 48.0, 72.0, 96.0, 120.0, 144.0],
        "ragged": [3.0, 10.0, 29.0, 50.0, 55.0, 99.0, 131.0],
    }
    rows = []
    for vid, hours in specs.items():
        for k, t in enumerate(hours):
            name = f"{vid}_{k}.png"
            make_frame(root / name, seed=(hash(vid) + k) % 997)
            rows.append(f"{vid}\t{t}\t{name}")
    (root / "frames.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    out = tmp_path / "out"
    manifest = extract_cohort(root / "frames.tsv", out)
    by_id = {}
    for ln in manifest.read_text(encoding="utf-8").splitlines()[1:]:
        path, vid, label, n = ln.split("\t")
        by_id[vid] = (path, int(label), int(n))
    assert by_id["solo"][2] == 1
    assert by_id["weekly"][2] == 7
    assert by_id["ragged"][2] == 5
    _, _, ts, _ = parse_embs_bytes((out / "ragged.embs").read_bytes())
    assert list(ts) == [3.0, 29.0, 55.0, 99.0, 131.0]


def test_read_frame_index_on_written_cohort(cohort_dir):
    videos = read_frame_index(cohort_dir / "frames.tsv")
    assert videos["a"].hours == [0.0, 25.0, 50.0]
    assert all(p.exists() for p in videos["a"].paths)
