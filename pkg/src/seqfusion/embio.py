"""Embedding-sequence files, dataset manifests, splits and synthetic data.

The on-disk unit is one ``.embs`` file per video: an ordered list of
per-frame feature vectors with hour timestamps and a class label.
A dataset is a tab-separated manifest pointing at many such files.
Everything here is pure or touches only its own file handles.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EMBS_MAGIC = b"EMBS"
EMBS_VERSION = 1
MANIFEST_HEADER = ["path", "video_id", "label", "n_frames"]


class FormatError(ValueError):
    """Raised when a file does not follow the expected binary or text layout."""


def _rng(seed: int) -> np.random.Generator:
    # SeedSequence rejects negative ints; fold them into the u64 range
    return np.random.Generator(np.random.PCG64(seed & 0xFFFFFFFFFFFFFFFF))


# ---------------------------------------------------------------------------
# core record
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingSequence:
    """One video's ordered per-frame feature vectors.

    ``timestamps`` are hours post insemination (float64, strictly
    increasing); ``features`` is a (T, D) float32 array; ``label`` is a
    class id >= 0, or -1 for unlabeled.
    """

    video_id: str
    timestamps: np.ndarray
    features: np.ndarray
    label: int = -1

    def __post_init__(self) -> None:
        self.timestamps = np.ascontiguousarray(self.timestamps, dtype=np.float64)
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)

    @property
    def length(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        if not self.video_id:
            raise ValueError("video_id must be a non-empty string")
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ValueError("features must be a non-empty (T, D) array")
        if self.feature_dim == 0:
            raise ValueError("feature dimension must be positive")
        if self.timestamps.shape != (self.length,):
            raise ValueError(
                f"timestamp count {self.timestamps.shape} does not match "
                f"{self.length} frames"
            )
        if self.length > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(self.timestamps < 0):
            raise ValueError("timestamps must be >= 0 hours")
        if not np.all(np.isfinite(self.timestamps)) or not np.all(
            np.isfinite(self.features)
        ):
            raise ValueError("timestamps and features must be finite")
        if self.label < -1:
            raise ValueError("label must be >= 0, or -1 for unlabeled")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingSequence):
            return NotImplemented
        return (
            self.video_id == other.video_id
            and self.label == other.label
            and self.timestamps.shape == other.timestamps.shape
            and self.features.shape == other.features.shape
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.features, other.features)
        )


# ---------------------------------------------------------------------------
# EMBS binary format
# little-endian: magic "EMBS", version u8=1, id_len u16 + utf-8 id,
# label i32 (-1 = unlabeled), D u32, T u32, timestamps f64[T], data f32[T*D]
# ---------------------------------------------------------------------------

def write_sequence_file(seq: EmbeddingSequence, path: str | Path) -> None:
    """Write ``seq`` so that :func:`read_sequence_file` restores it exactly.

    The sequence is validated before the file is opened; an invalid
    sequence leaves no file behind.
    """
    seq.validate()
    id_bytes = seq.video_id.encode("utf-8")
    if len(id_bytes) > 0xFFFF:
        raise ValueError("video_id longer than 65535 bytes")
    header = struct.pack(
        f"<4sBH{len(id_bytes)}siII",
        EMBS_MAGIC,
        EMBS_VERSION,
        len(id_bytes),
        id_bytes,
        seq.label,
        seq.feature_dim,
        seq.length,
    )
    ts = seq.timestamps.astype("<f8").tobytes()
    data = seq.features.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ts)
        fh.write(data)


def read_sequence_file(path: str | Path) -> EmbeddingSequence:
    """Parse one .embs file, checking magic, version and payload size."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 5 or blob[:4] != EMBS_MAGIC:
        raise FormatError(f"{path}: not an EMBS file (bad magic)")
    version = blob[4]
    if version != EMBS_VERSION:
        raise FormatError(f"{path}: unsupported EMBS version {version}")
    off = 5
    if len(blob) < off + 2:
        raise FormatError(f"{path}: truncated header")
    (id_len,) = struct.unpack_from("<H", blob, off)
    off += 2
    if len(blob) < off + id_len + 12:
        raise FormatError(f"{path}: truncated header")
    video_id = blob[off : off + id_len].decode("utf-8")
    off += id_len
    label, dim, n_frames = struct.unpack_from("<iII", blob, off)
    off += 12
    expected = off + n_frames * 8 + n_frames * dim * 4
    if len(blob) < expected:
        raise FormatError(
            f"{path}: truncated payload ({len(blob)} bytes, expected {expected})"
        )
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing bytes")
    timestamps = np.frombuffer(blob, dtype="<f8", count=n_frames, offset=off).copy()
    off += n_frames * 8
    features = (
        np.frombuffer(blob, dtype="<f4", count=n_frames * dim, offset=off)
        .reshape(n_frames, dim)
        .copy()
    )
    seq = EmbeddingSequence(video_id, timestamps, features, label)
    try:
        seq.validate()
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return seq


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    path: str
    video_id: str
    label: int
    n_frames: int


@dataclass
class DatasetManifest:
    """Index of sequence files; ``root`` resolves relative entry paths."""

    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = Path(".")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def class_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for e in self.entries:
            counts[e.label] = counts.get(e.label, 0) + 1
        return counts

    def video_ids(self) -> list[str]:
        return [e.video_id for e in self.entries]

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def validate(self, check_files: bool = True) -> None:
        ids = self.video_ids()
        if len(set(ids)) != len(ids):
            dupes = sorted({v for v in ids if ids.count(v) > 1})
            raise ValueError(f"duplicate video_ids in manifest: {dupes}")
        if sum(self.class_counts.values()) != len(self.entries):
            raise ValueError("class_counts do not sum to the entry count")
        if check_files:
            for e in self.entries:
                if not self.resolve(e).is_file():
                    raise ValueError(f"manifest refers to missing file: {e.path}")


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = ["\t".join(MANIFEST_HEADER)]
    for e in manifest.entries:
        lines.append(f"{e.path}\t{e.video_id}\t{e.label}\t{e.n_frames}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty manifest")
    header = lines[0].split("\t")
    if header != MANIFEST_HEADER:
        raise FormatError(
            f"{path}: manifest header {header!r} != expected {MANIFEST_HEADER!r}"
        )
    entries = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split("\t")
        if len(parts) != 4:
            raise FormatError(f"{path}:{i}: expected 4 tab-separated fields")
        try:
            entries.append(
                ManifestEntry(parts[0], parts[1], int(parts[2]), int(parts[3]))
            )
        except ValueError as exc:
            raise FormatError(f"{path}:{i}: {exc}") from exc
    manifest = DatasetManifest(entries, root=path.parent)
    manifest.validate(check_files=check_files)
    return manifest


def load_sequences(manifest: DatasetManifest) -> list[EmbeddingSequence]:
    """Read every file in the manifest, cross-checking labels."""
    out = []
    for e in manifest.entries:
        seq = read_sequence_file(manifest.resolve(e))
        if seq.label != e.label:
            raise ValueError(
                f"{e.path}: file label {seq.label} disagrees with manifest "
                f"label {e.label}"
            )
        out.append(seq)
    return out


# ---------------------------------------------------------------------------
# train/test split
# ---------------------------------------------------------------------------

@dataclass
class SplitSpec:
    train_ratio: float
    seed: int
    train_ids: list[str]
    test_ids: list[str]


def split_dataset(
    manifest: DatasetManifest,
    ratio: float,
    seed: int,
    stratify: bool = False,
) -> SplitSpec:
    """Deterministic random split into round(ratio*N) train ids, rest test.

    With ``stratify`` the rounding happens per class instead, so the
    overall sizes can differ from the unstratified ones by rounding.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if len(manifest) == 0:
        raise ValueError("cannot split an empty manifest")
    rng = _rng(seed)

    def pick(ids: list[str]) -> tuple[list[str], list[str]]:
        n_train = int(math.floor(ratio * len(ids) + 0.5))
        order = rng.permutation(len(ids))
        chosen = [ids[i] for i in order]
        return chosen[:n_train], chosen[n_train:]

    if stratify:
        train_ids: list[str] = []
        test_ids: list[str] = []
        by_class: dict[int, list[str]] = {}
        for e in manifest.entries:
            by_class.setdefault(e.label, []).append(e.video_id)
        for label in sorted(by_class):
            tr, te = pick(by_class[label])
            train_ids.extend(tr)
            test_ids.extend(te)
    else:
        train_ids, test_ids = pick(manifest.video_ids())

    if not train_ids or not test_ids:
        raise ValueError(
            f"degenerate split: {len(train_ids)} train / {len(test_ids)} test"
        )
    return SplitSpec(ratio, seed, train_ids, test_ids)


# ---------------------------------------------------------------------------
# generic CSV time-series import
# ---------------------------------------------------------------------------

@dataclass
class CsvSchema:
    """Column roles for :func:`import_csv_timeseries`.

    ``feature_cols=None`` takes every column that is not the id, time or
    label column, in file order.
    """

    id_col: str
    time_col: str
    feature_cols: list[str] | None = None
    label_col: str | None = None


def import_csv_timeseries(
    path: str | Path, schema: CsvSchema
) -> list[EmbeddingSequence]:
    """Group CSV rows into one sequence per series id, ordered by timestamp.

    The label column, when present, must be constant within a series and
    integer-valued; without one every sequence is unlabeled (-1).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if any(cell.strip() for cell in row)]
    if not rows:
        raise FormatError(f"{path}: no data rows")

    col_index = {name: i for i, name in enumerate(header)}
    for role, name in (("id", schema.id_col), ("time", schema.time_col)):
        if name not in col_index:
            raise FormatError(f"{path}: missing {role} column {name!r}")
    if schema.label_col is not None and schema.label_col not in col_index:
        raise FormatError(f"{path}: missing label column {schema.label_col!r}")
    reserved = {schema.id_col, schema.time_col, schema.label_col}
    if schema.feature_cols is None:
        feature_cols = [h for h in header if h not in reserved]
    else:
        for name in schema.feature_cols:
            if name not in col_index:
                raise FormatError(f"{path}: missing feature column {name!r}")
        feature_cols = list(schema.feature_cols)
    if not feature_cols:
        raise FormatError(f"{path}: schema selects no feature columns")

    id_i = col_index[schema.id_col]
    t_i = col_index[schema.time_col]
    feat_is = [col_index[c] for c in feature_cols]
    label_i = col_index[schema.label_col] if schema.label_col else None

    series: dict[str, dict] = {}
    order: list[str] = []
    for rownum, row in enumerate(rows, start=2):
        if len(row) < len(header):
            raise FormatError(f"{path}:{rownum}: row has too few columns")
        sid = row[id_i].strip()
        try:
            t = float(row[t_i])
        except ValueError:
            raise FormatError(
                f"{path}:{rownum}: non-numeric timestamp {row[t_i]!r}"
            ) from None
        feats = []
        for ci, cname in zip(feat_is, feature_cols):
            try:
                feats.append(float(row[ci]))
            except ValueError:
                raise FormatError(
                    f"{path}:{rownum}: non-numeric value {row[ci]!r} "
                    f"in feature column {cname!r}"
                ) from None
        label = -1
        if label_i is not None:
            raw = float(row[label_i])
            if raw != int(raw):
                raise FormatError(
                    f"{path}:{rownum}: non-integer label {row[label_i]!r}"
                )
            label = int(raw)
        if sid not in series:
            series[sid] = {"times": [], "feats": [], "label": label}
            order.append(sid)
        rec = series[sid]
        if t in rec["times"]:
            raise FormatError(
                f"{path}:{rownum}: duplicate (series, timestamp) pair "
                f"({sid!r}, {t})"
            )
        if label_i is not None and rec["label"] != label:
            raise FormatError(
                f"{path}:{rownum}: series {sid!r} has conflicting labels "
                f"{rec['label']} and {label}"
            )
        rec["times"].append(t)
        rec["feats"].append(feats)

    out = []
    for sid in order:
        rec = series[sid]
        idx = np.argsort(np.asarray(rec["times"]), kind="stable")
        ts = np.asarray(rec["times"], dtype=np.float64)[idx]
        feats = np.asarray(rec["feats"], dtype=np.float32)[idx]
        seq = EmbeddingSequence(sid, ts, feats, rec["label"])
        seq.validate()
        out.append(seq)
    return out


# ---------------------------------------------------------------------------
# synthetic datasets
# ---------------------------------------------------------------------------

SYNTH_PATTERNS = ("separable", "long_range")

# long_range geometry: both endpoints are shifted by +-LONG_RANGE_SHIFT on
# every feature; the intermediate frames are pure noise, drawn louder than
# the endpoints (LONG_RANGE_MID_SIGMA) so that carrying the first frame's
# sign through the middle of the sequence is genuinely hard for a
# recurrence while direct pairwise comparison of the endpoints is not.
LONG_RANGE_SHIFT = 3.0
LONG_RANGE_MID_SIGMA = 4.0


def synth_sequences(
    n: int, dim: int, length: int, pattern: str, seed: int
) -> list[EmbeddingSequence]:
    """Generate ``n`` labeled sequences with a known decision rule.

    ``separable``: the class shifts every feature of every frame by +-1
    with bounded uniform noise, so the sign of the per-sequence mean
    classifies perfectly by construction.

    ``long_range``: the first and last frame are shifted by a random
    sign each, agreeing exactly when the label is 1; middle frames are
    pure noise, drawn several times louder than the endpoint jitter.
    Neither endpoint's sign alone carries any label information, only
    their relation does, and nothing between them helps.

    Labels are balanced: floor(n/2) zeros, ceil(n/2) ones.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if length < 2:
        raise ValueError("length must be >= 2")
    if pattern not in SYNTH_PATTERNS:
        raise ValueError(f"pattern must be one of {SYNTH_PATTERNS}")
    rng = _rng(seed)
    labels = np.zeros(n, dtype=np.int64)
    labels[n // 2 :] = 1
    rng.shuffle(labels)
    timestamps = 24.0 * np.arange(length, dtype=np.float64)

    out = []
    for i in range(n):
        label = int(labels[i])
        if pattern == "separable":
            shift = 1.0 if label == 1 else -1.0
            frames = shift + rng.uniform(-0.9, 0.9, size=(length, dim))
        else:
            frames = rng.normal(0.0, LONG_RANGE_MID_SIGMA, size=(length, dim))
            first = float(rng.choice([-1.0, 1.0]))
            last = first if label == 1 else -first
            frames[0] = rng.normal(0.0, 1.0, size=dim) + LONG_RANGE_SHIFT * first
            frames[-1] = rng.normal(0.0, 1.0, size=dim) + LONG_RANGE_SHIFT * last
        out.append(
            EmbeddingSequence(
                f"synth{i:05d}",
                timestamps,
                frames.astype(np.float32),
                label,
            )
        )
    return out


def write_dataset(
    sequences: list[EmbeddingSequence], out_dir: str | Path
) -> tuple[DatasetManifest, Path]:
    """Write one .embs file per sequence plus a manifest.tsv in ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for seq in sequences:
        fname = f"{seq.video_id}.embs"
        write_sequence_file(seq, out_dir / fname)
        entries.append(ManifestEntry(fname, seq.video_id, seq.label, seq.length))
    manifest = DatasetManifest(entries, root=out_dir)
    manifest_path = out_dir / "manifest.tsv"
    write_manifest(manifest, manifest_path)
    return manifest, manifest_path
