"""Evaluation metrics: confusion matrix, precision/recall/F1, ROC/AUC,
single-model reports and multi-run mean +- std aggregation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from seqfusion.model import ModelParams, forward
from seqfusion.pipeline import PaddedBatch, build_batch


def predict_classes(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Decision rule: binary p >= threshold -> 1; multiclass argmax.

    np.argmax already breaks ties toward the lowest class index.
    """
    probs = np.asarray(probs)
    if probs.ndim == 1:
        return (probs >= threshold).astype(np.int64)
    return np.argmax(probs, axis=1).astype(np.int64)


@dataclass
class ConfusionMatrix:
    """counts[i, j] = samples of true class i predicted as class j."""

    counts: np.ndarray
    threshold: float = 0.5

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def validate(self) -> None:
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {c.shape}")
        if np.any(c < 0):
            raise ValueError("negative counts")


def confusion_matrix(
    probs: np.ndarray,
    labels: np.ndarray,
    threshold: float = 0.5,
    n_classes: int | None = None,
) -> ConfusionMatrix:
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.shape[0] != labels.shape[0]:
        raise ValueError(
            f"{probs.shape[0]} predictions but {labels.shape[0]} labels"
        )
    preds = predict_classes(probs, threshold)
    if n_classes is None:
        n_classes = 2 if probs.ndim == 1 else probs.shape[1]
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError(f"labels outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts, threshold)


def zero_denominator_flags(cm: ConfusionMatrix) -> list[str]:
    """Which per-class metrics were forced to 0 by an empty denominator."""
    flags = []
    for c in range(cm.n_classes):
        if cm.counts[:, c].sum() == 0:
            flags.append(f"class {c}: precision undefined (nothing predicted), set to 0")
        if cm.counts[c, :].sum() == 0:
            flags.append(f"class {c}: recall undefined (no true samples), set to 0")
    return flags


def prf_per_class(
    cm: ConfusionMatrix,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class precision, recall and F1; zero denominators give 0.

    A RuntimeWarning is raised for every undefined value (also listed by
    :func:`zero_denominator_flags` so reports can carry the flags).
    """
    cm.validate()
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)
    for message in zero_denominator_flags(cm):
        warnings.warn(message, RuntimeWarning, stacklevel=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        pr_sum = precision + recall
        f1 = np.where(pr_sum > 0, 2.0 * precision * recall / pr_sum, 0.0)
    return precision, recall, f1


def accuracy(cm: ConfusionMatrix) -> float:
    cm.validate()
    total = cm.total
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts) / total)


@dataclass
class RocCurve:
    """ROC sweep: one point per distinct score plus the (0, 0) sentinel."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_auc(probs: np.ndarray, labels: np.ndarray) -> RocCurve:
    """ROC points and trapezoidal AUC for binary scores.

    Equal scores are grouped at a single threshold, which makes the
    trapezoidal area agree with the rank statistic that counts ties as
    one half.  Requires both classes present.
    """
    scores = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    if scores.ndim != 1:
        raise ValueError("ROC is defined for binary scores (1-D probabilities)")
    if scores.shape[0] != y.shape[0]:
        raise ValueError(f"{scores.shape[0]} scores but {y.shape[0]} labels")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = (y[order] == 1).astype(np.float64)
    tp = np.cumsum(pos)
    fp = np.cumsum(1.0 - pos)
    # keep only the last index of each tie group
    last = np.r_[s[1:] != s[:-1], True]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    thresholds = np.r_[np.inf, s[last]]
    area = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) * 0.5))
    return RocCurve(fpr, tpr, thresholds, area)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    cm: ConfusionMatrix
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float
    roc: RocCurve | None
    flags: list[str] = field(default_factory=list)

    @property
    def auc(self) -> float | None:
        return None if self.roc is None else self.roc.auc


def evaluate_probs(
    probs: np.ndarray,
    labels: np.ndarray,
    threshold: float = 0.5,
    n_classes: int | None = None,
) -> EvalReport:
    """Full report from raw probabilities (binary gets a ROC curve)."""
    cm = confusion_matrix(probs, labels, threshold, n_classes)
    flags = zero_denominator_flags(cm)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        precision, recall, f1 = prf_per_class(cm)
    roc = None
    p = np.asarray(probs)
    if p.ndim == 1 and len(set(np.asarray(labels).tolist())) == 2:
        roc = roc_auc(p, labels)
    return EvalReport(cm, precision, recall, f1, accuracy(cm), roc, flags)


def evaluate_model(
    model: ModelParams, batch: PaddedBatch, threshold: float = 0.5
) -> EvalReport:
    labels = np.asarray(batch.labels)
    if np.any(labels < 0):
        raise ValueError("evaluation needs labels for every sequence")
    probs, _ = forward(batch, model, mode="eval")
    return evaluate_probs(probs, labels, threshold, model.n_classes)


def format_report_text(report: EvalReport) -> str:
    """Human-readable multi-line report with stable formatting."""
    k = report.cm.n_classes
    lines = [f"samples: {report.cm.total}", f"threshold: {report.cm.threshold:g}"]
    lines.append("confusion matrix (rows = true, cols = predicted):")
    width = max(5, len(str(int(report.cm.counts.max(initial=0)))) + 2)
    header = "      " + "".join(f"{f'pred{j}':>{width}}" for j in range(k))
    lines.append(header)
    for i in range(k):
        row = "".join(f"{int(v):>{width}}" for v in report.cm.counts[i])
        lines.append(f"true{i} {row}")
    lines.append("per-class metrics:")
    for c in range(k):
        lines.append(
            f"  class {c}: precision {report.precision[c]:.4f}  "
            f"recall {report.recall[c]:.4f}  f1 {report.f1[c]:.4f}"
        )
    lines.append(f"accuracy: {report.accuracy:.4f}")
    if report.roc is not None:
        lines.append(f"auc: {report.roc.auc:.4f}")
    for flag in report.flags:
        lines.append(f"note: {flag}")
    return "\n".join(lines) + "\n"


def format_report_kv(report: EvalReport) -> str:
    """Machine-readable key=value lines, one metric per line."""
    k = report.cm.n_classes
    lines = [
        f"samples={report.cm.total}",
        f"threshold={report.cm.threshold:.10g}",
        f"accuracy={report.accuracy:.10g}",
    ]
    if report.roc is not None:
        lines.append(f"auc={report.roc.auc:.10g}")
    for i in range(k):
        for j in range(k):
            lines.append(f"cm.{i}.{j}={int(report.cm.counts[i, j])}")
    for c in range(k):
        lines.append(f"precision.{c}={report.precision[c]:.10g}")
        lines.append(f"recall.{c}={report.recall[c]:.10g}")
        lines.append(f"f1.{c}={report.f1[c]:.10g}")
    lines.append(f"flags={len(report.flags)}")
    return "\n".join(lines) + "\n"


def format_roc_points(roc: RocCurve) -> str:
    """Two-column fpr/tpr text block for external plotting."""
    lines = ["fpr\ttpr"]
    for x, y in zip(roc.fpr, roc.tpr):
        lines.append(f"{x:.10g}\t{y:.10g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# multi-run aggregation
# ---------------------------------------------------------------------------

def mean_std(values: list[float] | np.ndarray) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation; a single value has std 0."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values to aggregate")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1))


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.3f} ± {std:.3f}"


@dataclass
class RunAggregate:
    """mean/std per metric over R runs, keyed by metric name."""

    runs: int
    metrics: dict[str, tuple[float, float]]

    def formatted(self, name: str) -> str:
        mean, std = self.metrics[name]
        return format_mean_std(mean, std)


def aggregate_runs(reports: list[EvalReport]) -> RunAggregate:
    if not reports:
        raise ValueError("no runs to aggregate")
    k = reports[0].cm.n_classes
    metrics: dict[str, tuple[float, float]] = {}
    metrics["accuracy"] = mean_std([r.accuracy for r in reports])
    if all(r.roc is not None for r in reports):
        metrics["auc"] = mean_std([r.roc.auc for r in reports])
    for c in range(k):
        metrics[f"precision.{c}"] = mean_std([r.precision[c] for r in reports])
        metrics[f"recall.{c}"] = mean_std([r.recall[c] for r in reports])
        metrics[f"f1.{c}"] = mean_std([r.f1[c] for r in reports])
    return RunAggregate(len(reports), metrics)


def multi_run(
    sequences: list,
    config,
    arch=None,
    runs: int = 10,
    split_ratio: float = 0.8,
    l_max: int = 7,
    threshold: float = 0.5,
    fix_split: bool = False,
) -> tuple[RunAggregate, list[EvalReport]]:
    """Repeat split + train + evaluate R times and aggregate.

    Run r derives every random choice from ``config.seed + r``: the
    train/test split (unless ``fix_split`` pins it to ``config.seed``),
    the weight initialization, shuffling and dropout.  Returns the
    aggregate plus the per-run reports in run order.
    """
    from seqfusion.embio import DatasetManifest, load_sequences
    from seqfusion.training import train

    if runs < 1:
        raise ValueError("need at least one run")
    if isinstance(sequences, DatasetManifest):
        sequences = load_sequences(sequences)
    reports = []
    for r in range(runs):
        seed = config.seed + r
        split_seed = config.seed if fix_split else seed
        order = _split_indices(len(sequences), split_ratio, split_seed)
        train_seqs = [sequences[i] for i in order[0]]
        test_seqs = [sequences[i] for i in order[1]]
        train_batch = build_batch(train_seqs, l_max)
        test_batch = build_batch(test_seqs, l_max)
        run_config = replace(config, seed=seed)
        result = train(train_batch, run_config, arch)
        reports.append(evaluate_model(result.model, test_batch, threshold))
    return aggregate_runs(reports), reports


def _split_indices(
    n: int, ratio: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    from seqfusion.embio import _rng

    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must lie strictly between 0 and 1")
    perm = _rng(seed).permutation(n)
    n_train = int(np.floor(ratio * n + 0.5))
    if n_train == 0 or n_train == n:
        raise ValueError(f"split leaves an empty side (n={n}, ratio={ratio})")
    return perm[:n_train], perm[n_train:]
