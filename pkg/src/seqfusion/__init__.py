"""Sequence classification for sparse, irregularly timed embedding streams.

The package covers the full path from embedding files on disk to
aggregated evaluation reports: binary sequence files and dataset
manifests, time-based frame selection and zero padding, a stacked
LSTM + multi-head self-attention network with an exact from-scratch
backward pass, Adam training with early stopping, and the usual
classification metrics.  Everything is deterministic given a seed.
"""

from seqfusion.embio import (
    CsvSchema,
    DatasetManifest,
    EmbeddingSequence,
    FormatError,
    ManifestEntry,
    SplitSpec,
    import_csv_timeseries,
    load_manifest,
    load_sequences,
    read_sequence_file,
    split_dataset,
    synth_sequences,
    write_dataset,
    write_manifest,
    write_sequence_file,
)
from seqfusion.pipeline import (
    BLASTOCYST_STAGES,
    STAGE_ORDER,
    PaddedBatch,
    StageAnnotation,
    build_batch,
    cohort_blastulation_curve,
    derive_label,
    earliest_blastulation,
    pad_sequence,
    parse_annotation_file,
    select_frame_indices,
    select_frames,
)
from seqfusion.model import (
    ForwardTrace,
    LstmLayerParams,
    MhaParams,
    ModelParams,
    attention_summary,
    classify,
    clone_model,
    forward,
    fuse_and_normalize,
    init_model,
    load_model,
    lstm_cell_step,
    multi_head_attention,
    named_parameters,
    project_qkv,
    save_model,
    scaled_dot_attention,
    stacked_lstm_forward,
)
from seqfusion.training import (
    AdamState,
    ArchConfig,
    GradCheckReport,
    TrainConfig,
    TrainHistory,
    TrainResult,
    adam_init,
    adam_step,
    backward,
    class_weights,
    compare_gradients,
    grad_check,
    train,
    weighted_bce,
    weighted_cross_entropy,
    weighted_loss,
)
from seqfusion.metrics import (
    ConfusionMatrix,
    EvalReport,
    RocCurve,
    RunAggregate,
    accuracy,
    aggregate_runs,
    confusion_matrix,
    evaluate_model,
    evaluate_probs,
    format_mean_std,
    format_report_kv,
    format_report_text,
    format_roc_points,
    mean_std,
    multi_run,
    predict_classes,
    prf_per_class,
    roc_auc,
)

__version__ = "0.1.0"

__all__ = [
    "BLASTOCYST_STAGES",
    "STAGE_ORDER",
    "AdamState",
    "ArchConfig",
    "ConfusionMatrix",
    "CsvSchema",
    "DatasetManifest",
    "EmbeddingSequence",
    "EvalReport",
    "FormatError",
    "ForwardTrace",
    "GradCheckReport",
    "LstmLayerParams",
    "ManifestEntry",
    "MhaParams",
    "ModelParams",
    "PaddedBatch",
    "RocCurve",
    "RunAggregate",
    "SplitSpec",
    "StageAnnotation",
    "TrainConfig",
    "TrainHistory",
    "TrainResult",
    "accuracy",
    "adam_init",
    "adam_step",
    "aggregate_runs",
    "attention_summary",
    "backward",
    "build_batch",
    "class_weights",
    "classify",
    "clone_model",
    "cohort_blastulation_curve",
    "compare_gradients",
    "confusion_matrix",
    "derive_label",
    "earliest_blastulation",
    "evaluate_model",
    "evaluate_probs",
    "format_mean_std",
    "format_report_kv",
    "format_report_text",
    "format_roc_points",
    "forward",
    "fuse_and_normalize",
    "grad_check",
    "import_csv_timeseries",
    "init_model",
    "load_manifest",
    "load_model",
    "load_sequences",
    "lstm_cell_step",
    "mean_std",
    "multi_head_attention",
    "multi_run",
    "named_parameters",
    "pad_sequence",
    "parse_annotation_file",
    "predict_classes",
    "prf_per_class",
    "project_qkv",
    "read_sequence_file",
    "roc_auc",
    "save_model",
    "scaled_dot_attention",
    "select_frame_indices",
    "select_frames",
    "split_dataset",
    "stacked_lstm_forward",
    "synth_sequences",
    "train",
    "weighted_bce",
    "weighted_cross_entropy",
    "weighted_loss",
    "write_dataset",
    "write_manifest",
    "write_sequence_file",
]
