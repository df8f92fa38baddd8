"""Command-line entry point.

Subcommands cover the whole pipeline: dataset import and synthesis,
training, evaluation, prediction with attention summaries, gradient
checking, cohort statistics, and repeated-run aggregation.  Exit codes:
0 success, 1 domain failure (bad data, failed check), 2 usage failure.
All randomness flows from --seed, so identical invocations on identical
inputs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from seqfusion import embio, metrics, model as model_mod, pipeline, training


def _add_arch_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--layers", type=int, default=2, help="LSTM layer count")
    sub.add_argument("--hidden", type=int, default=256, help="hidden units per layer")
    sub.add_argument("--heads", type=int, default=8, help="attention heads")
    sub.add_argument("--dropout", type=float, default=0.3)
    sub.add_argument("--mask-padding", action="store_true",
                     help="hide padded key positions from attention")
    sub.add_argument("--no-attention", action="store_true",
                     help="plain recurrent baseline (no attention block)")
    sub.add_argument("--l-max", type=int, default=7, help="padded sequence length")


def _add_train_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--lr", type=float, default=1e-3)
    sub.add_argument("--batch", type=int, default=16)
    sub.add_argument("--epochs", type=int, default=20)
    sub.add_argument("--patience", type=int, default=20)
    sub.add_argument("--val-fraction", type=float, default=0.1)
    sub.add_argument("--stratify", action="store_true",
                     help="stratify the validation holdout by class")
    sub.add_argument("--no-class-weights", action="store_true",
                     help="plain unweighted loss")
    _add_arch_flags(sub)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqfusion",
        description="sparse frame-sequence classification toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="convert a long-format CSV into sequence files")
    p.add_argument("--csv", required=True)
    p.add_argument("--schema", required=True,
                   help="column mapping, e.g. id=series,time=t,label=y"
                        " (optional features=a|b|c)")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--len", type=int, default=7, dest="length")
    p.add_argument("--pattern", choices=embio.SYNTH_PATTERNS, default="separable")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", help="fit a model on a manifest of sequence files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--history", help="optional per-epoch TSV")
    _add_train_flags(p)

    p = sub.add_parser("evaluate", help="report metrics for a model on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--report", help="write the human-readable report here")
    p.add_argument("--kv", help="write machine-readable key=value lines here")
    p.add_argument("--roc", help="write fpr/tpr points here")

    p = sub.add_parser("predict", help="per-sequence probabilities and attention")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True,
                   help="a sequence file or a manifest of them")
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("gradcheck", help="compare analytic and numeric gradients")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--tiny", action="store_true",
                       help="built-in small setup (the default)")
    group.add_argument("--config",
                       help="custom setup, e.g. dim=8,len=3,hidden=4x4,heads=2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--samples-per-matrix", type=int, default=4)

    p = sub.add_parser("stats", help="cohort timing table from stage annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--grid", required=True, help="start:end:step in hours")

    p = sub.add_parser("multirun", help="repeat split/train/evaluate and aggregate")
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", help="write the aggregate report here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.add_argument("--fix-split", action="store_true",
                   help="reuse one split across runs (only init/order vary)")
    p.add_argument("--threshold", type=float, default=0.5)
    _add_train_flags(p)

    return parser


def parse_args(argv: list[str]) -> argparse.Namespace:
    return build_parser().parse_args(argv)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _parse_schema(spec: str) -> embio.CsvSchema:
    fields: dict[str, str] = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ValueError(f"schema entry {part!r} is not key=value")
        key, val = part.split("=", 1)
        fields[key.strip()] = val.strip()
    unknown = set(fields) - {"id", "time", "label", "features"}
    if unknown:
        raise ValueError(f"unknown schema keys: {sorted(unknown)}")
    for required in ("id", "time"):
        if required not in fields:
            raise ValueError(f"schema is missing {required}=<column>")
    features = None
    if "features" in fields:
        features = tuple(c for c in fields["features"].split("|") if c)
        if not features:
            raise ValueError("features= given but no column names")
    return embio.CsvSchema(
        id_col=fields["id"],
        time_col=fields["time"],
        feature_cols=features,
        label_col=fields.get("label"),
    )


def _parse_grid(spec: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid {spec!r} is not start:end:step")
    start, end, step = (float(x) for x in parts)
    if step <= 0:
        raise ValueError("grid step must be positive")
    if end < start:
        raise ValueError("grid end is before start")
    count = int(np.floor((end - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def _configs_from_args(args) -> tuple[training.TrainConfig, training.ArchConfig]:
    config = training.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        validation_fraction=args.val_fraction,
        stratify_validation=args.stratify,
        patience=args.patience,
        class_weighting="uniform" if args.no_class_weights else "balanced",
        seed=args.seed,
    )
    arch = training.ArchConfig(
        hidden_dims=(args.hidden,) * args.layers,
        heads=args.heads,
        dropout_rate=args.dropout,
        mask_padding=args.mask_padding,
        attention=not args.no_attention,
    )
    return config, arch


def _load_batch(manifest_path: str, l_max: int) -> pipeline.PaddedBatch:
    manifest = embio.load_manifest(manifest_path)
    sequences = embio.load_sequences(manifest)
    return pipeline.build_batch(sequences, l_max)


def _parse_check_config(spec: str, seed: int):
    fields = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ValueError(f"gradcheck config entry {part!r} is not key=value")
        key, val = part.split("=", 1)
        fields[key.strip()] = val.strip()
    unknown = set(fields) - {"dim", "len", "hidden", "heads", "classes", "samples"}
    if unknown:
        raise ValueError(f"unknown gradcheck config keys: {sorted(unknown)}")
    return training.make_check_setup(
        dim=int(fields.get("dim", 8)),
        t_len=int(fields.get("len", 3)),
        hidden=tuple(int(h) for h in fields.get("hidden", "4x4").split("x")),
        heads=int(fields.get("heads", 2)),
        n_classes=int(fields.get("classes", 2)),
        n_samples=int(fields.get("samples", 4)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------

def _cmd_import(args) -> int:
    schema = _parse_schema(args.schema)
    sequences = embio.import_csv_timeseries(args.csv, schema)
    manifest, manifest_path = embio.write_dataset(sequences, args.out_dir)
    print(f"imported {len(manifest.entries)} sequences -> {manifest_path}")
    return 0


def _cmd_synth(args) -> int:
    sequences = embio.synth_sequences(
        args.n, args.dim, args.length, args.pattern, args.seed
    )
    manifest, manifest_path = embio.write_dataset(sequences, args.out_dir)
    counts = manifest.class_counts
    print(
        f"wrote {len(manifest.entries)} {args.pattern} sequences -> {manifest_path} "
        f"(labels {dict(sorted(counts.items()))})"
    )
    return 0


def _cmd_train(args) -> int:
    config, arch = _configs_from_args(args)
    batch = _load_batch(args.manifest, args.l_max)
    result = training.train(batch, config, arch)
    model_mod.save_model(result.model, args.out)
    if args.history:
        result.history.to_tsv(args.history)
    h = result.history
    last = h.epochs[-1]
    print(
        f"trained {len(h.epochs)} epochs (best {h.best_epoch}, "
        f"early stop: {'yes' if h.stopped_early else 'no'})"
    )
    print(f"final train_loss={last.train_loss:.6g} val_loss={last.val_loss:.6g}")
    print(f"model -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    net = model_mod.load_model(args.model)
    batch = _load_batch(args.manifest, net.l_max)
    report = metrics.evaluate_model(net, batch, args.threshold)
    if args.report:
        Path(args.report).write_text(
            metrics.format_report_text(report), encoding="utf-8"
        )
    if args.kv:
        Path(args.kv).write_text(metrics.format_report_kv(report), encoding="utf-8")
    if args.roc:
        if report.roc is None:
            raise ValueError("no ROC curve for this evaluation (not binary)")
        Path(args.roc).write_text(
            metrics.format_roc_points(report.roc), encoding="utf-8"
        )
    sys.stdout.write(metrics.format_report_kv(report))
    return 0


def _cmd_predict(args) -> int:
    net = model_mod.load_model(args.model)
    input_path = Path(args.input)
    if input_path.suffix == ".tsv":
        manifest = embio.load_manifest(input_path)
        sequences = embio.load_sequences(manifest)
    else:
        sequences = [embio.read_sequence_file(input_path)]
    print("video_id\tprobability\tpredicted\timportance")
    for seq in sequences:
        batch = pipeline.build_batch([seq], net.l_max)
        probs, trace = model_mod.forward(batch, net, mode="eval")
        if net.n_classes == 2:
            prob_field = f"{float(probs[0]):.6f}"
            predicted = int(probs[0] >= args.threshold)
        else:
            prob_field = ",".join(f"{p:.6f}" for p in probs[0])
            predicted = int(np.argmax(probs[0]))
        if net.attention_enabled:
            importance = model_mod.attention_summary(
                trace, int(batch.valid_lengths[0])
            )
            imp_field = ",".join(f"{v:.6f}" for v in importance)
        else:
            imp_field = "-"
        print(f"{seq.video_id}\t{prob_field}\t{predicted}\t{imp_field}")
    return 0


def _cmd_gradcheck(args) -> int:
    if args.config:
        net, batch = _parse_check_config(args.config, args.seed)
    else:
        net, batch = None, None
    report = training.grad_check(
        net,
        batch,
        epsilon=args.epsilon,
        samples_per_matrix=args.samples_per_matrix,
        tolerance=args.tolerance,
        seed=args.seed,
    )
    print(f"checked {report.n_coordinates} coordinates")
    print(f"max relative error: {report.max_rel_error:.3e}")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def _cmd_stats(args) -> int:
    videos = pipeline.parse_annotation_file(args.annotations)
    cohort = pipeline.annotation_cohort(videos)
    grid = _parse_grid(args.grid)
    curve = pipeline.cohort_blastulation_curve(cohort, grid)
    print("hours\tproportion\tobserved")
    for t, proportion, active in curve:
        print(f"{t:.10g}\t{proportion:.10g}\t{active}")
    return 0


def _cmd_multirun(args) -> int:
    config, arch = _configs_from_args(args)
    manifest = embio.load_manifest(args.manifest)
    sequences = embio.load_sequences(manifest)
    aggregate, reports = metrics.multi_run(
        sequences,
        config,
        arch,
        runs=args.runs,
        split_ratio=args.split_ratio,
        l_max=args.l_max,
        threshold=args.threshold,
        fix_split=args.fix_split,
    )
    lines = [f"runs: {aggregate.runs}"]
    for name in aggregate.metrics:
        lines.append(f"{name}: {aggregate.formatted(name)}")
    text = "\n".join(lines) + "\n"
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


_DISPATCH = {
    "import": _cmd_import,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "gradcheck": _cmd_gradcheck,
    "stats": _cmd_stats,
    "multirun": _cmd_multirun,
}


def run(args: argparse.Namespace) -> int:
    """Dispatch a parsed command; domain failures come back as exit 1."""
    try:
        return _DISPATCH[args.command](args)
    except (embio.FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
