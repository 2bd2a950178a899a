"""``mixtag`` command line: synth-data, extract, augment, train, eval, sweep.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from .augment import Batch, MixPolicy, apply_policy
from .dataset import SynthSpec, load_manifest, save_folds, synth_dataset
from .errors import (
    BadAlpha,
    BadRange,
    BadSize,
    ConfigError,
    DataError,
    DegenerateClass,
    EmptyBatch,
    EmptyInput,
    MixtagError,
    NonFiniteGradient,
    NonFiniteLoss,
    ShapeError,
)
from .features import FeatureSet, extract_features, read_features, write_features
from .metrics import per_class_report, report_to_csv, summary_line
from .nn import load_checkpoint, save_checkpoint


def _cmd_synth_data(args) -> int:
    spec = SynthSpec(clip_count=args.clips, class_count=args.classes)
    manifest = synth_dataset(spec, args.seed, args.out)
    print(f"wrote {len(manifest)} clips and manifest to {args.out}")
    return 0


def _cmd_extract(args) -> int:
    manifest = load_manifest(args.manifest)
    fs = extract_features(manifest, n_mels=args.n_mels)
    write_features(fs, args.out)
    print(f"extracted {len(fs)} features ({fs.frames}x{fs.bins}) to {args.out}")
    return 0


def _cmd_augment(args) -> int:
    fs = read_features(args.features)
    policy = MixPolicy(args.policy, args.alpha)
    rng = np.random.default_rng(args.seed)
    mixed = apply_policy(Batch(fs.features, fs.labels), policy, rng)
    write_features(
        FeatureSet(chunk_ids=fs.chunk_ids, labels=mixed.labels, features=mixed.features),
        args.out,
    )
    print(f"applied {policy} to {len(fs)} records -> {args.out}")
    return 0


def _load_config_with_overrides(args) -> harness.TrainConfig:
    values = harness.parse_config_values(Path(args.config).read_text(encoding="utf-8")) \
        if args.config else {}
    for key in ("policy", "alpha", "seed", "features", "folds", "out_dir", "batch_size",
                "patience", "max_epochs", "learning_rate", "n_mels", "fold_count"):
        override = getattr(args, key, None)
        if override is not None:
            values[key] = override
    return harness.build_config(values)


def _cmd_train(args) -> int:
    config = _load_config_with_overrides(args)
    if not config.features:
        raise ConfigError("no feature container: set 'features' in the config or pass --features")
    data = read_features(config.features)
    folds = harness.resolve_folds(config, data)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_folds(folds, out / "folds.csv")

    if args.fold is not None:
        result = harness.train_fold(config, args.fold, data, folds)
        _, val_idx = harness.split_fold(data, folds, args.fold)
        scores, labels = harness.evaluate(result.params, result.stats, data, val_idx)
        report = per_class_report(scores, labels, allow_degenerate=True)
        _write_fold_outputs(out, args.fold, result, report)
        print(summary_line(report))
        return 0

    report = harness.cross_validate(
        config, data=data, folds=folds,
        fold_hook=lambda fold, result: _write_fold_outputs(out, fold, result, result.report),
    )
    (out / "report.csv").write_text(report_to_csv(report.averaged), encoding="utf-8")
    for warning in report.averaged.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(summary_line(report.averaged))
    print(f"pooled {summary_line(report.pooled)}")
    return 0


def _write_fold_outputs(out_dir: Path, fold: int, result, report) -> None:
    save_checkpoint(out_dir / f"fold{fold}_model.ckpt", result.state, result.stats)
    harness.export_history(result.history, out_dir / f"fold{fold}_history.csv")
    if report is not None:
        (out_dir / f"fold{fold}_report.csv").write_text(report_to_csv(report), encoding="utf-8")


def _cmd_eval(args) -> int:
    state, stats = load_checkpoint(args.model)
    if stats is None:
        raise DataError(f"{args.model}: checkpoint carries no normalization statistics")
    data = read_features(args.features)
    scores, labels = harness.evaluate(state.params, stats, data)
    report = per_class_report(scores, labels, allow_degenerate=True)
    csv_text = report_to_csv(report)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    else:
        print(csv_text, end="")
    print(summary_line(report))
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config_with_overrides(args)
    alphas = tuple(float(x) for x in args.alphas.split(",")) if args.alphas \
        else config.alpha_grid
    reports = harness.alpha_sweep(config, alphas)
    csv_text = harness.sweep_to_csv(reports)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(csv_text, encoding="utf-8")
    for rep in reports:
        print(f"alpha={rep.policy.alpha:g} {summary_line(rep.averaged)}")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixtag",
                                     description="sample-mixed audio tagging toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True, help="output directory for WAVs + manifest.csv")
    p.add_argument("--clips", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=4, help="number of active classes (<= 7)")
    p.set_defaults(func=_cmd_synth_data)

    p = sub.add_parser("extract", help="extract log-mel features from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output feature container path")
    p.add_argument("--n-mels", type=int, default=128, dest="n_mels")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("augment", help="apply a mixing policy to a feature container")
    p.add_argument("--features", required=True)
    p.add_argument("--policy", required=True,
                   choices=["none", "mixup", "samplepairing", "mixup_lp", "extrapolation"])
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_augment)

    for name, help_text in (("train", "cross-validated training"),
                            ("sweep", "cross-validation per alpha value")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--policy",
                       choices=["none", "mixup", "samplepairing", "mixup_lp", "extrapolation"])
        p.add_argument("--alpha", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--features")
        p.add_argument("--folds")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--patience", type=int)
        p.add_argument("--max-epochs", type=int, dest="max_epochs")
        p.add_argument("--learning-rate", type=float, dest="learning_rate")
        p.add_argument("--n-mels", type=int, dest="n_mels")
        p.add_argument("--fold-count", type=int, dest="fold_count")
        if name == "train":
            p.add_argument("--fold", type=int, help="train a single fold")
            p.set_defaults(func=_cmd_train)
        else:
            p.add_argument("--alphas", help="comma-separated alpha grid")
            p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a feature container")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="write the report CSV here instead of stdout")
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, BadAlpha) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ShapeError, DegenerateClass, EmptyInput, EmptyBatch,
            BadSize, BadRange) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NonFiniteLoss, NonFiniteGradient) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except MixtagError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
