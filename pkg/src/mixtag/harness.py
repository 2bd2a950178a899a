"""Experiment orchestration: fold training with early stopping, k-fold
cross-validation, the alpha sweep, and the flat config-file surface.

Seed discipline: one master seed; every consumer (fold shuffling, dropout,
mixing draws, model init) gets its own derived stream so components stay
independently reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import features as features_mod
from .augment import Batch, MixPolicy, apply_policy
from .dataset import CLASS_NAMES, load_folds, make_folds
from .errors import ConfigError, DataError, NonFiniteLoss
from .features import FeatureSet, read_features
from .metrics import EerReport, per_class_report
from .nn import TrainState, adam_step, clone_params, init_model, loss_and_grads, model_forward

PAPER_ALPHA_GRID = (0.0, 0.1, 0.5, 1.0, 1.5, 2.0, 5.0)


def derive_rng(seed: int, *stream) -> np.random.Generator:
    """Independent generator for (seed, stream ids)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(s) for s in stream]))


# Stream ids for derive_rng; fold index is appended per stream.
_STREAM_INIT, _STREAM_SHUFFLE, _STREAM_AUGMENT, _STREAM_DROPOUT = 1, 2, 3, 4


@dataclass
class TrainConfig:
    batch_size: int = 44
    patience: int = 20
    max_epochs: int = 200
    policy: MixPolicy = field(default_factory=lambda: MixPolicy("none"))
    seed: int = 0
    learning_rate: float = 1e-3
    n_mels: int = 128
    alpha_grid: tuple = PAPER_ALPHA_GRID
    fold_count: int = 5
    per_example_lambda: bool = False
    features: str | None = None
    manifest: str | None = None
    folds: str | None = None
    out_dir: str = "runs"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2 (mixing needs a partner), got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")


_CONFIG_PARSERS = {
    "batch_size": int,
    "patience": int,
    "max_epochs": int,
    "policy": str,
    "alpha": float,
    "seed": int,
    "learning_rate": float,
    "n_mels": int,
    "alpha_grid": lambda v: tuple(float(x) for x in v.split(",") if x.strip()),
    "fold_count": int,
    "per_example_lambda": lambda v: v.lower() in ("1", "true", "yes"),
    "features": str,
    "manifest": str,
    "folds": str,
    "out_dir": str,
}


def parse_config_values(text: str) -> dict:
    """Key/value pairs of a flat ``key = value`` file (`#` starts a comment)."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        parser = _CONFIG_PARSERS.get(key)
        if parser is None:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return values


def parse_config(text: str) -> TrainConfig:
    return build_config(parse_config_values(text))


def build_config(values: dict) -> TrainConfig:
    """Assemble a TrainConfig from a key/value mapping (policy + alpha merge)."""
    values = dict(values)
    kind = values.pop("policy", "none")
    alpha = values.pop("alpha", 0.0)
    try:
        policy = MixPolicy(kind, float(alpha))
    except Exception as exc:
        raise ConfigError(str(exc)) from None
    try:
        return TrainConfig(policy=policy, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> TrainConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(text)


class EarlyStopping:
    """Stop after `patience` consecutive epochs without val-loss improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.counter = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.counter = 0
            return True
        self.counter += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.counter >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]


def export_history(history: TrainingHistory, path) -> None:
    """Write per-epoch train/val loss and accuracy as CSV."""
    if not history.records:
        raise DataError("history is empty")
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
    for r in history.records:
        lines.append(
            f"{r.epoch},{r.train_loss:.8f},{r.train_acc:.8f},{r.val_loss:.8f},{r.val_acc:.8f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_history(text: str) -> TrainingHistory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "epoch,train_loss,train_acc,val_loss,val_acc":
        raise DataError("not a history CSV")
    records = []
    for ln in lines[1:]:
        e, tl, ta, vl, va = ln.split(",")
        records.append(EpochRecord(int(e), float(tl), float(ta), float(vl), float(va)))
    return TrainingHistory(records)


def per_label_accuracy(probs, labels) -> float:
    """Fraction of (sample, label) slots matching at threshold 0.5."""
    return float(((probs > 0.5) == (np.asarray(labels) > 0.5)).mean())


def split_fold(data: FeatureSet, folds, eval_fold: int):
    """Positions of training and held-out chunks; every chunk must be assigned."""
    train_idx, val_idx = [], []
    for i, cid in enumerate(data.chunk_ids):
        if cid not in folds.assignments:
            raise DataError(f"chunk {cid!r} missing from fold assignments")
        (val_idx if folds.assignments[cid] == eval_fold else train_idx).append(i)
    if not train_idx or not val_idx:
        raise DataError(f"fold {eval_fold} leaves an empty train or validation set")
    return np.asarray(train_idx), np.asarray(val_idx)


@dataclass
class FoldResult:
    state: TrainState
    history: TrainingHistory
    stats: features_mod.FeatureStats
    report: EerReport | None = None

    @property
    def params(self):
        return self.state.params


def train_fold(config: TrainConfig, fold: int, data: FeatureSet, folds) -> FoldResult:
    """Train on all folds but ``fold``, early-stopping on that fold's loss.

    Augmentation touches training batches only; normalization statistics are
    computed from the training portion alone. Returns the state snapshot from
    the best-validation-loss epoch.
    """
    train_idx, val_idx = split_fold(data, folds, fold)
    stats = features_mod.compute_stats(data.features[train_idx])
    x_train = features_mod.normalize(data.features[train_idx], stats)
    y_train = data.labels[train_idx]
    x_val = features_mod.normalize(data.features[val_idx], stats)
    y_val = data.labels[val_idx]

    init_rng = derive_rng(config.seed, _STREAM_INIT, fold)
    shuffle_rng = derive_rng(config.seed, _STREAM_SHUFFLE, fold)
    augment_rng = derive_rng(config.seed, _STREAM_AUGMENT, fold)
    dropout_rng = derive_rng(config.seed, _STREAM_DROPOUT, fold)

    params = init_model(data.bins, n_classes=y_train.shape[1], rng=init_rng)
    state = TrainState.new(params)
    stopper = EarlyStopping(config.patience)
    history = TrainingHistory()
    best_state = None
    n_train = len(train_idx)

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n_train)
        loss_sum = acc_sum = seen = 0
        for start in range(0, n_train, config.batch_size):
            bidx = order[start : start + config.batch_size]
            batch = Batch(x_train[bidx], y_train[bidx])
            mixed = apply_policy(batch, config.policy, augment_rng,
                                 per_example=config.per_example_lambda)
            loss, grads, probs = loss_and_grads(
                state.params, mixed.features, mixed.labels, training=True, rng=dropout_rng
            )
            adam_step(state, grads, lr=config.learning_rate)
            loss_sum += loss * len(bidx)
            # Accuracy is judged against the original, pre-mix hard labels.
            acc_sum += per_label_accuracy(probs, batch.labels) * len(bidx)
            seen += len(bidx)
        train_loss = loss_sum / seen
        train_acc = acc_sum / seen

        val_probs = model_forward(x_val, state.params, training=False)
        val_loss, _ = _bce(val_probs, y_val)
        val_acc = per_label_accuracy(val_probs, y_val)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise NonFiniteLoss(f"non-finite loss at epoch {epoch}")
        history.records.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))

        if stopper.update(epoch, val_loss):
            best_state = TrainState(
                params=clone_params(state.params),
                m={k: v.copy() for k, v in state.m.items()},
                v={k: v.copy() for k, v in state.v.items()},
                step=state.step,
            )
        if stopper.should_stop:
            break

    return FoldResult(state=best_state, history=history, stats=stats)


def _bce(probs, labels):
    from .nn import bce_loss

    return bce_loss(probs, labels)


def evaluate(params, stats, data: FeatureSet, indices=None) -> tuple[np.ndarray, np.ndarray]:
    """Inference scores (and labels) for a subset of a feature set."""
    subset = data if indices is None else data.subset(indices)
    x = features_mod.normalize(subset.features, stats)
    return model_forward(x, params, training=False), subset.labels


@dataclass
class ExperimentReport:
    policy: MixPolicy
    seed: int
    fold_reports: list[EerReport]
    averaged: EerReport
    pooled: EerReport
    histories: list[TrainingHistory]
    wall_clock: float = 0.0


def resolve_folds(config: TrainConfig, data: FeatureSet):
    if config.folds:
        return load_folds(config.folds)
    return make_folds(data.chunk_ids, config.fold_count, config.seed)


def cross_validate(config: TrainConfig, data: FeatureSet | None = None, folds=None,
                   fold_hook=None) -> ExperimentReport:
    """Full k-fold protocol: train on k-1 folds, report EER on the held-out one.

    Degenerate classes (no positives or no negatives in a fold) are skipped
    from that fold's averages with a warning record. The averaged report's
    summary values are arithmetic means of the per-fold values; a pooled
    report over all held-out scores is attached as a secondary diagnostic.
    """
    t0 = time.perf_counter()
    if data is None:
        if not config.features:
            raise ConfigError("config.features must point at a feature container")
        data = read_features(config.features)
    if folds is None:
        folds = resolve_folds(config, data)
    class_names = CLASS_NAMES if data.labels.shape[1] == len(CLASS_NAMES) else tuple(
        f"class{i}" for i in range(data.labels.shape[1])
    )

    fold_reports, histories = [], []
    all_scores, all_labels = [], []
    for fold in range(folds.fold_count):
        result = train_fold(config, fold, data, folds)
        _, val_idx = split_fold(data, folds, fold)
        scores, labels = evaluate(result.params, result.stats, data, val_idx)
        report = per_class_report(scores, labels, class_names, allow_degenerate=True)
        result.report = report
        fold_reports.append(report)
        histories.append(result.history)
        all_scores.append(scores)
        all_labels.append(labels)
        if fold_hook is not None:
            fold_hook(fold, result)

    averaged = EerReport(
        per_class=_nanmean_columns([r.per_class for r in fold_reports]),
        class_names=class_names,
        warnings=[w for r in fold_reports for w in r.warnings],
        average=float(np.mean([r.average for r in fold_reports])),
        variance=float(np.mean([r.variance for r in fold_reports])),
    )
    pooled = per_class_report(
        np.concatenate(all_scores), np.concatenate(all_labels), class_names,
        allow_degenerate=True,
    )
    return ExperimentReport(
        policy=config.policy,
        seed=config.seed,
        fold_reports=fold_reports,
        averaged=averaged,
        pooled=pooled,
        histories=histories,
        wall_clock=time.perf_counter() - t0,
    )


def _nanmean_columns(rows):
    stacked = np.stack(rows)
    out = np.full(stacked.shape[1], np.nan)
    for c in range(stacked.shape[1]):
        col = stacked[:, c]
        valid = col[~np.isnan(col)]
        if valid.size:
            out[c] = valid.mean()
    return out


def alpha_sweep(config: TrainConfig, alphas, data: FeatureSet | None = None,
                folds=None) -> list[ExperimentReport]:
    """One cross-validation per alpha with the same base seed.

    The swept operator is the config policy when it takes an alpha, else
    mixup; alpha == 0 rows run the identity augmentation.
    """
    if len(alphas) == 0:
        raise ConfigError("alpha grid is empty")
    kind = config.policy.kind if config.policy.kind in ("mixup", "mixup_lp", "extrapolation") \
        else "mixup"
    if data is None:
        if not config.features:
            raise ConfigError("config.features must point at a feature container")
        data = read_features(config.features)
    if folds is None:
        folds = resolve_folds(config, data)
    reports = []
    for alpha in alphas:
        cfg = replace(config, policy=MixPolicy(kind, float(alpha)))
        reports.append(cross_validate(cfg, data=data, folds=folds))
    return reports


def sweep_to_csv(reports: list[ExperimentReport]) -> str:
    """Render sweep results as one row per alpha, shaped like a results table."""
    names = reports[0].averaged.class_names
    lines = ["policy,alpha," + ",".join(names) + ",avg,var,pooled_avg,seed,wall_clock"]
    for rep in reports:
        per_class = ",".join(_fmt(v) for v in rep.averaged.per_class)
        lines.append(
            f"{rep.policy.kind},{rep.policy.alpha:g},{per_class},"
            f"{_fmt(rep.averaged.average)},{_fmt(rep.averaged.variance)},"
            f"{_fmt(rep.pooled.average)},{rep.seed},{rep.wall_clock:.3f}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class SweepRow:
    policy: str
    alpha: float
    per_class: np.ndarray
    avg: float
    var: float
    pooled_avg: float
    seed: int
    wall_clock: float


def parse_sweep_csv(text: str) -> list[SweepRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("policy,alpha,"):
        raise DataError("not a sweep CSV")
    n_classes = len(lines[0].split(",")) - 7
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append(
            SweepRow(
                policy=parts[0],
                alpha=float(parts[1]),
                per_class=np.array([float(x) for x in parts[2 : 2 + n_classes]]),
                avg=float(parts[2 + n_classes]),
                var=float(parts[3 + n_classes]),
                pooled_avg=float(parts[4 + n_classes]),
                seed=int(parts[5 + n_classes]),
                wall_clock=float(parts[6 + n_classes]),
            )
        )
    return rows


def _fmt(value: float) -> str:
    return "nan" if np.isnan(value) else f"{value:.6f}"
