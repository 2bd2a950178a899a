"""Sample-mixed minibatch augmentation.

Four operators combine a minibatch with its shuffled version:

- mixup:         x = lam*x_i + (1-lam)*x_j,        y = lam*y_i + (1-lam)*y_j
- SamplePairing: x = 0.5*x_i + 0.5*x_j,            y = y_i
- mixup_lp:      x = lam*x_i + (1-lam)*x_j,        y = y_i   (lam clamped >= 0.5)
- extrapolation: x = (1+lam)*x_i - lam*x_j,        y = y_i   (no clipping)

with lam ~ Beta(alpha, alpha). One lam is drawn per minibatch by default;
the partner permutation is uniform with fixed points allowed. All operators
consume randomness in the order: partner permutation, then lam, so results
are reproducible from the generator state alone.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadAlpha, EmptyBatch, ShapeError

POLICY_KINDS = ("none", "mixup", "samplepairing", "mixup_lp", "extrapolation")


@dataclass
class Batch:
    """Aligned features (N, frames, bins) and label vectors (N, classes)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"features ({self.features.shape[0]}) and labels "
                f"({self.labels.shape[0]}) disagree on batch size"
            )

    def __len__(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class MixPolicy:
    """Tagged augmentation choice; ``alpha == 0`` always means identity."""

    kind: str
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise BadAlpha(f"unknown policy kind {self.kind!r}")
        if self.alpha < 0:
            raise BadAlpha(f"alpha must be >= 0, got {self.alpha}")

    def __str__(self):
        if self.kind in ("none", "samplepairing"):
            return self.kind
        return f"{self.kind}({self.alpha:g})"


def _gamma_mt(alpha: float, rng, n: int) -> np.ndarray:
    """n Gamma(alpha, 1) variates via Marsaglia-Tsang squeeze rejection.

    For alpha < 1 the standard boost Gamma(alpha) = Gamma(alpha+1) * U^(1/alpha)
    is applied on top of the alpha >= 1 sampler.
    """
    boost = None
    a = alpha
    if a < 1.0:
        boost = rng.random(n) ** (1.0 / a)
        a = a + 1.0
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(n, dtype=np.float64)
    todo = np.arange(n)
    while todo.size:
        x = rng.standard_normal(todo.size)
        v = (1.0 + c * x) ** 3
        u = rng.random(todo.size)
        positive = v > 0.0
        squeeze = positive & (u < 1.0 - 0.0331 * x**4)
        full = np.zeros_like(squeeze)
        need = positive & ~squeeze
        if need.any():
            full[need] = np.log(u[need]) < 0.5 * x[need] ** 2 + d * (
                1.0 - v[need] + np.log(v[need])
            )
        accept = squeeze | full
        out[todo[accept]] = d * v[accept]
        todo = todo[~accept]
    if boost is not None:
        out *= boost
    return out


def sample_beta(alpha: float, rng, size: int | None = None):
    """Beta(alpha, alpha) variate(s) from two Gamma(alpha, 1) draws.

    Returns a scalar when ``size`` is None, else an array of that length.
    Callers must route alpha == 0 to the identity policy before sampling.
    """
    if alpha <= 0:
        raise BadAlpha(f"alpha must be > 0 to sample, got {alpha}")
    n = 1 if size is None else int(size)
    g1 = _gamma_mt(alpha, rng, n)
    g2 = _gamma_mt(alpha, rng, n)
    total = g1 + g2
    # Guard against double underflow at very small alpha.
    while (total == 0.0).any():
        redo = total == 0.0
        g1[redo] = _gamma_mt(alpha, rng, int(redo.sum()))
        g2[redo] = _gamma_mt(alpha, rng, int(redo.sum()))
        total = g1 + g2
    lam = g1 / total
    return float(lam[0]) if size is None else lam


def _check_nonempty(batch: Batch):
    if len(batch) == 0:
        raise EmptyBatch("cannot augment an empty batch")


def _partner(batch: Batch, rng, partner):
    if partner is None:
        return rng.permutation(len(batch))
    return np.asarray(partner)


def mixup_batch(batch: Batch, alpha: float, rng, *, lam=None, partner=None,
                per_example: bool = False) -> Batch:
    """Convex-combine the batch with its shuffled version (features and labels).

    One lam per minibatch unless ``per_example``; ``alpha == 0`` returns the
    batch unchanged without consuming randomness. ``lam``/``partner`` override
    the random draws for inspection and testing.
    """
    if alpha < 0:
        raise BadAlpha(f"alpha must be >= 0, got {alpha}")
    _check_nonempty(batch)
    if alpha == 0:
        return batch
    j = _partner(batch, rng, partner)
    if lam is None:
        lam = sample_beta(alpha, rng, size=len(batch) if per_example else None)
    lam_f = np.reshape(lam, (-1,) + (1,) * (batch.features.ndim - 1))
    lam_y = np.reshape(lam, (-1,) + (1,) * (batch.labels.ndim - 1))
    return Batch(
        features=lam_f * batch.features + (1.0 - lam_f) * batch.features[j],
        labels=lam_y * batch.labels + (1.0 - lam_y) * batch.labels[j],
    )


def sample_pairing_batch(batch: Batch, rng, *, partner=None) -> Batch:
    """Average the batch with its shuffled version, keeping the first labels."""
    _check_nonempty(batch)
    j = _partner(batch, rng, partner)
    return Batch(
        features=0.5 * batch.features + 0.5 * batch.features[j],
        labels=batch.labels.copy(),
    )


def mixup_lp_batch(batch: Batch, alpha: float, rng, *, lam=None, partner=None) -> Batch:
    """Mixup-style feature interpolation that keeps the first sample's label.

    lam is clamped to max(lam, 1-lam) so the label donor always dominates
    the mixture.
    """
    if alpha <= 0:
        raise BadAlpha(f"alpha must be > 0, got {alpha}")
    _check_nonempty(batch)
    j = _partner(batch, rng, partner)
    if lam is None:
        lam = sample_beta(alpha, rng)
    lam = max(float(lam), 1.0 - float(lam))
    return Batch(
        features=lam * batch.features + (1.0 - lam) * batch.features[j],
        labels=batch.labels.copy(),
    )


def extrapolate_batch(batch: Batch, alpha: float, rng, *, lam=None, partner=None) -> Batch:
    """Extrapolate beyond the segment between paired samples, labels preserved.

    Features are not clipped; extrapolated values may leave the input range.
    """
    if alpha <= 0:
        raise BadAlpha(f"alpha must be > 0, got {alpha}")
    _check_nonempty(batch)
    j = _partner(batch, rng, partner)
    if lam is None:
        lam = sample_beta(alpha, rng)
    lam = float(lam)
    return Batch(
        features=(1.0 + lam) * batch.features - lam * batch.features[j],
        labels=batch.labels.copy(),
    )


def apply_policy(batch: Batch, policy: MixPolicy, rng, *, per_example: bool = False) -> Batch:
    """Dispatch to the operator selected by ``policy``.

    ``none`` and any alpha == 0 policy return the batch unchanged and consume
    no randomness.
    """
    if policy.kind == "none":
        return batch
    if policy.kind == "samplepairing":
        return sample_pairing_batch(batch, rng)
    if policy.alpha == 0:
        return batch
    if policy.kind == "mixup":
        return mixup_batch(batch, policy.alpha, rng, per_example=per_example)
    if policy.kind == "mixup_lp":
        return mixup_lp_batch(batch, policy.alpha, rng)
    if policy.kind == "extrapolation":
        return extrapolate_batch(batch, policy.alpha, rng)
    raise BadAlpha(f"unknown policy kind {policy.kind!r}")  # pragma: no cover
