"""ROC / equal-error-rate evaluation and per-class reporting.

EER is the error rate at the ROC operating point where the false-positive
and false-negative rates are equal; it is located on the piecewise-linear
polyline through the ROC points (one per distinct score value plus infinite
sentinels), with tied scores collapsed to a single threshold.
"""

import numpy as np

from .dataset import CLASS_NAMES
from .errors import DegenerateClass, ShapeError


def roc_points(scores, labels):
    """ROC sweep points as an array of (threshold, FPR, FNR) rows.

    A sample is predicted positive when its score is >= the threshold;
    thresholds run over all distinct score values plus -inf/+inf sentinels,
    so FPR decreases from 1 to 0 and FNR increases from 0 to 1.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ShapeError(f"scores {s.shape} and labels {y.shape} must be equal 1-d")
    pos = np.sort(s[y > 0.5])
    neg = np.sort(s[y <= 0.5])
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateClass(None, "need at least one positive and one negative")
    thresholds = np.concatenate(([-np.inf], np.unique(s), [np.inf]))
    # predicted positive iff score >= t
    fp = len(neg) - np.searchsorted(neg, thresholds, side="left")
    fn = np.searchsorted(pos, thresholds, side="left")
    return np.column_stack([thresholds, fp / len(neg), fn / len(pos)])


def eer(scores, labels) -> float:
    """Equal error rate via linear interpolation between adjacent ROC points.

    If a sweep point has FPR == FNR exactly, that value is returned;
    otherwise the crossing of the interpolated FNR and FPR segments is.
    """
    points = roc_points(scores, labels)
    fpr, fnr = points[:, 1], points[:, 2]
    diff = fnr - fpr  # monotone non-decreasing, from -1 to +1
    exact = np.nonzero(diff == 0.0)[0]
    if exact.size:
        return float(fpr[exact[0]])
    i = int(np.searchsorted(diff > 0, True)) - 1  # last index with diff < 0
    frac = -diff[i] / (diff[i + 1] - diff[i])
    return float(fpr[i] + frac * (fpr[i + 1] - fpr[i]))


class EerReport:
    """Per-class EERs with their mean and cross-class sample variance."""

    def __init__(self, per_class, class_names=CLASS_NAMES, warnings=(),
                 average=None, variance=None):
        self.per_class = np.asarray(per_class, dtype=np.float64)
        self.class_names = tuple(class_names)
        self.warnings = list(warnings)
        valid = self.per_class[~np.isnan(self.per_class)]
        if average is None:
            average = float(valid.mean()) if valid.size else float("nan")
        if variance is None:
            variance = float(valid.var(ddof=1)) if valid.size > 1 else 0.0
        self.average = average
        self.variance = variance

    def __repr__(self):
        return f"EerReport(avg={self.average:.4f}, var={self.variance:.3e})"


def per_class_report(scores, labels, class_names=CLASS_NAMES, allow_degenerate=False) -> EerReport:
    """Columnwise EER over an (N, C) score/label pair.

    The average is the arithmetic mean of the per-class EERs and the
    variance is the sample variance (divide by C-1) across them, matching
    the published per-row summary arithmetic. A class without both label
    values raises DegenerateClass, or is recorded as NaN with a warning when
    ``allow_degenerate`` is set.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 2 or s.shape != y.shape:
        raise ShapeError(f"scores {s.shape} and labels {y.shape} must be equal (N, C)")
    if s.shape[1] != len(class_names):
        raise ShapeError(f"expected {len(class_names)} classes, got {s.shape[1]}")
    per_class = np.full(s.shape[1], np.nan)
    warnings = []
    for c in range(s.shape[1]):
        try:
            per_class[c] = eer(s[:, c], y[:, c])
        except DegenerateClass:
            if not allow_degenerate:
                raise DegenerateClass(c, f"class {class_names[c]!r} has a single label value") from None
            warnings.append(f"class {class_names[c]!r} degenerate: skipped from averages")
    return EerReport(per_class, class_names, warnings)


def report_to_csv(report: EerReport) -> str:
    """Render ``class,eer`` rows plus avg/var footer rows."""
    lines = ["class,eer"]
    for name, value in zip(report.class_names, report.per_class):
        lines.append(f"{name},{_fmt(value)}")
    lines.append(f"avg,{_fmt(report.average)}")
    lines.append(f"var,{_fmt(report.variance)}")
    return "\n".join(lines) + "\n"


def summary_line(report: EerReport) -> str:
    """Machine-readable one-liner for standard output."""
    return f"EER_AVG={_fmt(report.average)} EER_VAR={_fmt(report.variance)}"


def _fmt(value: float) -> str:
    return "nan" if np.isnan(value) else f"{value:.6f}"
