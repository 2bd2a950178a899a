"""Equal error rate from first principles.

Builds a small score set, prints the full ROC sweep, locates the EER
crossing, and reproduces the summary arithmetic of a published per-class
result row (average + cross-class sample variance).

Run: python demos/demo_metrics.py
"""

import numpy as np

from mixtag.metrics import EerReport, eer, per_class_report, roc_points, summary_line

scores = np.array([0.8, 0.6, 0.4, 0.2])
labels = np.array([1, 0, 1, 0])
print("scores:", scores, "labels:", labels)
print(f"{'threshold':>10} {'FPR':>6} {'FNR':>6}")
for t, fpr, fnr in roc_points(scores, labels):
    print(f"{t:>10.2f} {fpr:>6.2f} {fnr:>6.2f}")
print(f"EER = {eer(scores, labels):.3f}  (FPR meets FNR at threshold 0.6)\n")

# a separable ranker scores 0
print("perfect ranker EER:", eer([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]))

# the published row shape: 7 per-class EERs -> average + sample variance
row = [0.10, 0.14, 0.11, 0.03, 0.10, 0.01, 0.20]
report = EerReport(row)
print(f"\nper-class EERs {row}")
print(f"average {report.average:.4f} (prints {report.average:.2f}), "
      f"sample variance {report.variance * 1e3:.2f}e-3")

# end to end: random multi-label scores
rng = np.random.default_rng(0)
y = (rng.random((400, 7)) < 0.3).astype(float)
good = y * rng.uniform(0.6, 1.0, (400, 7)) + (1 - y) * rng.uniform(0.0, 0.45, (400, 7))
noisy = np.clip(good + rng.normal(0, 0.25, good.shape), 0, 1)
for name, s in (("sharp scores", good), ("noisy scores", noisy)):
    rep = per_class_report(s, y)
    print(f"\n{name}: {summary_line(rep)}")
    print("per-class:", np.round(rep.per_class, 3))
