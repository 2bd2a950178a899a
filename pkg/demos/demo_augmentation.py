"""Show what each sample-mixing operator does to a minibatch.

Two toy 'features' are mixed under every policy with fixed lambda values
so the arithmetic is easy to follow, then a real batch is mixed with
lambda ~ Beta(1.5, 1.5) and the label behavior is compared.

Run: python demos/demo_augmentation.py
"""

import numpy as np

from mixtag.augment import (
    Batch,
    MixPolicy,
    apply_policy,
    extrapolate_batch,
    mixup_batch,
    mixup_lp_batch,
    sample_beta,
    sample_pairing_batch,
)

# -- arithmetic on a two-sample batch ---------------------------------------

x = np.array([[2.0, 0.0], [0.0, 2.0]])
y = np.zeros((2, 7))
y[0, 0] = 1.0  # first sample is class 'c'
y[1, 1] = 1.0  # second is class 'm'
batch = Batch(x, y)
swap = [1, 0]

print("x_i =", x[0], " y_i =", y[0])
print("x_j =", x[1], " y_j =", y[1])
print()

out = mixup_batch(batch, 1.0, np.random.default_rng(0), lam=0.25, partner=swap)
print("mixup, lam=0.25:         x_n =", out.features[0], " y_n =", out.labels[0])

out = sample_pairing_batch(batch, np.random.default_rng(0), partner=swap)
print("SamplePairing:           x_n =", out.features[0], " y_n =", out.labels[0])

out = mixup_lp_batch(batch, 1.0, np.random.default_rng(0), lam=0.25, partner=swap)
print("mixup_lp, lam=0.25->0.75: x_n =", out.features[0], " y_n =", out.labels[0])

out = extrapolate_batch(batch, 1.0, np.random.default_rng(0), lam=0.5, partner=swap)
print("extrapolation, lam=0.5:  x_n =", out.features[0], " y_n =", out.labels[0])

# -- lambda distribution ------------------------------------------------------

print()
for alpha in (0.1, 1.0, 1.5, 5.0):
    draws = sample_beta(alpha, np.random.default_rng(1), size=20000)
    print(f"Beta({alpha}, {alpha}): mean={draws.mean():.3f} var={draws.var():.4f} "
          f"(closed form {1 / (4 * (2 * alpha + 1)):.4f})")

# -- realistic batch: which policies keep labels hard? ------------------------

rng = np.random.default_rng(2)
big = Batch(
    features=rng.standard_normal((44, 124, 4)),
    labels=(rng.random((44, 7)) < 0.3).astype(float),
)
print()
for policy in (MixPolicy("mixup", 1.5), MixPolicy("samplepairing"),
               MixPolicy("mixup_lp", 1.5), MixPolicy("extrapolation", 1.5)):
    out = apply_policy(big, policy, np.random.default_rng(3))
    soft = np.logical_and(out.labels > 0, out.labels < 1).sum()
    print(f"{str(policy):20s} soft label entries: {soft:4d}   "
          f"feature range [{out.features.min():+.2f}, {out.features.max():+.2f}]")
