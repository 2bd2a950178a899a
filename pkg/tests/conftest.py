import numpy as np
import pytest

from mixtag.dataset import SynthSpec, synth_dataset
from mixtag.features import FeatureSet


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small on-disk synthetic dataset shared by ingestion/CLI tests."""
    out = tmp_path_factory.mktemp("tinydata")
    manifest = synth_dataset(SynthSpec(clip_count=24, class_count=3), seed=11, out_dir=out)
    return manifest, out


def fake_features(n=40, frames=20, bins=4, n_classes_active=3, seed=0):
    """Separable fabricated features: class c lights up bin c (mod bins).

    Much faster than rendering audio; used wherever a trainable FeatureSet
    is needed but the DSP front end is not under test.
    """
    rng = np.random.default_rng(seed)
    labels = np.zeros((n, 7))
    feats = rng.standard_normal((n, frames, bins)) * 0.3
    for i in range(n):
        active = rng.choice(n_classes_active, size=rng.integers(1, 3), replace=False)
        for c in active:
            labels[i, c] = 1.0
            feats[i, :, c % bins] += 2.0
    ids = [f"c{i:03d}" for i in range(n)]
    return FeatureSet(chunk_ids=ids, labels=labels, features=feats)
