import math

import mpmath
import numpy as np
import pytest

from mixtag.dataset import CLIP_SAMPLES, SAMPLE_RATE
from mixtag.errors import BadRange, BadSize, EmptyInput, IoError, ShapeError
from mixtag.features import (
    FeatureSet,
    FeatureStats,
    LOG_FLOOR,
    clip_features,
    compute_stats,
    frame_signal,
    hamming_window,
    hz_to_mel,
    log_mel,
    mel_filterbank,
    mel_to_hz,
    normalize,
    read_features,
    stft,
    write_features,
)


def naive_dft_power(clip):
    """O(N^2) one-sided power spectrogram, independent of the FFT path."""
    frames = frame_signal(np.asarray(clip, dtype=np.float64)) * hamming_window(1024)
    k = np.arange(513)
    n = np.arange(1024)
    dft = np.exp(-2j * np.pi * np.outer(k, n) / 1024.0)
    spec = dft @ frames.T
    return (spec.real**2 + spec.imag**2).T


class TestHammingWindow:
    def test_n3_values(self):
        w = hamming_window(3)
        assert np.allclose(w, [0.08, 1.0, 0.08], atol=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 17, 1024])
    def test_symmetry(self, n):
        w = hamming_window(n)
        assert np.allclose(w, w[::-1], atol=0)

    def test_sum_against_high_precision_oracle(self):
        n = 1024
        with mpmath.workdps(40):
            exact = mpmath.fsum(
                mpmath.mpf("0.54") - mpmath.mpf("0.46") * mpmath.cos(2 * mpmath.pi * k / (n - 1))
                for k in range(n)
            )
        assert abs(hamming_window(n).sum() - float(exact)) < 1e-9 * float(exact)

    def test_too_small(self):
        with pytest.raises(BadSize):
            hamming_window(1)


class TestStft:
    def test_zero_clip(self):
        spec = stft(np.zeros(CLIP_SAMPLES))
        assert spec.power.shape == (124, 513)
        assert not spec.power.any()

    def test_frame_count_is_124(self):
        spec = stft(np.random.default_rng(0).standard_normal(CLIP_SAMPLES))
        assert spec.power.shape[0] == 124

    def test_wrong_length(self):
        with pytest.raises(ShapeError):
            stft(np.zeros(1000))

    def test_1khz_sinusoid_against_naive_dft(self):
        t = np.arange(CLIP_SAMPLES) / SAMPLE_RATE
        clip = np.sin(2 * np.pi * 1000.0 * t)
        power = stft(clip).power
        oracle = naive_dft_power(clip)
        # 1000 Hz = bin 64 = 1000/16000*1024, dominant in every frame
        assert (power.argmax(axis=1) == 64).all()
        # relative agreement; bins below 1e-12 of peak are roundoff in
        # both implementations, so they get an absolute floor
        floor = oracle.max() * 1e-12
        rel = np.abs(power - oracle) / np.maximum(oracle, floor)
        assert rel.max() < 1e-6

    def test_parseval_per_frame(self):
        rng = np.random.default_rng(1)
        clip = rng.standard_normal(CLIP_SAMPLES) * 0.1
        power = stft(clip).power
        frames = frame_signal(clip) * hamming_window(1024)
        # one-sided power needs the mirrored bins counted twice
        total = power[:, 0] + power[:, 512] + 2 * power[:, 1:512].sum(axis=1)
        expected = 1024 * (frames**2).sum(axis=1)
        assert np.allclose(total, expected, rtol=1e-6)

    def test_deterministic(self):
        clip = np.random.default_rng(2).standard_normal(CLIP_SAMPLES)
        a = stft(clip).power
        b = stft(clip).power
        assert np.array_equal(a, b)


class TestMelFilterbank:
    def test_mel_scale_closed_form(self):
        assert abs(hz_to_mel(700.0) - 2595.0 * math.log10(2.0)) < 1e-9
        assert hz_to_mel(0.0) == 0.0
        assert abs(mel_to_hz(hz_to_mel(1234.5)) - 1234.5) < 1e-9

    def test_shape_and_nonnegative(self):
        fb = mel_filterbank()
        assert fb.weights.shape == (128, 513)
        assert (fb.weights >= 0).all()

    def test_contiguous_triangular_support(self):
        fb = mel_filterbank()
        for row in fb.weights:
            nz = np.nonzero(row)[0]
            assert nz.size >= 1
            assert np.array_equal(nz, np.arange(nz[0], nz[-1] + 1))

    def test_partition_of_unity_inner_bins(self):
        fb = mel_filterbank()
        mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(8000.0), 130)
        hz_pts = mel_to_hz(mel_pts)
        bin_freqs = np.arange(513) * SAMPLE_RATE / 1024.0
        inner = (bin_freqs > hz_pts[1]) & (bin_freqs < hz_pts[128])
        # scripted oracle: evaluate every triangle directly at each bin
        for k in np.nonzero(inner)[0]:
            total = 0.0
            for m in range(128):
                lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
                f = bin_freqs[k]
                if lo < f <= center:
                    total += (f - lo) / (center - lo)
                elif center < f < hi:
                    total += (hi - f) / (hi - center)
            assert abs(fb.weights[:, k].sum() - 1.0) < 1e-12
            assert abs(fb.weights[:, k].sum() - total) < 1e-12

    def test_center_bins_monotone(self):
        fb = mel_filterbank()
        centers = [np.nonzero(row)[0].mean() for row in fb.weights]
        assert all(a <= b + 1e-9 for a, b in zip(centers, centers[1:]))

    def test_empty_filter_repair(self):
        # 256 filters over 513 bins guarantees some triangles narrower than
        # the bin spacing near DC; the repair must leave no dead row
        fb = mel_filterbank(n_mels=256)
        assert not (~fb.weights.any(axis=1)).any()
        repaired = [row for row in fb.weights if np.count_nonzero(row) == 1 and row.max() == 1.0]
        assert repaired, "expected at least one repaired filter in this configuration"

    def test_bad_range(self):
        with pytest.raises(BadRange):
            mel_filterbank(f_hi=9000.0)
        with pytest.raises(BadRange):
            mel_filterbank(f_lo=5000.0, f_hi=4000.0)


class TestLogMel:
    def test_zero_spectrogram_hits_floor(self):
        spec = stft(np.zeros(CLIP_SAMPLES))
        out = log_mel(spec, mel_filterbank())
        assert np.allclose(out, np.log(LOG_FLOOR), atol=0)

    def test_linearity_pre_log(self):
        rng = np.random.default_rng(3)
        clip = rng.standard_normal(CLIP_SAMPLES) * 0.3
        spec = stft(clip)
        fb = mel_filterbank()
        doubled = stft(clip)
        doubled.power = 2.0 * spec.power
        a, b = log_mel(spec, fb), log_mel(doubled, fb)
        above_floor = a > np.log(LOG_FLOOR) + 1.0
        assert np.allclose(b[above_floor] - a[above_floor], np.log(2.0), atol=1e-9)

    def test_white_noise_against_projection_oracle(self):
        rng = np.random.default_rng(4)
        clip = rng.standard_normal(CLIP_SAMPLES) * 0.2
        spec = stft(clip)
        fb = mel_filterbank()
        out = log_mel(spec, fb)
        # independent oracle: per-entry compensated summation
        for t, m in zip(rng.integers(0, 124, 50), rng.integers(0, 128, 50)):
            expected = math.log(max(math.fsum(
                spec.power[t, k] * fb.weights[m, k] for k in range(513)
            ), LOG_FLOOR))
            assert abs(out[t, m] - expected) <= 1e-5 * abs(expected)

    def test_shape_mismatch(self):
        spec = stft(np.zeros(CLIP_SAMPLES))
        fb = mel_filterbank(n_fft=512)
        with pytest.raises(ShapeError):
            log_mel(spec, fb)

    def test_pipeline_shape_always_124x128(self):
        rng = np.random.default_rng(5)
        for _ in range(3):
            clip = rng.uniform(-1, 1, CLIP_SAMPLES)
            assert clip_features(clip).shape == (124, 128)

    def test_deterministic_bit_identical(self):
        clip = np.random.default_rng(6).standard_normal(CLIP_SAMPLES)
        assert np.array_equal(clip_features(clip), clip_features(clip))


class TestStats:
    def test_constant_feature_normalizes_to_zero(self):
        feat = np.full((10, 5), 3.7)
        stats = compute_stats([feat])
        assert np.array_equal(normalize(feat, stats), np.zeros_like(feat))

    def test_single_feature_mean(self):
        rng = np.random.default_rng(7)
        feat = rng.standard_normal((30, 6))
        stats = compute_stats([feat])
        assert np.allclose(stats.mean, feat.mean(axis=0))

    def test_self_normalization_zero_mean(self):
        rng = np.random.default_rng(8)
        feat = rng.standard_normal((40, 6)) * 3 + 1
        normed = normalize(feat, compute_stats([feat]))
        assert np.abs(normed.mean(axis=0)).max() < 1e-12

    def test_normalized_set_stats(self):
        rng = np.random.default_rng(9)
        feats = [rng.standard_normal((20, 6)) * 2 + rng.uniform(-1, 1) for _ in range(8)]
        stats = compute_stats(feats)
        normed = [normalize(f, stats) for f in feats]
        restats = compute_stats(normed)
        assert np.abs(restats.mean).max() < 1e-6
        assert np.abs(restats.std - 1.0).max() < 1e-6

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            compute_stats([])


class TestContainer:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        fs = FeatureSet(
            chunk_ids=["a", "bb", "ccc"],
            labels=(rng.random((3, 7)) < 0.4).astype(float),
            features=rng.standard_normal((3, 124, 128)),
        )
        path = tmp_path / "f.mtft"
        write_features(fs, path)
        back = read_features(path)
        assert back.chunk_ids == fs.chunk_ids
        assert np.array_equal(back.labels, fs.labels)  # 0/1 exact in f32
        assert np.abs(back.features - fs.features).max() < 1e-6
        assert back.frames == 124 and back.bins == 128

    def test_magic_and_header(self, tmp_path):
        fs = FeatureSet(["x"], np.zeros((1, 7)), np.zeros((1, 10, 4)))
        path = tmp_path / "f.mtft"
        write_features(fs, path)
        blob = path.read_bytes()
        assert blob[:4] == b"MTFT"
        with pytest.raises(IoError):
            read_features(__file__)

    def test_soft_labels_survive(self, tmp_path):
        fs = FeatureSet(["x"], np.array([[0.25, 0.75, 0, 0, 0, 0, 1.0]]), np.zeros((1, 4, 4)))
        path = tmp_path / "f.mtft"
        write_features(fs, path)
        assert np.allclose(read_features(path).labels, fs.labels, atol=1e-7)
