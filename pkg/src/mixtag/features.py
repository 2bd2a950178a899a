"""Log-mel front end: Hamming-windowed STFT, mel filterbank projection,
per-bin normalization, and the binary feature container.

A 64000-sample clip framed with window 1024 / hop 512 yields exactly 124
frames; with 128 mel bins the network input is a 124x128 matrix. The hop is
the unique power of two that produces that frame count without padding.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import CLIP_SAMPLES, NUM_CLASSES, SAMPLE_RATE, AudioClip, read_wav
from .errors import BadRange, BadSize, EmptyInput, IoError, ShapeError

N_FFT = 1024
HOP = 512
N_BINS = N_FFT // 2 + 1  # 513 one-sided bins
N_FRAMES = (CLIP_SAMPLES - N_FFT) // HOP + 1  # 124
N_MELS = 128

LOG_FLOOR = 1e-10
STD_FLOOR = 1e-5


def hamming_window(n: int) -> np.ndarray:
    """Symmetric Hamming window w[k] = 0.54 - 0.46*cos(2*pi*k/(n-1))."""
    if n < 2:
        raise BadSize(f"window size must be >= 2, got {n}")
    k = np.arange(n, dtype=np.float64)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


@dataclass
class Spectrogram:
    """One-sided power spectrogram, frames x bins."""

    power: np.ndarray
    frame_hop: int = HOP
    window_size: int = N_FFT


def frame_signal(samples: np.ndarray, window: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """Slice a signal into overlapping frames, shape (n_frames, window)."""
    n_frames = (len(samples) - window) // hop + 1
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    return samples[idx]


def stft(clip, window: int = N_FFT, hop: int = HOP) -> Spectrogram:
    """Hamming-windowed short-time power spectrum of a 4 s clip.

    Parameters
    ----------
    clip : AudioClip or array of 64000 samples
    window, hop : frame size and advance in samples

    Returns
    -------
    Spectrogram with ``power[t, k] = |X_t[k]|**2`` for k = 0..window/2.
    """
    samples = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)
    if samples.ndim != 1 or len(samples) != CLIP_SAMPLES:
        raise ShapeError(f"expected {CLIP_SAMPLES} samples, got shape {samples.shape}")
    frames = frame_signal(samples, window, hop) * hamming_window(window)
    spectrum = np.fft.rfft(frames, n=window, axis=1)
    power = (spectrum.real**2 + spectrum.imag**2).astype(np.float64)
    return Spectrogram(power=power, frame_hop=hop, window_size=window)


def hz_to_mel(f):
    """HTK mel scale: mel(f) = 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass
class MelFilterbank:
    weights: np.ndarray  # (n_mels, n_bins)
    f_lo: float
    f_hi: float
    sample_rate: int
    n_fft: int

    @property
    def n_mels(self):
        return self.weights.shape[0]


def mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = N_FFT,
    sample_rate: int = SAMPLE_RATE,
    f_lo: float = 0.0,
    f_hi: float = 8000.0,
) -> MelFilterbank:
    """Triangular mel filterbank on the HTK scale, peak value 1.

    ``n_mels + 2`` mel points are spaced evenly between ``f_lo`` and ``f_hi``;
    filter m is the triangle over points (m-1, m, m+1) sampled at FFT bin
    center frequencies. A filter whose support captures no bin is repaired by
    assigning weight 1 to the bin nearest its center so no output dimension
    is dead.
    """
    if not (0.0 <= f_lo < f_hi <= sample_rate / 2):
        raise BadRange(f"need 0 <= f_lo < f_hi <= {sample_rate / 2}, got [{f_lo}, {f_hi}]")
    n_bins = n_fft // 2 + 1
    mel_points = np.linspace(hz_to_mel(f_lo), hz_to_mel(f_hi), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_bins) * (sample_rate / n_fft)

    weights = np.zeros((n_mels, n_bins), dtype=np.float64)
    for m in range(n_mels):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        weights[m] = np.clip(np.minimum(rising, falling), 0.0, None)
        if not weights[m].any():
            weights[m, np.argmin(np.abs(bin_freqs - center))] = 1.0
    return MelFilterbank(weights, float(f_lo), float(f_hi), sample_rate, n_fft)


def log_mel(spec: Spectrogram, fb: MelFilterbank) -> np.ndarray:
    """Project a power spectrogram onto the filterbank and log-compress.

    Returns ln(max(power @ weights.T, 1e-10)), shape (frames, n_mels).
    """
    if spec.power.shape[1] != fb.weights.shape[1]:
        raise ShapeError(
            f"spectrogram has {spec.power.shape[1]} bins, filterbank expects {fb.weights.shape[1]}"
        )
    mel_energy = spec.power @ fb.weights.T
    return np.log(np.maximum(mel_energy, LOG_FLOOR))


def clip_features(clip, fb: MelFilterbank | None = None) -> np.ndarray:
    """Convenience: log-mel matrix of one clip (frames x mel bins)."""
    if fb is None:
        fb = mel_filterbank()
    return log_mel(stft(clip), fb)


@dataclass
class FeatureStats:
    """Per-mel-bin standardization statistics."""

    mean: np.ndarray
    std: np.ndarray


def compute_stats(features: Sequence[np.ndarray]) -> FeatureStats:
    """Per-bin mean/std pooled over all frames of all features.

    Compute these on training-fold features only; the std is floored at
    1e-5 so constant bins stay finite under normalization.
    """
    if len(features) == 0:
        raise EmptyInput("no features to compute statistics from")
    stacked = np.concatenate([np.asarray(f) for f in features], axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)
    return FeatureStats(mean=mean, std=std)


def normalize(feature: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Standardize a feature matrix with per-bin training statistics."""
    return (np.asarray(feature) - stats.mean) / stats.std


# -- feature container ------------------------------------------------------

_MAGIC = b"MTFT"
_VERSION = 1


@dataclass
class FeatureSet:
    """A bundle of per-chunk features and labels, the harness's working unit."""

    chunk_ids: list
    labels: np.ndarray  # (N, 7) float64
    features: np.ndarray  # (N, frames, bins) float64

    def __len__(self):
        return len(self.chunk_ids)

    @property
    def frames(self):
        return self.features.shape[1]

    @property
    def bins(self):
        return self.features.shape[2]

    def subset(self, indices) -> "FeatureSet":
        idx = np.asarray(indices)
        return FeatureSet(
            chunk_ids=[self.chunk_ids[i] for i in idx],
            labels=self.labels[idx],
            features=self.features[idx],
        )


def write_features(fs: FeatureSet, path) -> None:
    """Serialize a FeatureSet to the binary container.

    Layout (all integers and reals little-endian): magic ``MTFT``, version
    u32, count u32, frames u32, bins u32, then per record a u32
    length-prefixed UTF-8 chunk id, 7 float32 labels, and frames*bins
    float32 feature values (row-major, time major).
    """
    n, frames, bins = fs.features.shape
    if fs.labels.shape != (n, NUM_CLASSES):
        raise ShapeError(f"labels must be ({n}, {NUM_CLASSES}), got {fs.labels.shape}")
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IIII", _VERSION, n, frames, bins))
            for i in range(n):
                cid = fs.chunk_ids[i].encode("utf-8")
                fh.write(struct.pack("<I", len(cid)))
                fh.write(cid)
                fh.write(fs.labels[i].astype("<f4").tobytes())
                fh.write(fs.features[i].astype("<f4").tobytes())
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def read_features(path) -> FeatureSet:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    if blob[:4] != _MAGIC:
        raise IoError(f"{path}: bad magic {blob[:4]!r}, not a feature container")
    version, n, frames, bins = struct.unpack_from("<IIII", blob, 4)
    if version != _VERSION:
        raise IoError(f"{path}: unsupported container version {version}")
    offset = 20
    chunk_ids = []
    labels = np.empty((n, NUM_CLASSES), dtype=np.float64)
    features = np.empty((n, frames, bins), dtype=np.float64)
    for i in range(n):
        (id_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        chunk_ids.append(blob[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        labels[i] = np.frombuffer(blob, dtype="<f4", count=NUM_CLASSES, offset=offset)
        offset += 4 * NUM_CLASSES
        features[i] = np.frombuffer(
            blob, dtype="<f4", count=frames * bins, offset=offset
        ).reshape(frames, bins)
        offset += 4 * frames * bins
    return FeatureSet(chunk_ids=chunk_ids, labels=labels, features=features)


def extract_features(manifest, n_mels: int = N_MELS, f_lo: float = 0.0, f_hi: float = 8000.0) -> FeatureSet:
    """Extract raw (un-normalized) log-mel features for every manifest entry.

    Normalization is deliberately left to the training harness so statistics
    can be computed per fold without leakage.
    """
    fb = mel_filterbank(n_mels=n_mels, f_lo=f_lo, f_hi=f_hi)
    ids, labels, feats = [], [], []
    for entry in manifest.entries:
        clip = read_wav(entry.path)
        feats.append(clip_features(clip, fb))
        labels.append(entry.labels)
        ids.append(entry.chunk_id)
    if not ids:
        raise EmptyInput("manifest has no entries")
    return FeatureSet(chunk_ids=ids, labels=np.stack(labels), features=np.stack(feats))
