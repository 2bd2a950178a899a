"""Dataset ingestion: WAV chunks, label manifests, fold splits, and a
synthetic desk-scale dataset generator.

Audio contract: every clip is 4 s of 16 kHz mono PCM16, i.e. exactly 64000
samples after padding/truncation. Labels are 7-way multi-hot vectors over
the class alphabet ``c m f v p b o``.
"""

from __future__ import annotations

import csv
import io
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadLabel,
    DuplicateId,
    FormatMismatch,
    IoError,
    ParseError,
    TooFewItems,
)

CLASS_NAMES = ("c", "m", "f", "v", "p", "b", "o")
NUM_CLASSES = len(CLASS_NAMES)
SAMPLE_RATE = 16000
CLIP_SECONDS = 4
CLIP_SAMPLES = SAMPLE_RATE * CLIP_SECONDS  # 64000

_CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}


@dataclass
class AudioClip:
    """Fixed-length mono PCM chunk: 64000 float samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE


@dataclass
class ManifestEntry:
    chunk_id: str
    path: str
    labels: np.ndarray  # (7,) multi-hot (or soft after augmentation)


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    class_names: tuple[str, ...] = CLASS_NAMES

    def __len__(self):
        return len(self.entries)

    def chunk_ids(self):
        return [e.chunk_id for e in self.entries]


@dataclass
class FoldSplit:
    fold_count: int
    assignments: dict[str, int]  # chunk_id -> fold index

    def fold_ids(self, fold):
        return [cid for cid, f in self.assignments.items() if f == fold]


def encode_labels(tag_string: str) -> np.ndarray:
    """Multi-hot encode a label string like ``"cm"``; repeats are idempotent."""
    vec = np.zeros(NUM_CLASSES, dtype=np.float64)
    for ch in tag_string:
        idx = _CLASS_INDEX.get(ch)
        if idx is None:
            raise BadLabel(ch)
        vec[idx] = 1.0
    return vec


def decode_labels(vec) -> str:
    """Inverse of :func:`encode_labels` for hard labels (threshold 0.5)."""
    return "".join(name for name, v in zip(CLASS_NAMES, vec) if v > 0.5)


def parse_manifest(csv_text: str) -> DatasetManifest:
    """Parse a manifest CSV with header ``chunk_id,path,labels``.

    The labels field is a bare character string over the class alphabet;
    an empty field means an all-zero label vector.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "empty manifest") from None
    if [h.strip() for h in header] != ["chunk_id", "path", "labels"]:
        raise ParseError(1, f"expected header 'chunk_id,path,labels', got {header!r}")
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(lineno, f"expected 3 fields, got {len(row)}")
        chunk_id, path, tags = row[0].strip(), row[1].strip(), row[2].strip()
        if not chunk_id:
            raise ParseError(lineno, "empty chunk_id")
        if chunk_id in seen:
            raise DuplicateId(chunk_id)
        seen.add(chunk_id)
        try:
            labels = encode_labels(tags)
        except BadLabel as exc:
            raise BadLabel(exc.char, row=lineno) from None
        entries.append(ManifestEntry(chunk_id, path, labels))
    return DatasetManifest(entries)


def serialize_manifest(manifest: DatasetManifest) -> str:
    lines = ["chunk_id,path,labels"]
    for e in manifest.entries:
        lines.append(f"{e.chunk_id},{e.path},{decode_labels(e.labels)}")
    return "\n".join(lines) + "\n"


def load_manifest(path) -> DatasetManifest:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return parse_manifest(text)


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(serialize_manifest(manifest), encoding="utf-8")


def read_wav(path) -> AudioClip:
    """Read a RIFF/WAVE PCM16 mono 16 kHz file into a fixed 64000-sample clip.

    Shorter files are zero-padded at the end, longer ones truncated; any
    sample-rate / channel / encoding mismatch is a hard error (no resampling).
    """
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            if channels != 1:
                raise FormatMismatch(f"{path}: expected mono, got {channels} channels")
            if width != 2:
                raise FormatMismatch(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
            if rate != SAMPLE_RATE:
                raise FormatMismatch(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
            raw = wf.readframes(wf.getnframes())
    except FormatMismatch:
        raise
    except (OSError, wave.Error, EOFError) as exc:
        raise IoError(f"{path}: {exc}") from exc
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    samples = np.zeros(CLIP_SAMPLES, dtype=np.float64)
    n = min(len(data), CLIP_SAMPLES)
    samples[:n] = data[:n]
    return AudioClip(samples=samples, sample_rate=SAMPLE_RATE)


def write_wav(path, samples, sample_rate: int = SAMPLE_RATE) -> None:
    """Write float samples in [-1, 1] as PCM16 mono."""
    pcm = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(pcm * 32767.0).astype("<i2")
    try:
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(sample_rate)
            wf.writeframes(pcm.tobytes())
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def make_folds(manifest, k: int, seed: int) -> FoldSplit:
    """Shuffled round-robin assignment of chunks to ``k`` folds.

    Deterministic for a fixed seed; fold sizes differ by at most one.
    Accepts a :class:`DatasetManifest` or a plain sequence of chunk ids.
    """
    ids = manifest.chunk_ids() if isinstance(manifest, DatasetManifest) else list(manifest)
    if k < 2:
        raise TooFewItems(f"need k >= 2 folds, got {k}")
    if len(ids) < k:
        raise TooFewItems(f"{len(ids)} entries cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    assignments = {ids[j]: int(i % k) for i, j in enumerate(order)}
    return FoldSplit(fold_count=k, assignments=assignments)


def parse_folds(csv_text: str) -> FoldSplit:
    """Load an explicit fold CSV (header ``chunk_id,fold``) verbatim."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "empty fold file") from None
    if [h.strip() for h in header] != ["chunk_id", "fold"]:
        raise ParseError(1, f"expected header 'chunk_id,fold', got {header!r}")
    assignments: dict[str, int] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(lineno, f"expected 2 fields, got {len(row)}")
        cid = row[0].strip()
        if cid in assignments:
            raise DuplicateId(cid)
        try:
            assignments[cid] = int(row[1])
        except ValueError:
            raise ParseError(lineno, f"fold index {row[1]!r} is not an integer") from None
    if not assignments:
        raise ParseError(2, "fold file has no rows")
    return FoldSplit(fold_count=max(assignments.values()) + 1, assignments=assignments)


def load_folds(path) -> FoldSplit:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return parse_folds(text)


def save_folds(split: FoldSplit, path) -> None:
    lines = ["chunk_id,fold"]
    lines += [f"{cid},{f}" for cid, f in split.assignments.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- synthetic dataset ------------------------------------------------------

# Per-class event recipes: (kind, low Hz, high Hz). Bands are spread over the
# mel axis so classes stay separable even with very few mel bins.
_EVENT_RECIPES = (
    ("tone", 300.0, 500.0),
    ("tone", 1300.0, 1800.0),
    ("chirp", 2500.0, 3600.0),
    ("noise", 5000.0, 7200.0),
    ("tone", 700.0, 950.0),
    ("chirp", 4000.0, 4900.0),
    ("noise", 200.0, 600.0),
)


@dataclass
class SynthSpec:
    """Recipe for a desk-scale synthetic dataset.

    Each clip mixes 1-3 class events (sinusoid bursts, noise bursts, chirps
    in class-specific frequency bands) over low-level background noise;
    labels reflect exactly the events included.
    """

    clip_count: int
    class_count: int = 4
    events_min: int = 1
    events_max: int = 3
    background_level: float = 0.02
    event_level_lo: float = 0.03
    event_level_hi: float = 0.12
    event_seconds_lo: float = 0.4
    event_seconds_hi: float = 2.0

    def __post_init__(self):
        if not 1 <= self.class_count <= NUM_CLASSES:
            raise ValueError(f"class_count must be in [1, {NUM_CLASSES}]")
        if not 1 <= self.events_min <= self.events_max <= self.class_count:
            raise ValueError("need 1 <= events_min <= events_max <= class_count")


def _render_event(kind, f_lo, f_hi, length, rng):
    t = np.arange(length) / SAMPLE_RATE
    if kind == "tone":
        f0 = rng.uniform(f_lo, f_hi)
        sig = np.sin(2.0 * np.pi * f0 * t + rng.uniform(0.0, 2.0 * np.pi))
    elif kind == "chirp":
        f0 = rng.uniform(f_lo, 0.5 * (f_lo + f_hi))
        f1 = rng.uniform(0.5 * (f_lo + f_hi), f_hi)
        phase = 2.0 * np.pi * (f0 * t + 0.5 * (f1 - f0) / t[-1] * t**2)
        sig = np.sin(phase + rng.uniform(0.0, 2.0 * np.pi))
    elif kind == "noise":
        # Band-limit white noise with a forward-backward FFT mask.
        white = rng.standard_normal(length)
        spec = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(length, d=1.0 / SAMPLE_RATE)
        spec[(freqs < f_lo) | (freqs > f_hi)] = 0.0
        sig = np.fft.irfft(spec, n=length)
        peak = np.max(np.abs(sig))
        if peak > 0:
            sig = sig / peak
    else:  # pragma: no cover - recipes are fixed above
        raise ValueError(f"unknown event kind {kind!r}")
    # Attack/release envelope, 50 ms or a quarter of the event.
    ramp = min(int(0.05 * SAMPLE_RATE), length // 4)
    env = np.ones(length)
    if ramp > 0:
        env[:ramp] = np.linspace(0.0, 1.0, ramp)
        env[-ramp:] = np.linspace(1.0, 0.0, ramp)
    return sig * env


def synth_clip(spec: SynthSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    """Render one clip; returns (samples, labels)."""
    samples = spec.background_level * rng.standard_normal(CLIP_SAMPLES)
    n_events = int(rng.integers(spec.events_min, spec.events_max + 1))
    classes = rng.choice(spec.class_count, size=n_events, replace=False)
    labels = np.zeros(NUM_CLASSES, dtype=np.float64)
    for cls in sorted(int(c) for c in classes):
        kind, f_lo, f_hi = _EVENT_RECIPES[cls]
        dur = rng.uniform(spec.event_seconds_lo, spec.event_seconds_hi)
        length = min(int(dur * SAMPLE_RATE), CLIP_SAMPLES)
        start = int(rng.integers(0, CLIP_SAMPLES - length + 1))
        level = rng.uniform(spec.event_level_lo, spec.event_level_hi)
        samples[start : start + length] += level * _render_event(kind, f_lo, f_hi, length, rng)
        labels[cls] = 1.0
    return np.clip(samples, -1.0, 1.0), labels


def synth_dataset(spec: SynthSpec, seed: int, out_dir) -> DatasetManifest:
    """Write WAV files plus ``manifest.csv`` under ``out_dir``.

    Byte-identical output for identical (spec, seed).
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"{out_dir}: {exc}") from exc
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    entries = []
    for i in range(spec.clip_count):
        samples, labels = synth_clip(spec, rng)
        name = f"clip{i:05d}"
        wav_path = out / f"{name}.wav"
        write_wav(wav_path, samples)
        entries.append(ManifestEntry(name, str(wav_path), labels))
    manifest = DatasetManifest(entries)
    save_manifest(manifest, out / "manifest.csv")
    return manifest
