"""Walk through the log-mel front end on a synthetic clip.

Generates one labeled clip, frames it with a 1024-sample Hamming window and
hop 512 (124 frames for 4 s at 16 kHz), projects the power spectrum onto a
128-band mel filterbank, and saves a picture of each stage.

Run: python demos/demo_features.py
"""

import pathlib
import tempfile

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mixtag.dataset import SynthSpec, decode_labels, read_wav, synth_dataset
from mixtag.features import hamming_window, log_mel, mel_filterbank, stft

out_dir = pathlib.Path(tempfile.mkdtemp(prefix="mixtag_demo_"))
manifest = synth_dataset(SynthSpec(clip_count=1, class_count=4, events_min=2, events_max=3),
                         seed=42, out_dir=out_dir)
entry = manifest.entries[0]
clip = read_wav(entry.path)
print(f"clip {entry.chunk_id}: labels '{decode_labels(entry.labels)}' "
      f"({int(entry.labels.sum())} events), {len(clip.samples)} samples")

spec = stft(clip)
print(f"power spectrogram: {spec.power.shape} (frames x bins), "
      f"window {spec.window_size}, hop {spec.frame_hop}")

fb = mel_filterbank()
feature = log_mel(spec, fb)
print(f"log-mel feature: {feature.shape} (the network input)")

fig, axes = plt.subplots(2, 2, figsize=(12, 7))
axes[0, 0].plot(clip.samples[:4000])
axes[0, 0].set_title("waveform (first 0.25 s)")
axes[0, 1].plot(hamming_window(1024))
axes[0, 1].set_title("Hamming window, n=1024")
axes[1, 0].imshow(10 * np.log10(spec.power + 1e-10).T, aspect="auto",
                  origin="lower", cmap="magma")
axes[1, 0].set_title("power spectrogram (dB)")
axes[1, 0].set_xlabel("frame")
axes[1, 1].imshow(feature.T, aspect="auto", origin="lower", cmap="magma")
axes[1, 1].set_title("log-mel feature 124x128")
axes[1, 1].set_xlabel("frame")
fig.tight_layout()
fig.savefig("demo_features.png", dpi=110)
print("wrote demo_features.png")
