"""Synthetic speech-like corpus for tests, demos and smoke training.

Utterances are harmonic sources with a wandering pitch, a moving formant
envelope, syllable-rate amplitude modulation and bursts of high-band noise,
so 48 kHz renderings carry energy above 8 kHz.  The "source" corpus is a
different voice rendered at 22.05 kHz through a duller, slightly
reverberant channel.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.signal

from .dsp import AudioClip
from .wavio import write_wav


def synth_utterance(duration: float, rate: int, f0: float, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    pitch = f0 * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(1.5, 3) * t + rng.uniform(0, 6)))
    phase = 2 * np.pi * np.cumsum(pitch) / rate
    formants = np.array([700.0, 1200.0, 2600.0, 3800.0]) * rng.uniform(0.85, 1.15, 4)
    drift = 1 + 0.15 * np.sin(2 * np.pi * 1.3 * t[None, :] + rng.uniform(0, 6, (4, 1)))
    voiced = np.zeros(n)
    for k in range(1, int(0.5 * rate / f0)):
        freq = k * pitch
        env = sum(np.exp(-0.5 * ((freq - fm * d) / 180.0) ** 2) for fm, d in zip(formants, drift))
        amp = (env + 0.02) / np.sqrt(k)
        voiced += np.where(freq < 0.45 * rate, amp * np.sin(k * phase), 0.0)
    syllables = 0.5 * (1 - np.cos(2 * np.pi * 4.0 * t)) ** 2
    noise = rng.standard_normal(n)
    hi = min(0.45 * rate, 20000.0)
    sos = scipy.signal.butter(4, [3000.0, hi], btype="bandpass", fs=rate, output="sos")
    fricative = scipy.signal.sosfilt(sos, noise) * (np.sin(2 * np.pi * 2.0 * t + 1.0) > 0.6)
    signal = syllables * voiced + 0.3 * fricative
    return 0.3 * signal / np.max(np.abs(signal))


def source_channel(samples: np.ndarray, rate: int, seed: int = 0) -> np.ndarray:
    """Duller, reverberant, slightly noisy recording channel."""
    rng = np.random.default_rng(seed + 1000)
    sos = scipy.signal.butter(1, 2500.0, btype="lowpass", fs=rate, output="sos")
    dull = scipy.signal.sosfilt(sos, samples)
    n_ir = int(0.08 * rate)
    ir = rng.standard_normal(n_ir) * np.exp(-np.arange(n_ir) / (0.02 * rate))
    ir[0] = 1.0
    wet = scipy.signal.fftconvolve(dull, ir / np.abs(ir).sum() * 4)[: len(samples)]
    out = 0.7 * dull + 0.3 * wet + 1e-3 * rng.standard_normal(len(samples))
    return 0.3 * out / np.max(np.abs(out))


def write_fixture_corpus(root, n_source: int = 2, n_target: int = 2, duration: float = 1.5,
                         seed: int = 0) -> tuple[Path, Path]:
    """Write ``raw_source/`` (22.05 kHz) and ``raw_target/`` (48 kHz) WAV folders."""
    root = Path(root)
    src_dir, tgt_dir = root / "raw_source", root / "raw_target"
    src_dir.mkdir(parents=True, exist_ok=True)
    tgt_dir.mkdir(parents=True, exist_ok=True)
    for i in range(n_source):
        s = synth_utterance(duration, 22050, 210.0 + 15 * i, seed=seed + i)
        write_wav(src_dir / f"src_{i:03d}.wav", AudioClip(source_channel(s, 22050, seed + i), 22050))
    for i in range(n_target):
        s = synth_utterance(duration, 48000, 115.0 + 10 * i, seed=seed + 100 + i)
        write_wav(tgt_dir / f"tgt_{i:03d}.wav", AudioClip(s, 48000))
    return src_dir, tgt_dir
