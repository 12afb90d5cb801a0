"""Whole-utterance super-resolution and objective evaluation."""

from __future__ import annotations

import numpy as np

from . import dsp
from .data import Manifest
from .dsp import AudioClip
from .errors import ConfigurationError, ParameterError
from .model import ModelBundle, composite_sr, generator_forward
from .wavio import read_wav

MAX_SECONDS = 600.0


def super_resolve(bundle: ModelBundle, clip: AudioClip) -> AudioClip:
    """``G3(G1(clip))`` for a 16 kHz clip of at most ten minutes."""
    if clip.sample_rate != dsp.LR_RATE:
        raise ParameterError(f"expected {dsp.LR_RATE} Hz input, got {clip.sample_rate} Hz")
    if clip.duration > MAX_SECONDS:
        raise ParameterError(f"input is {clip.duration:.0f} s long; the limit is {MAX_SECONDS:.0f} s")
    return composite_sr(bundle, clip)


def evaluate_split(bundle: ModelBundle, manifest: Manifest, split: str = "test") -> dict:
    """LSD and SNR of ``G3(z)`` and ``G3(G1(z))`` against the 48 kHz original ``y``.

    Returns a JSON-ready report with per-file values and their arithmetic means.
    """
    pairs = manifest.pairs(split)
    if not pairs:
        raise ConfigurationError(f"no parallel (T_LR, T_HR) pairs in the {split!r} split")
    cfg = dsp.default_spectrogram_config(dsp.HR_RATE, n_mels=0)
    files = []
    for lr_entry, hr_entry in pairs:
        z = read_wav(manifest.resolve(lr_entry))
        y = read_wav(manifest.resolve(hr_entry))
        row = {"pair_id": lr_entry.pair_id}
        for name, est in (("resampler", generator_forward(bundle.g3, z)), ("composite", composite_sr(bundle, z))):
            row[f"lsd_{name}"] = dsp.log_spectral_distance(y, est, cfg)
            row[f"snr_{name}"] = dsp.snr_db(y, est)
        files.append(row)
    keys = [k for k in files[0] if k != "pair_id"]
    mean = {k: float(np.mean([f[k] for f in files])) for k in keys}
    return {"split": split, "num_files": len(files), "files": files, "mean": mean}
