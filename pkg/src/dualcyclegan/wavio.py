"""Mono WAV reading and writing (PCM16 and IEEE float32, little-endian)."""

from __future__ import annotations

import os

import numpy as np
import scipy.io.wavfile

from .dsp import AudioClip
from .errors import ParameterError


class WavFormatError(ParameterError):
    """The file is not a mono PCM16 / float32 WAV."""


def read_wav(path: str | os.PathLike) -> AudioClip:
    """Read a mono WAV file; PCM16 samples are divided by 32768."""
    try:
        rate, data = scipy.io.wavfile.read(os.fspath(path))
    except (ValueError, EOFError) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise WavFormatError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported sample format {data.dtype}")
    return AudioClip(samples, rate)


def write_wav(path: str | os.PathLike, clip: AudioClip, fmt: str = "float32") -> None:
    """Write a clip as float32 (default) or PCM16 (clipped to [-1, 1))."""
    if fmt == "float32":
        data = clip.samples.astype(np.float32)
    elif fmt == "pcm16":
        data = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ParameterError(f"unknown WAV format {fmt!r}")
    scipy.io.wavfile.write(os.fspath(path), clip.sample_rate, data)
