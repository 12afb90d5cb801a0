"""Deterministic signal-processing primitives.

Everything that touches raw audio outside the networks lives here: the
151-tap Kaiser-windowed sinc resampler (also used inside the resampling
generators), the 70 Hz high-pass, RMS loudness normalization, the STFT and
mel front ends that feed the losses and the spectral discriminators, and
the spectral distances used for evaluation.

Array functions come in two flavours.  Functions taking an :class:`AudioClip`
work in numpy float64 and are used for corpus preparation and evaluation.
The ``*_tensor`` functions take ``torch`` tensors shaped ``(..., time)`` and
are differentiable; the losses and discriminators are built on them.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.signal
import torch
import torch.nn.functional as F

from .errors import (
    LengthError,
    MismatchError,
    ParameterError,
    SilentInputError,
    UnsupportedRatioError,
)

LR_RATE = 16000
HR_RATE = 48000


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono waveform with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ParameterError(f"expected mono samples, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ParameterError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ParameterError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __eq__(self, other) -> bool:
        if not isinstance(other, AudioClip):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(
            self.samples, other.samples
        )


@dataclass(frozen=True)
class ResampleSpec:
    """Windowed-sinc resampler design between two rates related by 3."""

    from_rate: int
    to_rate: int
    taps: int = 151
    window: str = "kaiser"
    kaiser_beta: float = 8.0
    # passband edge relative to the lower Nyquist frequency
    cutoff: float = 0.9

    def __post_init__(self):
        if self.taps < 1 or self.taps % 2 == 0:
            raise ParameterError(f"taps must be a positive odd integer, got {self.taps}")
        if self.window != "kaiser":
            raise ParameterError(f"unsupported window {self.window!r}")
        if not 0.0 < self.cutoff <= 1.0:
            raise ParameterError(f"cutoff must lie in (0, 1], got {self.cutoff}")
        if self.from_rate <= 0 or self.to_rate <= 0:
            raise ParameterError("rates must be positive")

    @property
    def factor(self) -> int:
        """Integer rate ratio; raises if it is not 3:1 or 1:3."""
        hi, lo = max(self.from_rate, self.to_rate), min(self.from_rate, self.to_rate)
        if hi != 3 * lo:
            raise UnsupportedRatioError(
                f"only 3:1 and 1:3 ratios are supported, got {self.from_rate} -> {self.to_rate}"
            )
        return 3

    @property
    def is_upsampling(self) -> bool:
        return self.to_rate > self.from_rate


UP_16_48 = ResampleSpec(LR_RATE, HR_RATE)
DOWN_48_16 = ResampleSpec(HR_RATE, LR_RATE)


@dataclass(frozen=True)
class SpectrogramConfig:
    """STFT / mel front-end parameters.

    ``n_mels == 0`` selects a linear-frequency magnitude spectrogram.
    ``fmax=None`` means the Nyquist frequency.
    """

    sample_rate: int = LR_RATE
    fft_size: int = 1024
    hop: int = 256
    win_length: int = 1024
    window: str = "hann"
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float | None = None
    log_floor: float = 1e-5

    def __post_init__(self):
        if not 0 < self.hop <= self.win_length <= self.fft_size:
            raise ParameterError("need 0 < hop <= win_length <= fft_size")
        if self.window != "hann":
            raise ParameterError(f"unsupported window {self.window!r}")
        if self.n_mels < 0:
            raise ParameterError("n_mels must be >= 0")
        if not 0 <= self.fmin < self.upper_freq <= self.sample_rate / 2:
            raise ParameterError("need 0 <= fmin < fmax <= sample_rate / 2")
        if self.log_floor <= 0:
            raise ParameterError("log_floor must be positive")

    @property
    def upper_freq(self) -> float:
        return self.sample_rate / 2 if self.fmax is None else float(self.fmax)

    @property
    def n_bins(self) -> int:
        return self.n_mels if self.n_mels else self.fft_size // 2 + 1

    def linear(self) -> "SpectrogramConfig":
        """Same STFT with the mel filterbank switched off."""
        return SpectrogramConfig(
            self.sample_rate, self.fft_size, self.hop, self.win_length,
            self.window, 0, self.fmin, self.fmax, self.log_floor,
        )

    def num_frames(self, length: int) -> int:
        return length // self.hop + 1


def default_spectrogram_config(sample_rate: int, n_mels: int = 80) -> SpectrogramConfig:
    """Vocoder-style defaults: 1024/256 at 16 kHz, 2048/512 at 48 kHz."""
    if sample_rate == HR_RATE:
        return SpectrogramConfig(sample_rate, 2048, 512, 2048, n_mels=n_mels)
    if sample_rate == LR_RATE:
        return SpectrogramConfig(sample_rate, 1024, 256, 1024, n_mels=n_mels)
    raise ParameterError(f"no default spectrogram config for {sample_rate} Hz")


# ----------------------------------------------------------------------------
# sinc resampling
# ----------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _sinc_kernel_cached(factor: int, taps: int, beta: float, cutoff: float) -> np.ndarray:
    half = (taps - 1) // 2
    n = np.arange(-half, half + 1, dtype=np.float64)
    # cutoff frequency as a fraction of the higher sample rate
    fc = cutoff / (2.0 * factor)
    h = 2.0 * fc * np.sinc(2.0 * fc * n) * np.kaiser(taps, beta)
    h /= h.sum()
    h.setflags(write=False)
    return h


def sinc_kernel(spec: ResampleSpec) -> np.ndarray:
    """Unit-DC-gain lowpass kernel, defined at the higher of the two rates."""
    return _sinc_kernel_cached(spec.factor, spec.taps, spec.kaiser_beta, spec.cutoff)


def _upsample(x: np.ndarray, h: np.ndarray, factor: int) -> np.ndarray:
    stuffed = np.zeros(len(x) * factor)
    stuffed[::factor] = x
    half = (len(h) - 1) // 2
    return np.convolve(stuffed, factor * h)[half:half + len(stuffed)]


def _downsample(x: np.ndarray, h: np.ndarray, factor: int) -> np.ndarray:
    half = (len(h) - 1) // 2
    return np.convolve(x, h)[half:half + len(x):factor]


def sinc_resample(clip: AudioClip, spec: ResampleSpec) -> AudioClip:
    """Resample by exactly 3x up or down with the Kaiser-windowed sinc kernel.

    Edges are zero padded, so the first and last ``taps // 2`` output samples
    (at the higher rate) see a truncated kernel.

    Raises:
        UnsupportedRatioError: if the rates are not related by 3.
        LengthError: if decimating a clip whose length is not divisible by 3.
    """
    if clip.sample_rate != spec.from_rate:
        raise ParameterError(
            f"clip is at {clip.sample_rate} Hz but resampler expects {spec.from_rate} Hz"
        )
    h = sinc_kernel(spec)
    factor = spec.factor
    if spec.is_upsampling:
        out = _upsample(clip.samples, h, factor)
    else:
        if len(clip) % factor:
            raise LengthError(f"decimation by {factor} needs a length divisible by {factor}, got {len(clip)}")
        out = _downsample(clip.samples, h, factor)
    return AudioClip(out, spec.to_rate)


def resample_rational(clip: AudioClip, to_rate: int, taps: int = 151, kaiser_beta: float = 8.0,
                      cutoff: float = 0.9) -> AudioClip:
    """Arbitrary rational-ratio resampling (e.g. 22.05 kHz to 16 kHz).

    The kernel spans ``taps`` samples at the higher of the two rates, with the
    same Kaiser window and relative cutoff as :func:`sinc_resample`.  Output
    length is ``round(len * to_rate / from_rate)``.
    """
    if to_rate == clip.sample_rate:
        return clip
    ratio = Fraction(to_rate, clip.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    # kernel lives at the interpolated rate up * from_rate
    span = max(up, down)
    half = (taps - 1) // 2 * span
    n = np.arange(-half, half + 1, dtype=np.float64)
    fc = cutoff / (2.0 * span)
    h = 2.0 * fc * np.sinc(2.0 * fc * n) * np.kaiser(len(n), kaiser_beta)
    # resample_poly applies the gain of `up` itself
    h /= h.sum()
    out = scipy.signal.resample_poly(clip.samples, up, down, window=h, padtype="constant")
    target = int(round(len(clip) * to_rate / clip.sample_rate))
    out = out[:target] if len(out) >= target else np.pad(out, (0, target - len(out)))
    return AudioClip(out, to_rate)


def sinc_kernel_tensor(spec: ResampleSpec, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(np.array(sinc_kernel(spec)), dtype=dtype).view(1, 1, -1)


def upsample3_tensor(x: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    """Differentiable 3x sinc interpolation of ``(B, 1, T)`` to ``(B, 1, 3T)``."""
    half = (kernel.shape[-1] - 1) // 2
    y = F.conv_transpose1d(x, 3.0 * kernel.to(x.dtype), stride=3)
    return y[..., half:half + 3 * x.shape[-1]]


def downsample3_tensor(x: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    """Differentiable anti-aliased 3x decimation of ``(B, 1, 3T)`` to ``(B, 1, T)``."""
    if x.shape[-1] % 3:
        raise LengthError(f"decimation by 3 needs a length divisible by 3, got {x.shape[-1]}")
    half = (kernel.shape[-1] - 1) // 2
    return F.conv1d(F.pad(x, (half, half)), kernel.to(x.dtype), stride=3)


# ----------------------------------------------------------------------------
# filtering and loudness
# ----------------------------------------------------------------------------


def highpass(clip: AudioClip, cutoff_hz: float = 70.0, order: int = 4) -> AudioClip:
    """Zero-phase Butterworth high-pass (applied forward and backward)."""
    if not 0 < cutoff_hz < clip.sample_rate / 2:
        raise ParameterError(f"cutoff {cutoff_hz} Hz outside (0, {clip.sample_rate / 2})")
    sos = scipy.signal.butter(order, cutoff_hz, btype="highpass", fs=clip.sample_rate, output="sos")
    return AudioClip(scipy.signal.sosfiltfilt(sos, clip.samples), clip.sample_rate)


def rms_db(samples: np.ndarray) -> float:
    rms = math.sqrt(float(np.mean(np.square(samples))))
    return 20.0 * math.log10(rms) if rms > 0 else -math.inf


def normalize_loudness(clip: AudioClip, target_db: float = -26.0) -> AudioClip:
    """Scale the clip so its RMS level is ``target_db`` dBFS."""
    rms = math.sqrt(float(np.mean(np.square(clip.samples)))) if len(clip) else 0.0
    if rms == 0.0:
        raise SilentInputError("cannot normalize a silent clip")
    gain = 10.0 ** (target_db / 20.0) / rms
    return AudioClip(clip.samples * gain, clip.sample_rate)


# ----------------------------------------------------------------------------
# spectrograms
# ----------------------------------------------------------------------------


def hz_to_mel(freq):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    freq = np.asarray(freq, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    logstep = math.log(6.4) / 27.0
    lin = freq / f_sp
    log = min_log_hz / f_sp + np.log(np.maximum(freq, min_log_hz) / min_log_hz) / logstep
    return np.where(freq >= min_log_hz, log, lin)


def mel_to_hz(mels):
    mels = np.asarray(mels, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = math.log(6.4) / 27.0
    lin = f_sp * mels
    log = min_log_hz * np.exp(logstep * (np.maximum(mels, min_log_mel) - min_log_mel))
    return np.where(mels >= min_log_mel, log, lin)


@functools.lru_cache(maxsize=None)
def _mel_basis_cached(sample_rate, fft_size, n_mels, fmin, fmax) -> np.ndarray:
    fft_freqs = np.linspace(0.0, sample_rate / 2, fft_size // 2 + 1)
    mel_freqs = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    fdiff = np.diff(mel_freqs)
    ramps = mel_freqs[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    # area normalization (each triangle integrates to a constant)
    weights *= (2.0 / (mel_freqs[2:] - mel_freqs[:-2]))[:, None]
    weights.setflags(write=False)
    return weights


def mel_filterbank(cfg: SpectrogramConfig) -> np.ndarray:
    """Triangular, area-normalized mel filterbank of shape ``(n_mels, fft_size // 2 + 1)``."""
    if cfg.n_mels == 0:
        raise ParameterError("mel_filterbank needs n_mels > 0")
    return _mel_basis_cached(cfg.sample_rate, cfg.fft_size, cfg.n_mels, float(cfg.fmin), cfg.upper_freq)


@functools.lru_cache(maxsize=None)
def _window_cached(win_length: int, fft_size: int) -> np.ndarray:
    w = scipy.signal.get_window("hann", win_length, fftbins=True)
    left = (fft_size - win_length) // 2
    w = np.pad(w, (left, fft_size - win_length - left))
    w.setflags(write=False)
    return w


def magnitude_tensor(wave: torch.Tensor, cfg: SpectrogramConfig) -> torch.Tensor:
    """Linear STFT magnitude of ``(..., T)``, returned as ``(..., frames, fft_size // 2 + 1)``.

    Center (reflect) padding gives ``T // hop + 1`` frames.  The magnitude is
    floored at 1e-10 so that its gradient is finite for silent frames.
    """
    if wave.shape[-1] < cfg.win_length:
        raise LengthError(f"clip of {wave.shape[-1]} samples is shorter than one window ({cfg.win_length})")
    lead = wave.shape[:-1]
    flat = wave.reshape(-1, wave.shape[-1])
    window = torch.as_tensor(np.array(_window_cached(cfg.win_length, cfg.fft_size)), dtype=wave.dtype)
    pad = cfg.fft_size // 2
    mode = "reflect" if flat.shape[-1] > pad else "constant"
    padded = F.pad(flat.unsqueeze(1), (pad, pad), mode=mode).squeeze(1)
    frames = padded.unfold(-1, cfg.fft_size, cfg.hop) * window
    spec = torch.fft.rfft(frames, dim=-1)
    power = spec.real.square() + spec.imag.square()
    mag = torch.sqrt(torch.clamp(power, min=1e-20))
    return mag.reshape(*lead, *mag.shape[-2:])


def log_spectrogram_tensor(wave: torch.Tensor, cfg: SpectrogramConfig) -> torch.Tensor:
    """``log(max(magnitude or mel magnitude, log_floor))`` as ``(..., frames, bins)``."""
    mag = magnitude_tensor(wave, cfg)
    if cfg.n_mels:
        basis = torch.as_tensor(np.array(mel_filterbank(cfg)), dtype=mag.dtype)
        mag = mag @ basis.T
    return torch.log(torch.clamp(mag, min=cfg.log_floor))


def mel_l1_tensor(a: torch.Tensor, b: torch.Tensor, cfg: SpectrogramConfig) -> torch.Tensor:
    """Per-item mean absolute log-spectral difference; shape ``a.shape[:-1]``."""
    if a.shape != b.shape:
        raise MismatchError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    diff = log_spectrogram_tensor(a, cfg) - log_spectrogram_tensor(b, cfg)
    return diff.abs().mean(dim=(-2, -1))


def _check_pair(a: AudioClip, b: AudioClip, cfg: SpectrogramConfig) -> None:
    if a.sample_rate != b.sample_rate or len(a) != len(b):
        raise MismatchError(
            f"clips differ: {len(a)} @ {a.sample_rate} Hz vs {len(b)} @ {b.sample_rate} Hz"
        )
    if a.sample_rate != cfg.sample_rate:
        raise MismatchError(f"clips are at {a.sample_rate} Hz but config expects {cfg.sample_rate} Hz")


def spectrogram(clip: AudioClip, cfg: SpectrogramConfig) -> np.ndarray:
    """Log magnitude (or log mel) spectrogram, ``(frames, bins)``."""
    wave = torch.from_numpy(clip.samples)
    return log_spectrogram_tensor(wave, cfg).numpy()


def mel_l1(a: AudioClip, b: AudioClip, cfg: SpectrogramConfig) -> float:
    """Mean absolute difference between the two log-mel spectrograms."""
    _check_pair(a, b, cfg)
    return float(np.mean(np.abs(spectrogram(a, cfg) - spectrogram(b, cfg))))


def log_spectral_distance(ref: AudioClip, est: AudioClip, cfg: SpectrogramConfig) -> float:
    """LSD in dB: frame-wise RMS of the log-power difference, averaged over frames."""
    _check_pair(ref, est, cfg)
    lin = cfg.linear()
    to_db = 20.0 / math.log(10.0)
    diff = to_db * (spectrogram(ref, lin) - spectrogram(est, lin))
    return float(np.mean(np.sqrt(np.mean(diff ** 2, axis=-1))))


SNR_CAP_DB = 99.0


def snr_db(ref: AudioClip, est: AudioClip) -> float:
    """Time-domain SNR, capped at 99 dB (identical signals report the cap)."""
    if ref.sample_rate != est.sample_rate or len(ref) != len(est):
        raise MismatchError("SNR needs clips of equal rate and length")
    noise = float(np.sum((ref.samples - est.samples) ** 2))
    signal = float(np.sum(ref.samples ** 2))
    if noise == 0.0:
        return SNR_CAP_DB
    if signal == 0.0:
        return -SNR_CAP_DB
    return min(SNR_CAP_DB, 10.0 * math.log10(signal / noise))
