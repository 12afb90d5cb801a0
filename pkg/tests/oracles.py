"""Reference implementations written independently of the package.

They favour obviousness over speed: explicit loops, textbook formulas, and
plain numpy.  Nothing here imports ``dualcyclegan``.
"""

from __future__ import annotations

import math

import numpy as np


# ----------------------------------------------------------------------------
# resampling
# ----------------------------------------------------------------------------


def fft_resample(x: np.ndarray, n_out: int) -> np.ndarray:
    """Ideal band-limited resampling of a periodic signal by spectrum zero-padding or truncation.

    Exact for signals whose period divides ``len(x)`` and whose content lies
    below both Nyquist frequencies.
    """
    n_in = len(x)
    spec = np.fft.rfft(x)
    out = np.zeros(n_out // 2 + 1, dtype=complex)
    keep = min(len(spec), len(out))
    out[:keep] = spec[:keep]
    return np.fft.irfft(out, n_out) * (n_out / n_in)


def tone_mix(freqs, amps, rate: int, n: int, phases=None) -> np.ndarray:
    t = np.arange(n) / rate
    phases = np.zeros(len(freqs)) if phases is None else phases
    return sum(a * np.sin(2 * np.pi * f * t + p) for f, a, p in zip(freqs, amps, phases))


# ----------------------------------------------------------------------------
# spectra
# ----------------------------------------------------------------------------


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2 * np.pi * k / n)


def naive_dft_magnitude(frame: np.ndarray) -> np.ndarray:
    """|DFT| of one frame by the defining sum, bins 0..N/2."""
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    m = np.arange(n)[None, :]
    basis = np.exp(-2j * np.pi * k * m / n)
    return np.abs(basis @ frame)


def framed(x: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    """Centre-padded (reflect) frames, ``len(x) // hop + 1`` of them."""
    pad = fft_size // 2
    padded = np.pad(x, (pad, pad), mode="reflect")
    count = len(x) // hop + 1
    return np.stack([padded[i * hop:i * hop + fft_size] for i in range(count)])


def slaney_hz_to_mel(f: float) -> float:
    if f < 1000.0:
        return 3.0 * f / 200.0
    return 15.0 + 27.0 * math.log(f / 1000.0) / math.log(6.4)


def slaney_mel_to_hz(m: float) -> float:
    if m < 15.0:
        return 200.0 * m / 3.0
    return 1000.0 * math.exp((m - 15.0) * math.log(6.4) / 27.0)


def mel_matrix(rate: int, fft_size: int, n_mels: int, fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Area-normalized triangular filters, built one filter and one bin at a time."""
    fmax = rate / 2 if fmax is None else fmax
    lo, hi = slaney_hz_to_mel(fmin), slaney_hz_to_mel(fmax)
    edges = [slaney_mel_to_hz(lo + (hi - lo) * i / (n_mels + 1)) for i in range(n_mels + 2)]
    n_bins = fft_size // 2 + 1
    bins = [rate / 2 * j / (n_bins - 1) for j in range(n_bins)]
    out = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, centre, right = edges[m], edges[m + 1], edges[m + 2]
        for j, f in enumerate(bins):
            if left < f <= centre:
                w = (f - left) / (centre - left)
            elif centre < f < right:
                w = (right - f) / (right - centre)
            else:
                w = 0.0
            out[m, j] = w * 2.0 / (right - left)
    return out


def log_mel(x: np.ndarray, rate: int, fft_size: int, hop: int, n_mels: int, floor: float = 1e-5) -> np.ndarray:
    frames = framed(x, fft_size, hop) * hann(fft_size)
    mag = np.abs(np.fft.rfft(frames, axis=-1))
    mel = mag @ mel_matrix(rate, fft_size, n_mels).T
    return np.log(np.maximum(mel, floor))


def mel_l1(a: np.ndarray, b: np.ndarray, rate: int, fft_size: int, hop: int, n_mels: int) -> float:
    return float(np.mean(np.abs(log_mel(a, rate, fft_size, hop, n_mels) - log_mel(b, rate, fft_size, hop, n_mels))))


# ----------------------------------------------------------------------------
# optimization
# ----------------------------------------------------------------------------


def scalar_adam(theta: float, grads, lr: float, beta1: float, beta2: float, eps: float) -> list[float]:
    """Textbook bias-corrected Adam on a scalar; returns the trajectory."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        out.append(theta)
    return out


def central_difference(f, x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` by central differences."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        up = f(x)
        flat[i] = keep - eps
        down = f(x)
        flat[i] = keep
        g[i] = (up - down) / (2 * eps)
    return grad
