"""Numerical tour of the signal-processing building blocks.

Shows the 151-tap sinc resampler against band-limited interpolation, the
useful bandwidth of an up/down round trip, the 70 Hz high-pass and the
log-spectral distance of the sinc upsampler against a full-band signal.

    python demos/dsp_tour.py
"""

import numpy as np

from dualcyclegan import dsp
from dualcyclegan.dsp import DOWN_48_16, UP_16_48, AudioClip
from dualcyclegan.fixtures import synth_utterance


def ideal_resample(x: np.ndarray, n_out: int) -> np.ndarray:
    """Band-limited resampling of a periodic signal by zero-padding its spectrum."""
    spec = np.fft.rfft(x)
    out = np.zeros(n_out // 2 + 1, dtype=complex)
    k = min(len(spec), len(out))
    out[:k] = spec[:k]
    return np.fft.irfft(out, n_out) * n_out / len(x)


def resampler_accuracy():
    print("up x3 against band-limited interpolation (interior max abs error)")
    n = 4800
    for f in (250.0, 1000.0, 3000.0, 5000.0, 6000.0, 7000.0):
        x = np.sin(2 * np.pi * f * np.arange(n) / 16000)
        got = dsp.sinc_resample(AudioClip(x, 16000), UP_16_48).samples
        err = np.max(np.abs(got - ideal_resample(x, 3 * n))[1000:-1000])
        back = dsp.sinc_resample(AudioClip(got, 48000), DOWN_48_16).samples
        rt = np.max(np.abs(back - x)[333:-333])
        print(f"  {f:6.0f} Hz  up {err:.1e}   round trip {rt:.1e}")


def highpass_response():
    print("70 Hz high-pass, forward-backward (gain of a steady tone)")
    t = np.arange(48000 * 2) / 48000
    for f in (20.0, 50.0, 70.0, 100.0, 300.0):
        y = dsp.highpass(AudioClip(np.sin(2 * np.pi * f * t), 48000)).samples
        gain = np.sqrt(np.mean(y[24000:-24000] ** 2) * 2)
        print(f"  {f:5.0f} Hz  {20 * np.log10(gain):7.2f} dB")


def bandwidth_gap():
    print("what plain resampling leaves out")
    hr = AudioClip(synth_utterance(1.5, 48000, 120.0, seed=1), 48000)
    lr = dsp.sinc_resample(hr, DOWN_48_16)
    up = dsp.sinc_resample(lr, UP_16_48)
    cfg = dsp.default_spectrogram_config(48000)
    print(f"  LSD(original, sinc-upsampled)   {dsp.log_spectral_distance(hr, up, cfg):.2f} dB")
    print(f"  SNR(original, sinc-upsampled)   {dsp.snr_db(hr, up):.2f} dB")
    mel = dsp.spectrogram(hr, cfg)
    edges = dsp.mel_to_hz(np.linspace(dsp.hz_to_mel(0.0), dsp.hz_to_mel(24000.0), cfg.n_mels + 2))[1:-1]
    upper = edges > 8000
    gap = (mel - dsp.spectrogram(up, cfg))[:, upper].mean()
    print(f"  mean log-mel deficit above 8 kHz {gap:.2f} nats")


if __name__ == "__main__":
    resampler_accuracy()
    highpass_response()
    bandwidth_gap()
