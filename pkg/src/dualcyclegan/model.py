"""Generators, discriminators and the Dual-CycleGAN parameter bundle.

Tensor layout throughout is ``(batch, time)`` for waveforms.  The generator
``G1``/``G2`` pair maps between the two 16 kHz domains, ``G3`` upsamples
16 kHz to 48 kHz and ``G4`` downsamples 48 kHz to 16 kHz.  ``D2`` is a single
module referenced by both CycleGANs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import dsp
from .dsp import AudioClip
from .errors import CorruptModelError, DegenerateWeightError, LengthError, ParameterError


def apply_weight_norm(raw: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Split a weight tensor into a direction ``v`` and per-output-channel gain ``g``.

    ``v`` is a copy of ``raw`` and ``g`` is the L2 norm of each output channel,
    so that ``g * v / ||v||`` reproduces ``raw``.

    Raises:
        DegenerateWeightError: if any output channel has zero norm.
    """
    raw = torch.as_tensor(raw)
    norms = raw.reshape(raw.shape[0], -1).norm(dim=1)
    if torch.any(norms == 0):
        raise DegenerateWeightError("weight normalization of a zero-norm output channel")
    return raw.detach().clone(), norms.detach().clone()


def weight_from_norm(v: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """Effective weight ``g * v / ||v||`` (norm taken per output channel)."""
    norm = v.reshape(v.shape[0], -1).norm(dim=1)
    shape = (-1,) + (1,) * (v.dim() - 1)
    return v * (g / norm).reshape(shape)


class WNConv1d(nn.Module):
    """1-D convolution with weight normalization and "same" zero padding."""

    def __init__(self, in_channels, out_channels, kernel_size, dilation=1, groups=1, bias=True):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ParameterError("kernel size must be odd for same padding")
        conv = nn.Conv1d(in_channels, out_channels, kernel_size, dilation=dilation, groups=groups, bias=bias)
        v, g = apply_weight_norm(conv.weight.data)
        self.v = nn.Parameter(v)
        self.g = nn.Parameter(g)
        self.bias = nn.Parameter(conv.bias.data.clone()) if bias else None
        self.dilation = dilation
        self.groups = groups
        self.padding = dilation * (kernel_size - 1) // 2

    @property
    def weight(self) -> torch.Tensor:
        return weight_from_norm(self.v, self.g)

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, padding=self.padding,
                        dilation=self.dilation, groups=self.groups)


def glu(x: torch.Tensor) -> torch.Tensor:
    """Gated linear unit over the channel axis: first half * sigmoid(second half)."""
    a, b = x.chunk(2, dim=1)
    return a * torch.sigmoid(b)


class ResidualGLUBlock(nn.Module):
    def __init__(self, channels, kernel_size, dilation):
        super().__init__()
        self.conv = WNConv1d(channels, 2 * channels, kernel_size, dilation=dilation)

    def forward(self, x):
        return x + glu(self.conv(x))


@dataclass
class ModelConfig:
    """Network dimensions.  Defaults are the full-size configuration."""

    channels: int = 128
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    block_kernel: int = 5
    edge_kernel: int = 15
    # output = (resampled) input + network; False makes the net predict the waveform
    input_skip: bool = True
    disc_layers: int = 10
    disc_channels: int = 64
    disc_max_dilation: int = 64
    spectral_groups: tuple[int, ...] = (1, 2, 4)
    spectral_hidden: int = 8
    spectral_layers: int = 4
    # STFT sizes of the spectral discriminator branch (hop = fft / 4)
    disc_fft_lr: int = 1024
    disc_fft_hr: int = 2048
    resampler_taps: int = 151

    def __post_init__(self):
        self.dilations = tuple(int(d) for d in self.dilations)
        self.spectral_groups = tuple(int(g) for g in self.spectral_groups)

    @classmethod
    def desk(cls) -> "ModelConfig":
        """Laptop-scale preset (C=32, K=3)."""
        return cls(channels=32, dilations=(1, 2, 4), disc_layers=6, disc_channels=16,
                   disc_max_dilation=8, spectral_groups=(4, 8, 16), spectral_hidden=4,
                   disc_fft_lr=512, disc_fft_hr=1536)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        d["spectral_groups"] = list(self.spectral_groups)
        return d


class Generator(nn.Module):
    """GLU convolutional waveform generator with an optional fixed sinc resampler in front.

    Args:
        cfg: network dimensions.
        mode: ``"none"`` (rate preserving), ``"up3"`` or ``"down3"``.
    """

    def __init__(self, cfg: ModelConfig, mode: str = "none"):
        super().__init__()
        if mode not in ("none", "up3", "down3"):
            raise ParameterError(f"unknown resample mode {mode!r}")
        self.mode = mode
        self.input_skip = cfg.input_skip
        c = cfg.channels
        self.input_conv = WNConv1d(1, 2 * c, cfg.edge_kernel)
        self.blocks = nn.ModuleList(ResidualGLUBlock(c, cfg.block_kernel, d) for d in cfg.dilations)
        self.output_conv = WNConv1d(c, 2 * c, cfg.edge_kernel)
        self.output_proj = WNConv1d(c, 1, 1)
        if mode != "none":
            spec = dsp.UP_16_48 if mode == "up3" else dsp.DOWN_48_16
            self.resample_spec = dsp.ResampleSpec(spec.from_rate, spec.to_rate, taps=cfg.resampler_taps)
        self.receptive_field = (
            1 + 2 * (cfg.edge_kernel - 1) + sum((cfg.block_kernel - 1) * d for d in cfg.dilations)
        )

    def output_length(self, length: int) -> int:
        if self.mode == "up3":
            return 3 * length
        if self.mode == "down3":
            if length % 3:
                raise LengthError(f"down3 generator needs a length divisible by 3, got {length}")
            return length // 3
        return length

    def resample(self, x: torch.Tensor) -> torch.Tensor:
        """Apply only the fixed resampler, ``(B, 1, T)`` in and out."""
        if self.mode == "none":
            return x
        # built from the cached float64 design at the input's precision
        kernel = dsp.sinc_kernel_tensor(self.resample_spec, x.dtype)
        if self.mode == "up3":
            return dsp.upsample3_tensor(x, kernel)
        return dsp.downsample3_tensor(x, kernel)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.output_length(x.shape[-1])
        h = self.resample(x.unsqueeze(1))
        if h.shape[-1] < self.receptive_field:
            raise LengthError(
                f"input of {h.shape[-1]} samples is shorter than the receptive field ({self.receptive_field})"
            )
        skip = h
        h = glu(self.input_conv(h))
        for block in self.blocks:
            h = block(h)
        h = self.output_proj(glu(self.output_conv(h)))
        if self.input_skip:
            h = h + skip
        return h.squeeze(1)

    def zero_output(self) -> "Generator":
        """Zero the final projection.  With ``input_skip`` this turns the
        generator into its fixed resampler (identity for mode ``none``)."""
        with torch.no_grad():
            self.output_proj.g.zero_()
            self.output_proj.bias.zero_()
        return self


class DiscOutput(NamedTuple):
    waveform_map: torch.Tensor  # (B, T)
    spectral_scalar: torch.Tensor  # (B,)


class WaveformDiscriminator(nn.Module):
    """Parallel WaveGAN style stack of dilated convolutions with leaky ReLU."""

    def __init__(self, layers=10, channels=64, max_dilation=64, kernel_size=3, slope=0.2):
        super().__init__()
        if layers < 2:
            raise ParameterError("waveform discriminator needs at least two layers")
        convs = [WNConv1d(1, channels, kernel_size)]
        for i in range(layers - 2):
            convs.append(WNConv1d(channels, channels, kernel_size, dilation=min(2 ** i, max_dilation)))
        convs.append(WNConv1d(channels, 1, kernel_size))
        self.convs = nn.ModuleList(convs)
        self.slope = slope

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = x.unsqueeze(1)
        for conv in self.convs[:-1]:
            h = F.leaky_relu(conv(h), self.slope)
        return self.convs[-1](h).squeeze(1)


class GroupedSpectralDiscriminator(nn.Module):
    """Band-wise sub-discriminator: adjacent bins are grouped ``group_size`` at a
    time and each group is processed by its own convolution stack over frames."""

    def __init__(self, n_bins, group_size, hidden=8, layers=4, slope=0.2):
        super().__init__()
        self.n_groups = math.ceil(n_bins / group_size)
        self.pad = self.n_groups * group_size - n_bins
        n = self.n_groups
        widths = [group_size] + [hidden] * (layers - 1) + [1]
        self.convs = nn.ModuleList(
            WNConv1d(n * a, n * b, 3, groups=n) for a, b in zip(widths[:-1], widths[1:])
        )
        self.slope = slope

    def forward(self, logspec: torch.Tensor) -> torch.Tensor:
        """``(B, frames, bins)`` to per-group scores ``(B, n_groups)`` (mean over frames)."""
        h = F.pad(logspec, (0, self.pad)).transpose(1, 2)
        for conv in self.convs[:-1]:
            h = F.leaky_relu(conv(h), self.slope)
        return self.convs[-1](h).mean(dim=-1)


class Discriminator(nn.Module):
    """Waveform branch plus grouped log-amplitude spectral branch.

    The spectral sub-discriminator outputs are concatenated and mapped to one
    scalar by a fully connected summarizer.
    """

    def __init__(self, cfg: ModelConfig, sample_rate: int):
        super().__init__()
        self.sample_rate = sample_rate
        fft = cfg.disc_fft_hr if sample_rate == dsp.HR_RATE else cfg.disc_fft_lr
        self.spec_cfg = dsp.SpectrogramConfig(sample_rate, fft, fft // 4, fft, n_mels=0)
        self.waveform = WaveformDiscriminator(cfg.disc_layers, cfg.disc_channels, cfg.disc_max_dilation)
        n_bins = self.spec_cfg.n_bins
        self.spectral = nn.ModuleList(
            GroupedSpectralDiscriminator(n_bins, g, cfg.spectral_hidden, cfg.spectral_layers)
            for g in cfg.spectral_groups
        )
        self.summarizer = nn.Linear(sum(s.n_groups for s in self.spectral), 1)

    def forward(self, x: torch.Tensor) -> DiscOutput:
        if x.shape[-1] < self.spec_cfg.win_length:
            raise LengthError(f"discriminator input of {x.shape[-1]} samples is shorter than one STFT window")
        logspec = dsp.log_spectrogram_tensor(x, self.spec_cfg)
        feats = torch.cat([sub(logspec) for sub in self.spectral], dim=-1)
        return DiscOutput(self.waveform(x), self.summarizer(feats).squeeze(-1))


class ModelBundle(nn.Module):
    """G1..G4 and D1..D3.  ``d2`` is one module shared by both CycleGANs."""

    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        self.g1 = Generator(cfg, "none")  # S_LR -> T_LR
        self.g2 = Generator(cfg, "none")  # T_LR -> S_LR
        self.g3 = Generator(cfg, "up3")  # T_LR -> T_HR
        self.g4 = Generator(cfg, "down3")  # T_HR -> T_LR
        self.d1 = Discriminator(cfg, dsp.LR_RATE)  # real: S_LR
        self.d2 = Discriminator(cfg, dsp.LR_RATE)  # real: T_LR
        self.d3 = Discriminator(cfg, dsp.HR_RATE)  # real: T_HR

    GENERATORS = ("g1", "g2", "g3", "g4")
    DISCRIMINATORS = ("d1", "d2", "d3")

    def generators(self) -> dict[str, nn.Module]:
        return {name: getattr(self, name) for name in self.GENERATORS}

    def discriminators(self) -> dict[str, nn.Module]:
        return {name: getattr(self, name) for name in self.DISCRIMINATORS}

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Flat ``"g1.blocks.0.conv.v" -> array`` mapping of all parameters."""
        return {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}


def check_finite(module: nn.Module) -> None:
    for name, p in module.named_parameters():
        if not torch.isfinite(p).all():
            raise CorruptModelError(f"parameter {name} contains non-finite values")


def _clip_to_tensor(clip: AudioClip, module: nn.Module) -> torch.Tensor:
    dtype = next(module.parameters()).dtype
    return torch.as_tensor(clip.samples, dtype=dtype).unsqueeze(0)


_EXPECTED_RATE = {"none": dsp.LR_RATE, "up3": dsp.LR_RATE, "down3": dsp.HR_RATE}


def generator_forward(gen: Generator, clip: AudioClip) -> AudioClip:
    """Run one generator on a clip.

    Raises:
        LengthError: divisibility or receptive-field violation.
        CorruptModelError: non-finite parameters.
    """
    check_finite(gen)
    if clip.sample_rate != _EXPECTED_RATE[gen.mode]:
        raise ParameterError(f"{gen.mode} generator expects {_EXPECTED_RATE[gen.mode]} Hz input")
    rate = {"none": clip.sample_rate, "up3": clip.sample_rate * 3, "down3": clip.sample_rate // 3}[gen.mode]
    with torch.no_grad():
        out = gen(_clip_to_tensor(clip, gen))[0]
    return AudioClip(out.double().numpy(), rate)


def discriminator_forward(disc: Discriminator, clip: AudioClip) -> DiscOutput:
    with torch.no_grad():
        out = disc(_clip_to_tensor(clip, disc))
    return DiscOutput(out.waveform_map[0], out.spectral_scalar[0])


def composite_sr(bundle: ModelBundle, x: AudioClip) -> AudioClip:
    """Super-resolve a 16 kHz source-domain clip: ``G3(G1(x))`` at 48 kHz."""
    if x.sample_rate != dsp.LR_RATE:
        raise ParameterError(f"expected {dsp.LR_RATE} Hz input, got {x.sample_rate} Hz")
    check_finite(bundle.g1)
    check_finite(bundle.g3)
    with torch.no_grad():
        t = _clip_to_tensor(x, bundle.g1)
        out = bundle.g3(bundle.g1(t))[0]
    return AudioClip(out.double().numpy(), dsp.HR_RATE)
