"""Least-squares adversarial, cycle-consistency and identity objectives.

Waveform batches are ``(B, T)`` tensors: ``x`` (source LR) and ``z`` (target
LR) at 16 kHz, ``y`` (target HR, the 48 kHz original of ``z``) at 48 kHz.

A discriminator's two outputs are reduced to one score per clip by
:func:`score`; the adversarial terms are batch means of squared distances of
that score to the labels 0 and 1.  The cycle and identity terms compare
signals with the log-mel L1 distance (or plain waveform L1 when
``SpectralLossConfig.domain == "waveform"``).

Generator-side losses evaluate discriminators with frozen parameters, and
discriminator-side losses receive detached generator outputs, so each
objective only produces gradients for the networks it trains.
"""

from __future__ import annotations

import contextlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import torch

from . import dsp
from .dsp import SpectrogramConfig
from .errors import DomainError, ParameterError
from .model import ModelBundle

PRETRAIN = "pretrain"
FINETUNE = "finetune"
STAGES = (PRETRAIN, FINETUNE)


@dataclass
class LossWeights:
    w_adv: float = 1.0
    w_cyc: float = 10.0
    w_idt: float = 10.0

    def __post_init__(self):
        if min(self.w_adv, self.w_cyc, self.w_idt) < 0:
            raise ParameterError("loss weights must be non-negative")


@dataclass
class LossBreakdown:
    adv: float
    cyc: float
    idt: float
    fake: float
    real: float
    total_g: float
    total_d: float

    def log_record(self, iteration: int, stage: str) -> dict:
        return {"iter": iteration, "stage": stage, **asdict(self)}

    def to_json(self, iteration: int, stage: str) -> str:
        return json.dumps(self.log_record(iteration, stage))


def combine(adv, cyc, idt, fake, real, weights: LossWeights, idt_active: bool = True) -> LossBreakdown:
    """Weighted generator total and summed discriminator total."""
    total_g = weights.w_adv * adv + weights.w_cyc * cyc
    if idt_active:
        total_g = total_g + weights.w_idt * idt
    return LossBreakdown(float(adv), float(cyc), float(idt), float(fake), float(real),
                         float(total_g), float(fake + real))


@dataclass(frozen=True)
class SpectralLossConfig:
    """Distance used by the cycle and identity terms, one front end per rate."""

    lr: SpectrogramConfig = field(default_factory=lambda: dsp.default_spectrogram_config(dsp.LR_RATE))
    hr: SpectrogramConfig = field(default_factory=lambda: dsp.default_spectrogram_config(dsp.HR_RATE))
    domain: str = "mel"

    def __post_init__(self):
        if self.domain not in ("mel", "waveform"):
            raise ParameterError(f"domain must be 'mel' or 'waveform', got {self.domain!r}")

    def distance(self, a: torch.Tensor, b: torch.Tensor, rate: int) -> torch.Tensor:
        """Batch-mean distance between two equally shaped ``(B, T)`` batches."""
        if a.shape != b.shape:
            raise DomainError(f"compared signals differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")
        if self.domain == "waveform":
            return (a - b).abs().mean()
        cfg = self.hr if rate == dsp.HR_RATE else self.lr
        return dsp.mel_l1_tensor(a, b, cfg).mean()


def score(disc, u: torch.Tensor) -> torch.Tensor:
    """Per-clip discriminator score: average of the time-averaged waveform map
    and the spectral scalar."""
    out = disc(u)
    return 0.5 * (out.waveform_map.mean(dim=-1) + out.spectral_scalar)


def scores(disc, *batches: torch.Tensor) -> list[torch.Tensor]:
    """:func:`score` of several batches, evaluated in one call when their lengths agree."""
    if len({b.shape[-1] for b in batches}) != 1:
        return [score(disc, b) for b in batches]
    joint = score(disc, torch.cat(batches, dim=0))
    return list(joint.split([b.shape[0] for b in batches]))


@contextlib.contextmanager
def frozen(*modules):
    """Temporarily disable gradients for the parameters of ``modules``."""
    params = [p for m in modules for p in m.parameters()]
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad_(False)
    try:
        yield
    finally:
        for p, flag in zip(params, flags):
            p.requires_grad_(flag)


class Fakes(NamedTuple):
    """Generated batches shown to each discriminator.

    ``d2_da`` comes from the domain-adaptation CycleGAN and ``d2_rs`` from the
    resampling CycleGAN; both are judged by the shared D2.
    """

    d1: torch.Tensor
    d2_da: torch.Tensor
    d2_rs: torch.Tensor
    d3: torch.Tensor

    def detach(self) -> "Fakes":
        return Fakes(*(t.detach() for t in self))


def _check_batch(x, y, z=None):
    for name, t in (("x", x), ("y", y), ("z", z)):
        if t is not None and t.dim() != 2:
            raise DomainError(f"{name} must be a (batch, time) tensor, got shape {tuple(t.shape)}")
    if z is not None:
        if y.shape[-1] != 3 * z.shape[-1]:
            raise DomainError(
                f"y ({y.shape[-1]} samples) must be the 48 kHz counterpart of z ({z.shape[-1]} samples)"
            )
    elif y.shape[-1] % 3:
        raise DomainError(f"y length {y.shape[-1]} is not a multiple of 3")


def adversarial(bundle: ModelBundle, fakes: Fakes) -> torch.Tensor:
    """Generator-side LSGAN loss: sum of ``(1 - D(fake))^2`` terms."""
    with frozen(bundle.d1, bundle.d2, bundle.d3):
        (s1,) = scores(bundle.d1, fakes.d1)
        s2a, s2b = scores(bundle.d2, fakes.d2_da, fakes.d2_rs)
        (s3,) = scores(bundle.d3, fakes.d3)
    return sum((1 - s).square().mean() for s in (s1, s2a, s2b, s3))


def _fake_terms(s1, s2a, s2b, s3) -> torch.Tensor:
    # the two shared-D2 terms are halved
    return s1.square().mean() + s2a.square().mean() / 2 + s2b.square().mean() / 2 + s3.square().mean()


def _real_terms(r1, r2, r3) -> torch.Tensor:
    return sum((1 - r).square().mean() for r in (r1, r2, r3))


def fake_loss(bundle: ModelBundle, fakes: Fakes) -> torch.Tensor:
    """Discriminator-side loss on generated samples."""
    fakes = fakes.detach()
    (s1,) = scores(bundle.d1, fakes.d1)
    s2a, s2b = scores(bundle.d2, fakes.d2_da, fakes.d2_rs)
    (s3,) = scores(bundle.d3, fakes.d3)
    return _fake_terms(s1, s2a, s2b, s3)


def disc_real_loss(bundle: ModelBundle, x, y, z) -> torch.Tensor:
    _check_batch(x, y, z)
    return _real_terms(score(bundle.d1, x), score(bundle.d2, z), score(bundle.d3, y))


# ----------------------------------------------------------------------------
# joint pre-training
# ----------------------------------------------------------------------------


def pretrain_fakes(bundle: ModelBundle, x, y, z) -> Fakes:
    _check_batch(x, y, z)
    return Fakes(bundle.g2(z), bundle.g1(x), bundle.g4(y), bundle.g3(z))


def adv_loss_pretrain(bundle: ModelBundle, x, y, z) -> torch.Tensor:
    return adversarial(bundle, pretrain_fakes(bundle, x, y, z))


def disc_fake_loss_pretrain(bundle: ModelBundle, x, y, z) -> torch.Tensor:
    with torch.no_grad():
        fakes = pretrain_fakes(bundle, x, y, z)
    return fake_loss(bundle, fakes)


def _cyc_pretrain(bundle, x, y, z, fakes: Fakes, cfg: SpectralLossConfig) -> torch.Tensor:
    g2z, g1x, g4y, g3z = fakes
    lr, hr = dsp.LR_RATE, dsp.HR_RATE
    return (
        cfg.distance(x, bundle.g2(g1x), lr)
        + cfg.distance(z, bundle.g1(g2z), lr)
        + cfg.distance(y, bundle.g3(g4y), hr)
        + cfg.distance(z, bundle.g4(g3z), lr)
    )


def cyc_loss_pretrain(bundle: ModelBundle, x, y, z, cfg: SpectralLossConfig | None = None) -> torch.Tensor:
    cfg = cfg or SpectralLossConfig()
    return _cyc_pretrain(bundle, x, y, z, pretrain_fakes(bundle, x, y, z), cfg)


def _idt(bundle, x, y, z, g3z, g4y, cfg: SpectralLossConfig) -> torch.Tensor:
    lr, hr = dsp.LR_RATE, dsp.HR_RATE
    return (
        cfg.distance(x, bundle.g2(x), lr)
        + cfg.distance(z, bundle.g1(z), lr)
        + cfg.distance(y, g3z, hr)
        + cfg.distance(z, g4y, lr)
    )


def idt_loss(bundle: ModelBundle, x, y, z, cfg: SpectralLossConfig | None = None) -> torch.Tensor:
    """Identity mapping loss; the resampling terms use the (z, y) parallel pairing."""
    cfg = cfg or SpectralLossConfig()
    _check_batch(x, y, z)
    return _idt(bundle, x, y, z, bundle.g3(z), bundle.g4(y), cfg)


# ----------------------------------------------------------------------------
# fine-tuning
# ----------------------------------------------------------------------------


class FinetuneChains(NamedTuple):
    g1x: torch.Tensor
    g3g1x: torch.Tensor
    g4y: torch.Tensor
    g2g4y: torch.Tensor

    def fakes(self) -> Fakes:
        return Fakes(self.g2g4y, self.g1x, self.g4y, self.g3g1x)


def finetune_chains(bundle: ModelBundle, x, y) -> FinetuneChains:
    _check_batch(x, y)
    g1x = bundle.g1(x)
    g4y = bundle.g4(y)
    return FinetuneChains(g1x, bundle.g3(g1x), g4y, bundle.g2(g4y))


def adv_loss_finetune(bundle: ModelBundle, x, y) -> torch.Tensor:
    return adversarial(bundle, finetune_chains(bundle, x, y).fakes())


def disc_fake_loss_finetune(bundle: ModelBundle, x, y) -> torch.Tensor:
    with torch.no_grad():
        fakes = finetune_chains(bundle, x, y).fakes()
    return fake_loss(bundle, fakes)


def _cyc_finetune(bundle, x, y, chains: FinetuneChains, cfg: SpectralLossConfig) -> torch.Tensor:
    g1x, g3g1x, g4y, g2g4y = chains
    back_lr = bundle.g4(g3g1x)
    fwd_lr = bundle.g1(g2g4y)
    lr, hr = dsp.LR_RATE, dsp.HR_RATE
    return (
        cfg.distance(x, bundle.g2(back_lr), lr)
        + cfg.distance(g1x, back_lr, lr)
        + cfg.distance(y, bundle.g3(fwd_lr), hr)
        + cfg.distance(g4y, fwd_lr, lr)
    )


def cyc_loss_finetune(bundle: ModelBundle, x, y, cfg: SpectralLossConfig | None = None) -> torch.Tensor:
    """Cycle loss through all four generators, in both directions."""
    cfg = cfg or SpectralLossConfig()
    return _cyc_finetune(bundle, x, y, finetune_chains(bundle, x, y), cfg)


# ----------------------------------------------------------------------------
# full objectives
# ----------------------------------------------------------------------------


class GeneratorObjective(NamedTuple):
    total: torch.Tensor
    adv: torch.Tensor
    cyc: torch.Tensor
    idt: torch.Tensor
    fakes: Fakes


def generator_objective(bundle: ModelBundle, x, y, z, stage: str, weights: LossWeights,
                        cfg: SpectralLossConfig, idt_active: bool) -> GeneratorObjective:
    """Differentiable generator loss for one batch.

    The identity term is only evaluated when ``idt_active``; otherwise it is
    reported as zero.
    """
    if stage == PRETRAIN:
        fakes = pretrain_fakes(bundle, x, y, z)
        cyc = _cyc_pretrain(bundle, x, y, z, fakes, cfg)
    elif stage == FINETUNE:
        _check_batch(x, y, z)
        chains = finetune_chains(bundle, x, y)
        fakes = chains.fakes()
        cyc = _cyc_finetune(bundle, x, y, chains, cfg)
    else:
        raise ParameterError(f"unknown stage {stage!r}")
    adv = adversarial(bundle, fakes)
    total = weights.w_adv * adv + weights.w_cyc * cyc
    if idt_active:
        if stage == PRETRAIN:
            idt = _idt(bundle, x, y, z, fakes.d3, fakes.d2_rs, cfg)
        else:
            idt = idt_loss(bundle, x, y, z, cfg)
        total = total + weights.w_idt * idt
    else:
        idt = torch.zeros((), dtype=adv.dtype)
    return GeneratorObjective(total, adv, cyc, idt, fakes)


def discriminator_objective(bundle: ModelBundle, x, y, z, fakes: Fakes) -> tuple[torch.Tensor, torch.Tensor]:
    """(fake, real) discriminator losses on detached generator outputs.

    Real and generated batches seen by the same discriminator share one
    forward pass.
    """
    _check_batch(x, y, z)
    fakes = fakes.detach()
    s1, r1 = scores(bundle.d1, fakes.d1, x)
    s2a, s2b, r2 = scores(bundle.d2, fakes.d2_da, fakes.d2_rs, z)
    s3, r3 = scores(bundle.d3, fakes.d3, y)
    return _fake_terms(s1, s2a, s2b, s3), _real_terms(r1, r2, r3)


def total_losses(bundle: ModelBundle, batch, stage: str, iteration: int, weights: LossWeights | None = None,
                 cfg: SpectralLossConfig | None = None, idt_cutoff: int = 100_000) -> LossBreakdown:
    """Evaluate every loss term for a batch without building a graph."""
    weights = weights or LossWeights()
    cfg = cfg or SpectralLossConfig()
    x, y, z = batch.tensors(next(bundle.parameters()).dtype)
    active = iteration < idt_cutoff
    with torch.no_grad():
        g = generator_objective(bundle, x, y, z, stage, weights, cfg, active)
        fake, real = discriminator_objective(bundle, x, y, z, g.fakes)
    return combine(g.adv.item(), g.cyc.item(), g.idt.item(), fake.item(), real.item(), weights, active)


def is_finite(value) -> bool:
    return math.isfinite(float(value))
