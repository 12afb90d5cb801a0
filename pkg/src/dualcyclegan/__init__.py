"""Nonparallel audio super-resolution with two connected CycleGANs.

A domain-adaptation CycleGAN (G1, G2; D1, D2) maps source-domain 16 kHz
audio onto the target domain, and a resampling CycleGAN (G3, G4; D2, D3)
maps target-domain 16 kHz audio to 48 kHz.  Super-resolution of source
audio is ``G3(G1(x))``.

Submodules
----------
dsp         resampling, filtering, loudness, spectrograms, spectral distances
wavio       mono WAV input/output
model       generators, discriminators, weight normalization, ModelBundle
losses      pre-training and fine-tuning objectives
data        corpus preparation, manifests, splits, batch sampling
config      TrainConfig and its JSON / override handling
trainer     optimization loop, schedule, clipping, checkpoints
inference   whole-utterance super-resolution and evaluation
cli         ``python -m dualcyclegan`` command line
"""

from .dsp import AudioClip, ResampleSpec, SpectrogramConfig
from .model import ModelBundle, ModelConfig, composite_sr
from .config import TrainConfig

__version__ = "0.1.0"

__all__ = ["AudioClip", "ResampleSpec", "SpectrogramConfig", "ModelBundle", "ModelConfig",
           "composite_sr", "TrainConfig", "__version__"]
