import sys

import numpy as np
import pytest
import torch

from dualcyclegan import dsp
from dualcyclegan.losses import SpectralLossConfig
from dualcyclegan.model import DiscOutput, ModelBundle, ModelConfig


def tiny_model_config(**overrides) -> ModelConfig:
    """A few hundred parameters per network, for finite-difference checks."""
    base = dict(channels=2, dilations=(1, 2), block_kernel=3, edge_kernel=3, disc_layers=3,
                disc_channels=2, disc_max_dilation=2, spectral_groups=(32, 64), spectral_hidden=2,
                spectral_layers=2, disc_fft_lr=128, disc_fft_hr=384)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_loss_config(domain="mel") -> SpectralLossConfig:
    return SpectralLossConfig(
        lr=dsp.SpectrogramConfig(16000, 128, 32, 128, n_mels=16),
        hr=dsp.SpectrogramConfig(48000, 384, 96, 384, n_mels=16),
        domain=domain,
    )


def tiny_bundle(seed=0, dtype=torch.float64, **overrides) -> ModelBundle:
    torch.manual_seed(seed)
    return ModelBundle(tiny_model_config(**overrides)).to(dtype)


def random_batch(batch=2, length=300, seed=0, dtype=torch.float64):
    """(x, y, z) with y three times as long as z."""
    g = torch.Generator().manual_seed(seed)
    x = 0.1 * torch.randn(batch, length, generator=g, dtype=dtype)
    z = 0.1 * torch.randn(batch, length, generator=g, dtype=dtype)
    y = 0.1 * torch.randn(batch, 3 * length, generator=g, dtype=dtype)
    return x, y, z


class ConstantDisc(torch.nn.Module):
    """Discriminator stub whose per-clip score is always ``value``."""

    def __init__(self, value: float):
        super().__init__()
        self.value = value

    def forward(self, x):
        return DiscOutput(torch.full_like(x, self.value), torch.full(x.shape[:1], self.value, dtype=x.dtype))


def stub_discriminators(bundle, d1, d2, d3):
    bundle.d1, bundle.d2, bundle.d3 = ConstantDisc(d1), ConstantDisc(d2), ConstantDisc(d3)
    return bundle


@pytest.fixture
def bundle():
    return tiny_bundle()


@pytest.fixture
def batch():
    return random_batch()


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """Raw and preprocessed versions of the small synthetic corpus."""
    from dualcyclegan import data
    from dualcyclegan.fixtures import write_fixture_corpus

    root = tmp_path_factory.mktemp("corpus")
    source, target = write_fixture_corpus(root)
    out = root / "prepared"
    src = data.preprocess_corpus(source, "source", out)
    tgt = data.preprocess_corpus(target, "target", out)
    manifest = data.Manifest(src.entries + tgt.entries, out)
    return {"root": root, "source": source, "target": target, "out": out, "manifest": manifest}


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
