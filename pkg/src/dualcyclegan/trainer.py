"""Two-stage training loop: joint pre-training followed by fine-tuning."""

from __future__ import annotations

import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

import numpy as np
import torch

from . import checkpoint as archive
from . import losses
from .config import TrainConfig
from .data import Corpus, Manifest, TrainingBatch, sample_batch
from .errors import IntegrityError, TrainingDivergenceError
from .losses import FINETUNE, PRETRAIN, LossBreakdown
from .model import ModelBundle

logger = logging.getLogger(__name__)


def lr_at(iteration: int, base_lr: float, half_every: int) -> float:
    """Learning rate halved after every ``half_every`` iterations."""
    return base_lr * 0.5 ** (iteration // half_every)


def global_norm(grads: Iterable[torch.Tensor]) -> float:
    return math.sqrt(sum(float(g.detach().double().square().sum()) for g in grads))


def clip_gradients(grads: list[torch.Tensor], max_norm: float = 10.0) -> list[torch.Tensor]:
    """Rescale ``grads`` in place so their global L2 norm is at most ``max_norm``.

    Raises:
        TrainingDivergenceError: if any gradient is non-finite.
    """
    grads = [g for g in grads if g is not None]
    norm = global_norm(grads)
    if not math.isfinite(norm):
        raise TrainingDivergenceError("non-finite gradient norm")
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g.mul_(scale)
        # rounding in low precision may leave the norm a hair above the bound
        shrink = 1.0 - max(torch.finfo(g.dtype).eps for g in grads)
        while global_norm(grads) > max_norm:
            for g in grads:
                g.mul_(shrink)
    return grads


def _make_optimizer(bundle: ModelBundle, names, lr, cfg: TrainConfig) -> torch.optim.Adam:
    groups = [{"params": list(getattr(bundle, n).parameters()), "name": n} for n in names]
    return torch.optim.Adam(groups, lr=lr, betas=tuple(cfg.adam_betas), eps=cfg.adam_eps)


@dataclass
class TrainState:
    config: TrainConfig
    bundle: ModelBundle
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    rng: np.random.Generator
    iter: int = 0
    stage: str = PRETRAIN
    best_valid_metric: float | None = None
    history: list[LossBreakdown] = field(default_factory=list, repr=False)

    @classmethod
    def initial(cls, config: TrainConfig) -> "TrainState":
        torch.manual_seed(config.seed)
        bundle = ModelBundle(config.model)
        opt_g = _make_optimizer(bundle, ModelBundle.GENERATORS, config.lr_g, config)
        opt_d = _make_optimizer(bundle, ModelBundle.DISCRIMINATORS, config.lr_d, config)
        return cls(config, bundle, opt_g, opt_d, np.random.default_rng(config.seed))


def _check(value: torch.Tensor, what: str, ckpt: str | None):
    if not torch.isfinite(value):
        raise TrainingDivergenceError(f"non-finite {what} loss", ckpt)


def train_step(state: TrainState, batch: TrainingBatch, last_checkpoint: str | None = None) -> LossBreakdown:
    """One generator update followed by one discriminator update."""
    cfg = state.config
    bundle = state.bundle
    it = state.iter
    for group in state.opt_g.param_groups:
        group["lr"] = lr_at(it, cfg.lr_g, cfg.lr_half_every)
    for group in state.opt_d.param_groups:
        group["lr"] = lr_at(it, cfg.lr_d, cfg.lr_half_every)
    dtype = next(bundle.parameters()).dtype
    x, y, z = batch.tensors(dtype)
    idt_active = it < cfg.idt_cutoff

    g = losses.generator_objective(bundle, x, y, z, state.stage, cfg.weights, cfg.loss_config(), idt_active)
    _check(g.total, "generator", last_checkpoint)
    state.opt_g.zero_grad(set_to_none=True)
    g.total.backward()
    try:
        for group in state.opt_g.param_groups:
            clip_gradients([p.grad for p in group["params"]], cfg.grad_clip_norm)
    except TrainingDivergenceError as exc:
        raise TrainingDivergenceError(str(exc), last_checkpoint) from None
    state.opt_g.step()

    fake, real = losses.discriminator_objective(bundle, x, y, z, g.fakes)
    total_d = fake + real
    _check(total_d, "discriminator", last_checkpoint)
    state.opt_d.zero_grad(set_to_none=True)
    total_d.backward()
    try:
        for group in state.opt_d.param_groups:
            clip_gradients([p.grad for p in group["params"]], cfg.grad_clip_norm)
    except TrainingDivergenceError as exc:
        raise TrainingDivergenceError(str(exc), last_checkpoint) from None
    state.opt_d.step()

    result = losses.combine(g.adv.item(), g.cyc.item(), g.idt.item(), fake.item(), real.item(),
                            cfg.weights, idt_active)
    state.iter += 1
    if state.iter >= cfg.pretrain_iters:
        state.stage = FINETUNE
    return result


# ----------------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------------


def _optimizer_tensors(opt: torch.optim.Adam, bundle: ModelBundle, prefix: str) -> dict[str, np.ndarray]:
    names = {id(p): n for n, p in bundle.named_parameters()}
    out = {}
    for p, st in opt.state.items():
        for key, value in st.items():
            out[f"{prefix}.{names[id(p)]}.{key}"] = torch.as_tensor(value).detach().cpu().numpy()
    return out


def _load_optimizer(opt: torch.optim.Adam, bundle: ModelBundle, prefix: str, tensors) -> None:
    for name, p in bundle.named_parameters():
        st = {}
        for key in ("step", "exp_avg", "exp_avg_sq"):
            k = f"{prefix}.{name}.{key}"
            if k in tensors:
                st[key] = torch.from_numpy(tensors[k])
        if st:
            opt.state[p] = st


def save_checkpoint(state: TrainState, path) -> Path:
    tensors = dict(state.bundle.named_tensors())
    tensors.update(_optimizer_tensors(state.opt_g, state.bundle, "adam_g"))
    tensors.update(_optimizer_tensors(state.opt_d, state.bundle, "adam_d"))
    meta = {
        "iter": state.iter,
        "stage": state.stage,
        "rng_state": state.rng.bit_generator.state,
        "best_valid_metric": state.best_valid_metric,
        "config": state.config.to_dict(),
    }
    archive.write_archive(path, tensors, meta)
    return Path(path)


def load_checkpoint(path) -> TrainState:
    """Restore a training state saved by :func:`save_checkpoint`.

    Raises:
        IntegrityError: missing, truncated or corrupt file.
        UnsupportedVersionError: written by another archive version.
    """
    tensors, meta = archive.read_archive(path)
    try:
        config = TrainConfig.from_dict(meta["config"])
        state = TrainState.initial(config)
        params = {k: torch.from_numpy(v) for k, v in tensors.items() if not k.startswith("adam_")}
        state.bundle.load_state_dict(params, strict=True)
        _load_optimizer(state.opt_g, state.bundle, "adam_g", tensors)
        _load_optimizer(state.opt_d, state.bundle, "adam_d", tensors)
        state.rng.bit_generator.state = meta["rng_state"]
        state.iter = int(meta["iter"])
        state.stage = meta["stage"]
        state.best_valid_metric = meta["best_valid_metric"]
    except (KeyError, RuntimeError, ValueError) as exc:
        raise IntegrityError(f"{path}: inconsistent checkpoint contents: {exc}") from exc
    return state


def load_bundle(path) -> ModelBundle:
    """Model parameters only, for inference and evaluation."""
    tensors, meta = archive.read_archive(path)
    cfg = TrainConfig.from_dict(meta["config"])
    bundle = ModelBundle(cfg.model)
    try:
        bundle.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()
                                if not k.startswith("adam_")}, strict=True)
    except RuntimeError as exc:
        raise IntegrityError(f"{path}: parameters do not match the stored model config: {exc}") from exc
    bundle.eval()
    return bundle


# ----------------------------------------------------------------------------
# driver
# ----------------------------------------------------------------------------


def checkpoint_path(run_dir, iteration: int) -> Path:
    return Path(run_dir) / f"ckpt_{iteration:08d}.dcg"


def run_training(config: TrainConfig, manifest: Manifest | Corpus, run_dir, resume=None,
                 stop_at: int | None = None, log_stream: IO[str] | None = sys.stdout) -> Path:
    """Train through both stages, checkpointing and logging one JSON line per step.

    Args:
        config: hyperparameters; ignored in favour of the stored config when resuming.
        manifest: corpus (its train split is loaded into memory).
        run_dir: receives ``config.json``, ``log.jsonl`` and ``ckpt_*.dcg``.
        resume: checkpoint path to continue from.
        stop_at: stop early after this global iteration (a checkpoint is written).
        log_stream: where log lines are echoed; None for silence.

    Returns:
        Path of the last checkpoint written.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    state = load_checkpoint(resume) if resume else TrainState.initial(config)
    config = state.config
    (run_dir / "config.json").write_text(config.to_json() + "\n")
    corpus = manifest if isinstance(manifest, Corpus) else Corpus.from_manifest(manifest)
    end = config.total_iters if stop_at is None else min(stop_at, config.total_iters)
    last = str(resume) if resume else None
    mode = "a" if resume else "w"
    with open(run_dir / "log.jsonl", mode) as log:
        while state.iter < end:
            batch = sample_batch(corpus, state.rng, config.clip_len, config.batch)
            stage = state.stage
            step = state.iter
            result = train_step(state, batch, last)
            state.history.append(result)
            if step % config.log_every == 0:
                line = result.to_json(step, stage)
                log.write(line + "\n")
                if log_stream is not None:
                    print(line, file=log_stream, flush=True)
            boundary = state.iter == config.pretrain_iters
            if state.iter % config.checkpoint_every == 0 or boundary or state.iter == end:
                last = str(save_checkpoint(state, checkpoint_path(run_dir, state.iter)))
                logger.info("wrote checkpoint %s", last)
    if last is None:
        last = str(save_checkpoint(state, checkpoint_path(run_dir, state.iter)))
    return Path(last)


def read_log(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
