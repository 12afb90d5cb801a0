"""Corpus preparation, manifests, splits and training batches.

A corpus on disk looks like::

    out_dir/
      s_lr/*.wav      source domain, 16 kHz
      t_hr/*.wav      target domain, 48 kHz
      t_lr/*.wav      target domain, 16 kHz (decimated copies of t_hr)
      manifest.jsonl

Manifest schema (one JSON object per line)::

    {"path": "t_lr/p225_001.wav", "domain": "T_LR", "num_samples": 30000,
     "sample_rate": 16000, "split": "train", "pair_id": "p225_001",
     "speaker": "p225"}

``path`` is relative to the manifest's directory.  ``pair_id`` links a T_LR
entry to its T_HR original and is null for S_LR; ``speaker`` is optional.
"""

from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import dsp
from .dsp import AudioClip
from .errors import ConfigurationError, ManifestParseError, SilentInputError
from .wavio import read_wav, write_wav

logger = logging.getLogger(__name__)

S_LR, T_LR, T_HR = "S_LR", "T_LR", "T_HR"
DOMAINS = {S_LR: dsp.LR_RATE, T_LR: dsp.LR_RATE, T_HR: dsp.HR_RATE}
DOMAIN_DIRS = {S_LR: "s_lr", T_LR: "t_lr", T_HR: "t_hr"}
SPLITS = ("train", "valid", "test")
AUDIO_SUFFIXES = (".wav",)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    domain: str
    num_samples: int
    sample_rate: int
    split: str = "train"
    pair_id: str | None = None
    speaker: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


_REQUIRED = {"path": str, "domain": str, "num_samples": int, "sample_rate": int, "split": str}
_OPTIONAL = {"pair_id": str, "speaker": str}


def _parse_entry(obj, line: int) -> ManifestEntry:
    if not isinstance(obj, dict):
        raise ManifestParseError("entry is not a JSON object", line)
    for key, typ in _REQUIRED.items():
        if key not in obj:
            raise ManifestParseError(f"missing required field {key!r}", line)
        if not isinstance(obj[key], typ) or isinstance(obj[key], bool):
            raise ManifestParseError(f"field {key!r} must be {typ.__name__}", line)
    for key, typ in _OPTIONAL.items():
        if obj.get(key) is not None and not isinstance(obj[key], typ):
            raise ManifestParseError(f"field {key!r} must be {typ.__name__} or null", line)
    unknown = set(obj) - set(_REQUIRED) - set(_OPTIONAL)
    if unknown:
        raise ManifestParseError(f"unknown fields {sorted(unknown)}", line)
    if obj["domain"] not in DOMAINS:
        raise ManifestParseError(f"unknown domain tag {obj['domain']!r}", line)
    if obj["split"] not in SPLITS:
        raise ManifestParseError(f"unknown split {obj['split']!r}", line)
    if obj["sample_rate"] != DOMAINS[obj["domain"]]:
        raise ManifestParseError(
            f"{obj['domain']} entries must be {DOMAINS[obj['domain']]} Hz, got {obj['sample_rate']}", line
        )
    if obj["num_samples"] <= 0:
        raise ManifestParseError("num_samples must be positive", line)
    return ManifestEntry(**{k: obj.get(k) for k in list(_REQUIRED) + list(_OPTIONAL)})


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path | None = None

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, Manifest) and self.entries == other.entries

    def select(self, domain: str | None = None, split: str | None = None) -> list[ManifestEntry]:
        return [e for e in self.entries
                if (domain is None or e.domain == domain) and (split is None or e.split == split)]

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def pairs(self, split: str | None = None) -> list[tuple[ManifestEntry, ManifestEntry]]:
        """(T_LR, T_HR) partner entries, ordered by pair_id."""
        hr = {e.pair_id: e for e in self.select(T_HR)}
        out = [(e, hr[e.pair_id]) for e in self.select(T_LR, split)]
        return sorted(out, key=lambda p: p[0].pair_id)

    def validate(self) -> None:
        """Check the pairing invariants between T_LR and T_HR entries."""
        by_pair = defaultdict(list)
        for e in self.entries:
            if e.domain == S_LR:
                if e.pair_id is not None:
                    raise ConfigurationError(f"S_LR entry {e.path} must not have a pair_id")
            elif e.pair_id is None:
                raise ConfigurationError(f"{e.domain} entry {e.path} has no pair_id")
            else:
                by_pair[e.pair_id].append(e)
        for pid, members in by_pair.items():
            domains = sorted(m.domain for m in members)
            if domains != [T_HR, T_LR]:
                raise ConfigurationError(f"pair {pid!r} must have exactly one T_LR and one T_HR entry, got {domains}")
            lr, hr = sorted(members, key=lambda m: m.domain != T_LR)
            if hr.num_samples != 3 * lr.num_samples:
                raise ConfigurationError(f"pair {pid!r}: T_HR length must be 3x the T_LR length")
            if lr.split != hr.split:
                raise ConfigurationError(f"pair {pid!r} straddles splits {lr.split}/{hr.split}")


def save_manifest(manifest: Manifest, path: str | os.PathLike) -> None:
    with open(path, "w") as f:
        for e in manifest.entries:
            f.write(e.to_json() + "\n")


def load_manifest(path: str | os.PathLike) -> Manifest:
    """Read and validate a JSON-lines manifest.

    Raises:
        ManifestParseError: malformed line (the error carries the line number).
        ConfigurationError: pairing invariants violated.
    """
    entries = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            entries.append(_parse_entry(obj, lineno))
    manifest = Manifest(entries, Path(path).parent)
    manifest.validate()
    return manifest


# ----------------------------------------------------------------------------
# preprocessing
# ----------------------------------------------------------------------------


@dataclass
class PreprocessOptions:
    target_db: float = -26.0
    highpass_hz: float = 70.0
    # high-pass the source corpus as well (off: only the target corpus is filtered)
    source_highpass: bool = False
    workers: int = 1


def _find_audio(raw_dir: Path) -> list[Path]:
    return sorted(p for p in raw_dir.rglob("*") if p.suffix.lower() in AUDIO_SUFFIXES and p.is_file())


def _utterance_id(raw_dir: Path, path: Path) -> tuple[str, str | None]:
    rel = path.relative_to(raw_dir).with_suffix("")
    speaker = rel.parts[0] if len(rel.parts) > 1 else None
    return "_".join(rel.parts), speaker


def _prepare_source(clip: AudioClip, opts: PreprocessOptions) -> AudioClip:
    clip = dsp.resample_rational(clip, dsp.LR_RATE)
    if opts.source_highpass:
        clip = dsp.highpass(clip, opts.highpass_hz)
    return dsp.normalize_loudness(clip, opts.target_db)


def _prepare_target(clip: AudioClip, opts: PreprocessOptions) -> tuple[AudioClip, AudioClip]:
    if clip.sample_rate != dsp.HR_RATE:
        clip = dsp.resample_rational(clip, dsp.HR_RATE)
    clip = dsp.highpass(clip, opts.highpass_hz)
    clip = dsp.normalize_loudness(clip, opts.target_db)
    usable = len(clip) - len(clip) % 3
    hr = AudioClip(clip.samples[:usable], clip.sample_rate)
    return hr, dsp.sinc_resample(hr, dsp.DOWN_48_16)


def preprocess_corpus(raw_dir, domain: str, out_dir, opts: PreprocessOptions | None = None) -> Manifest:
    """Prepare one raw corpus.

    ``domain`` is ``"source"`` (emits S_LR at 16 kHz) or ``"target"`` (emits
    T_HR at 48 kHz plus its decimated T_LR copy under a shared ``pair_id``).
    Unreadable and silent files are skipped with a warning.  All entries are
    placed in the train split; see :func:`split_manifest`.
    """
    opts = opts or PreprocessOptions()
    raw_dir, out_dir = Path(raw_dir), Path(out_dir)
    if domain not in ("source", "target"):
        raise ConfigurationError(f"domain must be 'source' or 'target', got {domain!r}")
    if not raw_dir.is_dir():
        raise ConfigurationError(f"{raw_dir} is not a directory")
    files = _find_audio(raw_dir)
    dirs = [S_LR] if domain == "source" else [T_HR, T_LR]
    for d in dirs:
        (out_dir / DOMAIN_DIRS[d]).mkdir(parents=True, exist_ok=True)

    def work(path: Path) -> list[ManifestEntry]:
        uid, speaker = _utterance_id(raw_dir, path)
        try:
            clip = read_wav(path)
        except (OSError, ValueError) as exc:
            logger.warning("skipping unreadable file %s: %s", path, exc)
            return []
        try:
            if domain == "source":
                outputs = [(S_LR, _prepare_source(clip, opts))]
            else:
                hr, lr = _prepare_target(clip, opts)
                outputs = [(T_HR, hr), (T_LR, lr)]
        except SilentInputError:
            logger.warning("skipping silent file %s", path)
            return []
        entries = []
        for d, out in outputs:
            rel = f"{DOMAIN_DIRS[d]}/{uid}.wav"
            write_wav(out_dir / rel, out)
            pair_id = None if d == S_LR else uid
            entries.append(ManifestEntry(rel, d, len(out), out.sample_rate, "train", pair_id, speaker))
        return entries

    if opts.workers > 1:
        with ThreadPoolExecutor(opts.workers) as pool:
            results = list(pool.map(work, files))
    else:
        results = [work(p) for p in files]
    return Manifest([e for r in results for e in r], out_dir)


# ----------------------------------------------------------------------------
# splitting
# ----------------------------------------------------------------------------


@dataclass
class SplitPolicy:
    """Number of validation/test utterances (per speaker if ``per_speaker``)."""

    valid: int
    test: int
    per_speaker: bool = False
    seed: int = 0


SOURCE_POLICY = SplitPolicy(valid=100, test=250)
TARGET_POLICY = SplitPolicy(valid=200, test=400, per_speaker=True)


def split_manifest(manifest: Manifest, policy: SplitPolicy, corpus: str | None = None) -> Manifest:
    """Assign valid/test/train splits deterministically.

    Units are single S_LR entries or whole (T_LR, T_HR) pairs, so a pair never
    straddles splits.  ``corpus`` restricts the split to ``"source"`` or
    ``"target"`` entries (others are kept as they are); None splits all.

    Raises:
        ConfigurationError: if a group has fewer units than ``valid + test``.
    """
    wanted = {None: set(DOMAINS), "source": {S_LR}, "target": {T_LR, T_HR}}[corpus]
    units = defaultdict(list)
    for i, e in enumerate(manifest.entries):
        if e.domain in wanted:
            units[e.pair_id or f"{e.domain}:{e.path}"].append(i)
    groups = defaultdict(list)
    for key in sorted(units):
        speaker = manifest.entries[units[key][0]].speaker if policy.per_speaker else None
        groups[speaker or ""].append(key)
    assignment = {}
    for name in sorted(groups):
        keys = groups[name]
        if policy.valid + policy.test > len(keys):
            raise ConfigurationError(
                f"split needs {policy.valid} + {policy.test} utterances but group {name!r} has {len(keys)}"
            )
        order = np.random.default_rng(policy.seed).permutation(len(keys))
        for rank, k in enumerate(order):
            split = "valid" if rank < policy.valid else "test" if rank < policy.valid + policy.test else "train"
            assignment[keys[k]] = split
    entries = list(manifest.entries)
    for key, idx in units.items():
        for i in idx:
            entries[i] = replace(entries[i], split=assignment[key])
    return Manifest(entries, manifest.root)


# ----------------------------------------------------------------------------
# batching
# ----------------------------------------------------------------------------


@dataclass
class TrainingBatch:
    """``x`` and ``z``: ``(B, L)`` at 16 kHz; ``y``: ``(B, 3L)`` at 48 kHz, aligned with ``z``."""

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    x_files: list[int] = field(default_factory=list)
    t_files: list[int] = field(default_factory=list)
    z_offsets: list[int] = field(default_factory=list)

    def tensors(self, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """``(x, y, z)`` as tensors, the argument order used by the losses."""
        return (torch.as_tensor(self.x, dtype=dtype), torch.as_tensor(self.y, dtype=dtype),
                torch.as_tensor(self.z, dtype=dtype))


class Corpus:
    """Training-split audio held in memory for fast batch sampling."""

    def __init__(self, source: list[np.ndarray], target_lr: list[np.ndarray], target_hr: list[np.ndarray]):
        if not source or not target_lr:
            raise ConfigurationError("training split needs S_LR and T_LR/T_HR files")
        self.source, self.target_lr, self.target_hr = source, target_lr, target_hr

    @classmethod
    def from_manifest(cls, manifest: Manifest, split: str = "train") -> "Corpus":
        load = lambda e: read_wav(manifest.resolve(e)).samples  # noqa: E731
        source = [load(e) for e in manifest.select(S_LR, split)]
        pairs = manifest.pairs(split)
        for d in (S_LR, T_LR):
            if not manifest.select(d, split):
                raise ConfigurationError(f"no {d} files in the {split} split")
        return cls(source, [load(lr) for lr, _ in pairs], [load(hr) for _, hr in pairs])


def _window(audio: np.ndarray, start: int, length: int) -> np.ndarray:
    seg = audio[start:start + length]
    return seg if len(seg) == length else np.pad(seg, (0, length - len(seg)))


def sample_batch(corpus, rng: np.random.Generator, clip_len: int = 12000, batch: int = 4) -> TrainingBatch:
    """Draw ``batch`` random source clips and aligned target (z, y) clip pairs.

    ``corpus`` is a :class:`Corpus` or a :class:`Manifest` (loaded on the fly).
    Files shorter than ``clip_len`` are zero padded at the tail.
    """
    if isinstance(corpus, Manifest):
        corpus = Corpus.from_manifest(corpus)
    xs, zs, ys, xf, tf, offs = [], [], [], [], [], []
    for _ in range(batch):
        i = int(rng.integers(len(corpus.source)))
        src = corpus.source[i]
        xo = int(rng.integers(max(len(src) - clip_len, 0) + 1))
        j = int(rng.integers(len(corpus.target_lr)))
        lr, hr = corpus.target_lr[j], corpus.target_hr[j]
        zo = int(rng.integers(max(len(lr) - clip_len, 0) + 1))
        xs.append(_window(src, xo, clip_len))
        zs.append(_window(lr, zo, clip_len))
        ys.append(_window(hr, 3 * zo, 3 * clip_len))
        xf.append(i)
        tf.append(j)
        offs.append(zo)
    return TrainingBatch(np.stack(xs), np.stack(zs), np.stack(ys), xf, tf, offs)
