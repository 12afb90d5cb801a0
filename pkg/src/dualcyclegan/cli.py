"""Command-line entry point: ``preprocess``, ``train``, ``infer``, ``evaluate``.

Exit codes: 0 success, 2 usage or configuration error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import data, dsp
from .config import TrainConfig, flatten
from .errors import DualCycleGANError, TrainingDivergenceError
from .inference import evaluate_split, super_resolve
from .trainer import load_bundle, run_training
from .wavio import WavFormatError, read_wav, write_wav

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


def _config_epilog() -> str:
    lines = ["config keys (JSON file via --config, or --set key=value) and their defaults:"]
    for key, value in flatten(TrainConfig()).items():
        lines.append(f"  {key} = {json.dumps(value)}")
    lines.append("with desk_scale=true, unspecified keys take the laptop-scale preset values")
    return "\n".join(lines)


def _formatter(prog):
    return argparse.RawDescriptionHelpFormatter(prog, width=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualcyclegan", formatter_class=_formatter,
        description="Nonparallel 16 kHz -> 48 kHz audio super-resolution with two connected CycleGANs.",
        epilog=_config_epilog(),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", formatter_class=_formatter,
                       help="prepare source/target corpora and write manifest.jsonl")
    p.add_argument("--source", required=True, help="folder of source-domain WAVs (any rate)")
    p.add_argument("--target", required=True, help="folder of target-domain WAVs (48 kHz)")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--source-valid", type=int, default=data.SOURCE_POLICY.valid)
    p.add_argument("--source-test", type=int, default=data.SOURCE_POLICY.test)
    p.add_argument("--target-valid", type=int, default=data.TARGET_POLICY.valid)
    p.add_argument("--target-test", type=int, default=data.TARGET_POLICY.test)
    p.add_argument("--per-speaker", action=argparse.BooleanOptionalAction, default=True,
                   help="apply target valid/test counts per speaker subfolder")
    p.add_argument("--source-highpass", action="store_true", help="also high-pass the source corpus")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("train", formatter_class=_formatter, help="run two-stage training",
                       epilog=_config_epilog())
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--quiet", action="store_true", help="do not echo loss lines to stdout")

    p = sub.add_parser("infer", formatter_class=_formatter, help="super-resolve one 16 kHz WAV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="16 kHz mono WAV")
    p.add_argument("--out", required=True, help="48 kHz output WAV")

    p = sub.add_parser("evaluate", formatter_class=_formatter, help="LSD / SNR on parallel pairs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=data.SPLITS)
    p.add_argument("--out", help="also write the JSON report here")
    return parser


def _parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def cmd_preprocess(args) -> int:
    for d in (args.source, args.target):
        if not Path(d).is_dir():
            raise UsageError(f"no such directory: {d}")
    out = Path(args.out)
    opts = data.PreprocessOptions(source_highpass=args.source_highpass, workers=args.workers)
    src = data.preprocess_corpus(args.source, "source", out, opts)
    tgt = data.preprocess_corpus(args.target, "target", out, opts)
    for name, frag in (("source", src), ("target", tgt)):
        if not frag.entries:
            raise UsageError(f"{name} corpus produced no usable audio")
    manifest = data.Manifest(src.entries + tgt.entries, out)
    manifest = data.split_manifest(manifest, data.SplitPolicy(args.source_valid, args.source_test, False, args.seed),
                                   "source")
    manifest = data.split_manifest(manifest, data.SplitPolicy(args.target_valid, args.target_test,
                                                              args.per_speaker, args.seed), "target")
    manifest.validate()
    data.save_manifest(manifest, out / "manifest.jsonl")
    counts = {d: {s: len(manifest.select(d, s)) for s in data.SPLITS} for d in data.DOMAINS}
    print(json.dumps({"manifest": str(out / "manifest.jsonl"), "counts": counts}))
    return EXIT_OK


def _load_config(args) -> TrainConfig:
    if args.config:
        try:
            cfg = TrainConfig.from_dict(json.loads(Path(args.config).read_text()))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from exc
    else:
        cfg = TrainConfig()
    cfg = cfg.with_overrides(_parse_overrides(args.set))
    if args.seed is not None:
        cfg = cfg.with_overrides({"seed": str(args.seed)})
    return cfg


def cmd_train(args) -> int:
    cfg = _load_config(args)
    manifest = data.load_manifest(args.manifest)
    try:
        final = run_training(cfg, manifest, args.out, resume=args.resume,
                             log_stream=None if args.quiet else sys.stdout)
    except TrainingDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.checkpoint:
            print(exc.checkpoint)
        return EXIT_RUNTIME
    print(json.dumps({"final_checkpoint": str(final)}))
    return EXIT_OK


def cmd_infer(args) -> int:
    clip = read_wav(args.input)
    if clip.sample_rate != dsp.LR_RATE:
        raise UsageError(f"expected {dsp.LR_RATE} Hz input, got {clip.sample_rate} Hz")
    bundle = load_bundle(args.checkpoint)
    out = super_resolve(bundle, clip)
    write_wav(args.out, out)
    print(json.dumps({"output": args.out, "num_samples": len(out), "sample_rate": out.sample_rate}))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    bundle = load_bundle(args.checkpoint)
    report = evaluate_split(bundle, data.load_manifest(args.manifest), args.split)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {"preprocess": cmd_preprocess, "train": cmd_train, "infer": cmd_infer, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except TrainingDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, WavFormatError, DualCycleGANError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
