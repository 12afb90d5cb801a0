"""End-to-end walk through the command line on a synthetic corpus.

Writes a small source corpus (22.05 kHz, dull channel) and target corpus
(48 kHz), prepares them, trains a short desk-scale run, super-resolves one
source utterance and evaluates the held-out target pair.

    python demos/quickstart.py [workdir] [--iters N]
"""

import argparse
import json
import tempfile
from pathlib import Path

from dualcyclegan.cli import main
from dualcyclegan.fixtures import write_fixture_corpus


def run(*argv) -> None:
    print("$ dualcyclegan " + " ".join(argv))
    code = main(list(argv))
    if code != 0:
        raise SystemExit(code)


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("workdir", nargs="?", help="defaults to a fresh temporary directory")
    parser.add_argument("--iters", type=int, default=60, help="total training iterations")
    return parser.parse_args()


def demo():
    args = parse_args()
    work = Path(args.workdir or tempfile.mkdtemp(prefix="dualcyclegan_"))
    print(f"working in {work}")

    # 1. raw corpora: three source and three target utterances of 1.5 s each
    source, target = write_fixture_corpus(work, n_source=3, n_target=3)

    # 2. resample, high-pass, normalize and split; one target pair is held out for testing
    run("preprocess", "--source", str(source), "--target", str(target), "--out", str(work / "prepared"),
        "--source-valid", "0", "--source-test", "1", "--target-valid", "0", "--target-test", "1")

    # 3. a short run of the laptop-scale preset; two thirds pre-training, one third fine-tuning
    pretrain = 2 * args.iters // 3
    config = {"desk_scale": True, "pretrain_iters": pretrain, "finetune_iters": args.iters - pretrain,
              "idt_cutoff": max(1, args.iters // 6), "checkpoint_every": args.iters, "log_every": 10}
    (work / "config.json").write_text(json.dumps(config, indent=2))
    run("train", "--manifest", str(work / "prepared" / "manifest.jsonl"), "--config", str(work / "config.json"),
        "--out", str(work / "run"))
    ckpt = work / "run" / f"ckpt_{args.iters:08d}.dcg"

    # 4. source-domain input through G3(G1(.)) to 48 kHz
    src_wav = sorted((work / "prepared" / "s_lr").glob("*.wav"))[0]
    run("infer", "--checkpoint", str(ckpt), "--input", str(src_wav), "--out", str(work / "sr.wav"))

    # 5. LSD / SNR on the held-out parallel pair
    run("evaluate", "--checkpoint", str(ckpt), "--manifest", str(work / "prepared" / "manifest.jsonl"),
        "--split", "test", "--out", str(work / "report.json"))


if __name__ == "__main__":
    demo()
