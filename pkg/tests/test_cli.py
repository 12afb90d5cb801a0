import json
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.io.wavfile

from conftest import tiny_model_config
from dualcyclegan import data, dsp, losses
from dualcyclegan.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from dualcyclegan.config import TrainConfig, flatten
from dualcyclegan.dsp import AudioClip
from dualcyclegan.model import generator_forward
from dualcyclegan.trainer import TrainState, load_bundle, read_log, save_checkpoint
from dualcyclegan.wavio import read_wav, write_wav

GOLDEN_HELP = Path(__file__).parent / "golden" / "help.txt"


def tiny_config_file(path, **overrides) -> Path:
    cfg = TrainConfig.desk(model=tiny_model_config(), **overrides)
    path.write_text(cfg.to_json())
    return path


def preprocess_args(src, tgt, out, *extra):
    return ["preprocess", "--source", str(src), "--target", str(tgt), "--out", str(out),
            "--source-valid", "0", "--source-test", "0", "--target-valid", "0", "--target-test", "1", *extra]


@pytest.fixture(scope="module")
def prepared(fixture_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "prepared"
    assert main(preprocess_args(fixture_corpus["source"], fixture_corpus["target"], out)) == EXIT_OK
    return out / "manifest.jsonl"


@pytest.fixture(scope="module")
def stub_checkpoint(tmp_path_factory):
    """G1 is the identity and G3 the plain sinc upsampler."""
    state = TrainState.initial(TrainConfig.desk(model=tiny_model_config()))
    state.bundle.g1.zero_output()
    state.bundle.g3.zero_output()
    return save_checkpoint(state, tmp_path_factory.mktemp("ckpt") / "stub.dcg")


# ----------------------------------------------------------------------------
# help
# ----------------------------------------------------------------------------


def test_help_matches_golden_file(capsys):
    assert main(["--help"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out == GOLDEN_HELP.read_text()
    for key, value in flatten(TrainConfig()).items():
        assert f"  {key} = {json.dumps(value)}\n" in out


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


# ----------------------------------------------------------------------------
# preprocess
# ----------------------------------------------------------------------------


def test_preprocess_writes_manifest(prepared, capsys):
    manifest = data.load_manifest(prepared)
    assert len(manifest.select(data.S_LR)) == 2
    assert len(manifest.pairs()) == 2 and len(manifest.pairs("test")) == 1
    for e in manifest.entries:
        assert manifest.resolve(e).is_file()


def test_preprocess_rerun_is_idempotent(fixture_corpus, tmp_path, capsys):
    out = tmp_path / "p"
    args = preprocess_args(fixture_corpus["source"], fixture_corpus["target"], out)
    assert main(args) == EXIT_OK
    first = (out / "manifest.jsonl").read_text()
    counts = json.loads(capsys.readouterr().out)["counts"]
    assert counts["T_LR"] == {"train": 1, "valid": 0, "test": 1}
    assert main(args) == EXIT_OK
    assert (out / "manifest.jsonl").read_text() == first


def test_preprocess_empty_target_is_usage_error(fixture_corpus, tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(preprocess_args(fixture_corpus["source"], tmp_path / "empty", tmp_path / "o")) == EXIT_USAGE
    assert "target corpus produced no usable audio" in capsys.readouterr().err


def test_preprocess_missing_dir_is_usage_error(fixture_corpus, tmp_path, capsys):
    assert main(preprocess_args(tmp_path / "nope", fixture_corpus["target"], tmp_path / "o")) == EXIT_USAGE
    assert "no such directory" in capsys.readouterr().err


def test_preprocess_infeasible_split_is_usage_error(fixture_corpus, tmp_path, capsys):
    args = preprocess_args(fixture_corpus["source"], fixture_corpus["target"], tmp_path / "o")
    args[args.index("--target-test") + 1] = "5"
    assert main(args) == EXIT_USAGE


# ----------------------------------------------------------------------------
# train
# ----------------------------------------------------------------------------


def test_train_rejects_unknown_override(prepared, tmp_path, capsys):
    code = main(["train", "--manifest", str(prepared), "--out", str(tmp_path), "--set", "weights.w_foo=3"])
    assert code == EXIT_USAGE
    assert "unknown config key 'weights.w_foo'" in capsys.readouterr().err
    code = main(["train", "--manifest", str(prepared), "--out", str(tmp_path), "--set", "batch=four"])
    assert code == EXIT_USAGE


def test_train_and_resume(prepared, tmp_path, capsys):
    cfg = tiny_config_file(tmp_path / "cfg.json", pretrain_iters=12, finetune_iters=8, checkpoint_every=10)
    base = ["train", "--manifest", str(prepared), "--config", str(cfg), "--quiet"]
    assert main(base + ["--out", str(tmp_path / "a")]) == EXIT_OK
    final = json.loads(capsys.readouterr().out)["final_checkpoint"]
    assert final.endswith("ckpt_00000020.dcg")
    assert [r["iter"] for r in read_log(tmp_path / "a" / "log.jsonl")] == list(range(20))
    mid = tmp_path / "a" / "ckpt_00000010.dcg"
    assert main(base + ["--out", str(tmp_path / "b"), "--resume", str(mid)]) == EXIT_OK
    assert [r["iter"] for r in read_log(tmp_path / "b" / "log.jsonl")] == list(range(10, 20))
    a, b = load_bundle(final).state_dict(), load_bundle(tmp_path / "b" / "ckpt_00000020.dcg").state_dict()
    assert max(float((a[k] - b[k]).abs().max()) for k in a) < 1e-7


def test_train_seed_and_set_overrides(prepared, tmp_path, capsys):
    cfg = tiny_config_file(tmp_path / "cfg.json", pretrain_iters=2, finetune_iters=1)
    code = main(["train", "--manifest", str(prepared), "--config", str(cfg), "--out", str(tmp_path / "r"),
                 "--seed", "9", "--set", "weights.w_cyc=5", "--quiet"])
    assert code == EXIT_OK
    stored = TrainConfig.from_dict(json.loads((tmp_path / "r" / "config.json").read_text()))
    assert stored.seed == 9 and stored.weights.w_cyc == 5.0


def test_train_divergence_exit_code(prepared, tmp_path, capsys):
    cfg = tiny_config_file(tmp_path / "cfg.json", pretrain_iters=4, finetune_iters=2)
    code = main(["train", "--manifest", str(prepared), "--config", str(cfg), "--out", str(tmp_path / "r"),
                 "--set", "weights.w_adv=1e308", "--set", "weights.w_cyc=1e308", "--quiet"])
    assert code == EXIT_RUNTIME
    assert "non-finite generator loss" in capsys.readouterr().err


def test_train_divergence_reports_last_checkpoint(prepared, tmp_path, capsys, monkeypatch):
    cfg = tiny_config_file(tmp_path / "cfg.json", pretrain_iters=4, finetune_iters=2, checkpoint_every=2)
    real = losses.generator_objective
    calls = []

    def poisoned(*args, **kwargs):
        out = real(*args, **kwargs)
        calls.append(1)
        if len(calls) == 4:
            out = out._replace(total=out.total * float("nan"))
        return out

    monkeypatch.setattr(losses, "generator_objective", poisoned)
    code = main(["train", "--manifest", str(prepared), "--config", str(cfg), "--out", str(tmp_path / "r"), "--quiet"])
    assert code == EXIT_RUNTIME
    captured = capsys.readouterr()
    assert captured.out.strip() == str(tmp_path / "r" / "ckpt_00000002.dcg")
    assert "last good checkpoint" in captured.err


def test_train_desk_preset_on_fixture_corpus(prepared, tmp_path, capsys):
    (tmp_path / "desk.json").write_text(json.dumps({"desk_scale": True}))
    start = time.perf_counter()
    code = main(["train", "--manifest", str(prepared), "--config", str(tmp_path / "desk.json"),
                 "--out", str(tmp_path / "run"), "--quiet"])
    elapsed = time.perf_counter() - start
    assert code == EXIT_OK
    assert json.loads(capsys.readouterr().out)["final_checkpoint"].endswith("ckpt_00000600.dcg")
    assert elapsed < 600, elapsed
    log = read_log(tmp_path / "run" / "log.jsonl")
    assert len(log) == 600 and all(np.isfinite(r["total_g"]) for r in log)


# ----------------------------------------------------------------------------
# infer
# ----------------------------------------------------------------------------


def test_infer_contracts(stub_checkpoint, tmp_path, capsys):
    rng = np.random.default_rng(0)
    write_wav(tmp_path / "in.wav", AudioClip(0.1 * rng.standard_normal(16000), 16000))
    outs = []
    for name in ("a.wav", "b.wav"):
        code = main(["infer", "--checkpoint", str(stub_checkpoint), "--input", str(tmp_path / "in.wav"),
                     "--out", str(tmp_path / name)])
        assert code == EXIT_OK
        outs.append((tmp_path / name).read_bytes())
    out = read_wav(tmp_path / "a.wav")
    assert len(out) == 48000 and out.sample_rate == 48000
    assert abs(out.duration - 1.0) <= 1 / 16000
    assert outs[0] == outs[1]


def test_infer_rejects_wrong_rate(stub_checkpoint, tmp_path, capsys):
    write_wav(tmp_path / "in.wav", AudioClip(0.1 * np.ones(4410), 44100))
    code = main(["infer", "--checkpoint", str(stub_checkpoint), "--input", str(tmp_path / "in.wav"),
                 "--out", str(tmp_path / "o.wav")])
    assert code == EXIT_USAGE
    assert "expected 16000 Hz" in capsys.readouterr().err
    assert not (tmp_path / "o.wav").exists()


def test_infer_rejects_stereo(stub_checkpoint, tmp_path, capsys):
    scipy.io.wavfile.write(tmp_path / "st.wav", 16000, np.zeros((1600, 2), dtype=np.float32))
    code = main(["infer", "--checkpoint", str(stub_checkpoint), "--input", str(tmp_path / "st.wav"),
                 "--out", str(tmp_path / "o.wav")])
    assert code == EXIT_USAGE
    assert "mono" in capsys.readouterr().err


def test_infer_rejects_bad_checkpoint(tmp_path, capsys):
    write_wav(tmp_path / "in.wav", AudioClip(0.1 * np.ones(1600), 16000))
    (tmp_path / "bad.dcg").write_bytes(b"garbage")
    code = main(["infer", "--checkpoint", str(tmp_path / "bad.dcg"), "--input", str(tmp_path / "in.wav"),
                 "--out", str(tmp_path / "o.wav")])
    assert code == EXIT_USAGE


# ----------------------------------------------------------------------------
# evaluate
# ----------------------------------------------------------------------------


def pair_manifest(root, z_list, y_list) -> Path:
    entries = []
    for i, (z, y) in enumerate(zip(z_list, y_list)):
        for domain, clip in ((data.T_LR, z), (data.T_HR, y)):
            rel = f"{data.DOMAIN_DIRS[domain]}/u{i}.wav"
            (root / rel).parent.mkdir(parents=True, exist_ok=True)
            write_wav(root / rel, clip)
            entries.append(data.ManifestEntry(rel, domain, len(clip), clip.sample_rate, "test", f"u{i}"))
    data.save_manifest(data.Manifest(entries), root / "manifest.jsonl")
    return root / "manifest.jsonl"


def fixture_lr_clips(prepared):
    m = data.load_manifest(prepared)
    return [read_wav(m.resolve(lr)) for lr, _ in m.pairs()]


def evaluate(ckpt, manifest, capsys, split="test"):
    code = main(["evaluate", "--checkpoint", str(ckpt), "--manifest", str(manifest), "--split", split])
    return code, capsys.readouterr()


def test_evaluate_sinc_stub_lsd(stub_checkpoint, prepared, tmp_path, capsys):
    zs = fixture_lr_clips(prepared)
    ys = [dsp.sinc_resample(z, dsp.UP_16_48) for z in zs]
    code, out = evaluate(stub_checkpoint, pair_manifest(tmp_path, zs, ys), capsys)
    assert code == EXIT_OK
    report = json.loads(out.out)
    assert report["num_files"] == 2
    for row in report["files"]:
        assert row["lsd_resampler"] < 0.5 and row["lsd_composite"] < 0.5


def test_evaluate_identical_and_mean(stub_checkpoint, prepared, tmp_path, capsys):
    g3 = load_bundle(stub_checkpoint).g3
    zs = fixture_lr_clips(prepared)
    # the stub's own output, so the estimate and reference agree bit for bit
    ys = [generator_forward(g3, z) for z in zs]
    ys[1] = AudioClip(ys[1].samples + 0.01 * np.random.default_rng(1).standard_normal(len(ys[1])), 48000)
    code, out = evaluate(stub_checkpoint, pair_manifest(tmp_path, zs, ys), capsys)
    assert code == EXIT_OK
    report = json.loads(out.out)
    same = report["files"][0]
    assert same["lsd_resampler"] == 0.0 and same["snr_resampler"] == 99.0
    assert same["lsd_composite"] == 0.0 and same["snr_composite"] == 99.0
    assert report["files"][1]["snr_resampler"] < 99.0
    for key, value in report["mean"].items():
        assert value == float(np.mean([row[key] for row in report["files"]]))


def test_evaluate_without_pairs(stub_checkpoint, prepared, capsys):
    code, out = evaluate(stub_checkpoint, prepared, capsys, split="valid")
    assert code == EXIT_USAGE
    assert "no parallel" in out.err


def test_evaluate_writes_report(stub_checkpoint, prepared, tmp_path, capsys):
    code = main(["evaluate", "--checkpoint", str(stub_checkpoint), "--manifest", str(prepared),
                 "--out", str(tmp_path / "r.json")])
    assert code == EXIT_OK
    assert json.loads((tmp_path / "r.json").read_text()) == json.loads(capsys.readouterr().out)
