"""CLI pipeline: build, train, report artifacts, generation commands."""

import csv
import json
import os

import numpy as np
import pytest

from scipy.io import wavfile

from wavespace.cli import main
from wavespace.descriptors import NAMES
from wavespace.model import load_checkpoint


def read_float_wav(path):
    rate, data = wavfile.read(path)
    assert data.dtype == np.float32
    return rate, data


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Shared dataset cache and a one-epoch checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    ds = str(root / "ds.wsdt")
    run = str(root / "run")
    assert main(["dataset", "build", "--out", ds, "--per-style", "6", "--seed", "9"]) == 0
    assert main([
        "train", "--dataset", ds, "--out", run, "--epochs", "2", "--seed", "4",
        "--fold-count", "5", "--fold-index", "0",
    ]) == 0
    return {"root": root, "dataset": ds, "run": run, "checkpoint": os.path.join(run, "final.wsck")}


def test_dataset_build_and_inspect(tmp_path, capsys):
    path = str(tmp_path / "small.wsdt")
    assert main(["dataset", "build", "--out", path, "--per-style", "5", "--styles", "saw,square",
                 "--length", "256", "--seed", "3"]) == 0
    capsys.readouterr()
    assert main(["dataset", "inspect", path]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["num_samples"] == 10
    assert info["waveform_length"] == 256
    assert info["per_style_counts"] == {"saw": 5, "square": 5}
    assert set(info["descriptor_medians"]) == set(NAMES)


def test_descriptors_json_lines(workspace, capsys):
    assert main(["descriptors", "--dataset", workspace["dataset"]]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 24
    for line in lines:
        obj = json.loads(line)
        assert list(obj) == list(NAMES)
        for v in obj.values():
            # values are emitted with nine significant digits
            assert v == float(f"{v:.9g}")


def test_train_writes_log_and_checkpoints(workspace):
    run = workspace["run"]
    assert os.path.exists(os.path.join(run, "final.wsck"))
    log_path = os.path.join(run, "train-log.jsonl")
    with open(log_path) as fh:
        records = [json.loads(line) for line in fh]
    assert [r["epoch"] for r in records] == [0, 1]
    ck = load_checkpoint(workspace["checkpoint"])
    assert ck.meta["epoch"] == 2
    assert ck.model.config.variant == "ws-small"
    assert "descriptor_medians" in ck.model.extras


def test_eval_report_artifacts(workspace, capsys):
    out = str(workspace["root"] / "report")
    assert main([
        "eval", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
        "--out", out, "--log", os.path.join(workspace["run"], "train-log.jsonl"),
    ]) == 0
    summary = json.loads(capsys.readouterr().out)
    report_path = os.path.join(out, "report.json")
    with open(report_path) as fh:
        report = json.load(fh)
    for key in ("waveform_mae", "spectral_mse", "descriptor_mae", "latent_kl",
                "prior_assignment_accuracy", "feedback_assignment_accuracy", "per_style"):
        assert key in report
    assert summary["waveform_mae"] == report["waveform_mae"]

    with open(os.path.join(out, "metrics.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "style"
    assert sorted(r[0] for r in rows[1:]) == ["pulse", "saw", "square", "triangle"]

    for name in ("reconstructions.png", "latent.png", "descriptor_mae.png", "curves.png"):
        path = os.path.join(out, name)
        assert os.path.getsize(path) > 0
        with open(path, "rb") as fh:
            assert fh.read(8) == b"\x89PNG\r\n\x1a\n"


def test_bench_reports_latency_and_flops(workspace, capsys):
    out_file = str(workspace["root"] / "bench.json")
    assert main(["bench", "--checkpoint", workspace["checkpoint"], "--iterations", "12",
                 "--out", out_file]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["rtf"] == pytest.approx(
        (1024 / 48000 * 1000.0) / payload["mean_latency_ms"], rel=1e-9)
    assert payload["flops"]["conv"] == 2 * payload["flops"]["macs"]
    with open(out_file) as fh:
        assert json.load(fh) == payload


def test_interpolate_writes_wavetable(workspace, tmp_path, capsys):
    wav = str(tmp_path / "morph.wav")
    fig = str(tmp_path / "morph.png")
    assert main(["interpolate", "--checkpoint", workspace["checkpoint"], "--out", wav,
                 "--rows", "5", "--style-a", "0", "--style-b", "3", "--fig", fig]) == 0
    rate, data = read_float_wav(wav)
    assert rate == 48000 and data.size == 5 * 1024
    assert os.path.getsize(fig) > 0
    # first row decodes the style-0 anchor exactly
    ck = load_checkpoint(workspace["checkpoint"])
    from wavespace.model import select_prior

    coords, _ = select_prior(ck.model.priors, 0)
    anchor = ck.model.decode(coords, ck.model.extras["descriptor_medians"])
    assert np.allclose(data[:1024], anchor.samples, atol=1e-6)


def test_sweep_writes_wavetable(workspace, tmp_path):
    wav = str(tmp_path / "sweep.wav")
    assert main(["sweep", "--checkpoint", workspace["checkpoint"], "--descriptor", "fullness",
                 "--out", wav, "--steps", "4", "--lo", "0.1", "--hi", "0.9"]) == 0
    rate, data = read_float_wav(wav)
    assert data.size == 4 * 1024


def test_export_wav_descriptor_override(workspace, tmp_path, capsys):
    wav = str(tmp_path / "cycle.wav")
    assert main(["export-wav", "--checkpoint", workspace["checkpoint"], "--out", wav,
                 "--style", "2", "--x", "4.0", "--y", "6.0", "--set", "brightness=0.4"]) == 0
    rate, data = read_float_wav(wav)
    assert data.size == 1024
    from wavespace.model import select_prior

    ck = load_checkpoint(workspace["checkpoint"])
    coords, _ = select_prior(ck.model.priors, 2)
    coords = coords.copy()
    coords[4], coords[5] = 4.0, 6.0
    desc = np.asarray(ck.model.extras["descriptor_medians"], dtype=np.float64).copy()
    desc[NAMES.index("brightness")] = 0.4
    expected = ck.model.decode(coords, desc)
    assert np.allclose(data.astype(np.float64), expected.samples, atol=1e-6)


def test_export_wav_rejects_bad_override(workspace, tmp_path, capsys):
    rc = main(["export-wav", "--checkpoint", workspace["checkpoint"],
               "--out", str(tmp_path / "x.wav"), "--set", "loudness=0.4"])
    assert rc == 2
    assert "loudness" in capsys.readouterr().err


def test_serve_rejects_bad_bind(workspace, capsys):
    rc = main(["serve", "--checkpoint", workspace["checkpoint"], "--bind", "nonsense"])
    assert rc == 2
    assert "addr:port" in capsys.readouterr().err


def test_unknown_subcommand_exits():
    with pytest.raises(SystemExit):
        main(["transmogrify"])
