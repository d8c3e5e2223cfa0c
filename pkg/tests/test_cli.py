import json
import subprocess
import sys

import pytest
import torch
import yaml

from triact import cli
from triact.checkpoints import load_checkpoint


def base_config(root):
    return {
        "seed": 11,
        "paths": {"data_dir": "data", "output_dir": "runs"},
        "sampling": {
            "rescale_size": 48,
            "crop_size": 40,
            "rates": {"event": [4, 8], "set": [8, 4], "element": [16, 2]},
        },
        "pathway": {"preset": "tiny", "base_channels": 8},
        "joint_head": {
            "encoder_dims": {"event": 16, "set": 32, "element": 64},
            "fusion_dim": 64,
        },
        "optimizer": {
            "stage1": {"epochs": 2, "decay_epochs": [], "batch_size": 4},
            "stage2": {"epochs": 2, "decay_epochs": [], "batch_size": 4},
        },
        "synth": {
            "num_events": 2, "num_sets": 2, "num_elements": 4,
            "clips_per_element": 3, "test_clips_per_element": 2,
            "frames_per_clip": 40, "frame_size": 48, "noise_level": 0.05,
        },
    }


def write_config(root, data):
    path = root / "run.yaml"
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A full gen-synth -> train-base -> train-joint pipeline run."""
    root = tmp_path_factory.mktemp("cli_ws")
    config = write_config(root, base_config(root))
    assert cli.main(["gen-synth", "--config", str(config)]) == 0
    assert cli.main(["train-base", "--config", str(config)]) == 0
    assert cli.main(["train-joint", "--config", str(config)]) == 0
    return {"root": root, "config": config, "out": root / "runs",
            "data": root / "data"}


def test_gen_synth_artifacts(workspace):
    data = workspace["data"]
    assert (data / "taxonomy.txt").exists()
    assert (data / "train_manifest.txt").exists()
    assert (data / "test_manifest.txt").exists()
    assert (data / "train" / "element_000" / "clip_0000" / "00000.png").exists()
    manifest = json.loads(
        (data / "run_manifest_gen_synth.json").read_text()
    )
    assert manifest["command"] == "gen-synth"
    assert manifest["seed"] == 11
    assert manifest["config"]["synth"]["num_elements"] == 4
    for key in ("python", "torch", "numpy", "triact"):
        assert key in manifest["versions"]


def test_gen_synth_rejects_too_short_clips(tmp_path):
    data = base_config(tmp_path)
    data["synth"]["frames_per_clip"] = 20  # < element span 31
    config = write_config(tmp_path, data)
    assert cli.main(["gen-synth", "--config", str(config)]) == 2


def test_train_base_artifacts(workspace):
    out = workspace["out"]
    for level in ("event", "set", "element"):
        assert (out / f"base_{level}.pt").exists()
        metrics = out / f"metrics_base_{level}.jsonl"
        lines = [json.loads(x) for x in metrics.read_text().splitlines()]
        assert sum(r["kind"] == "epoch" for r in lines) == 2
    assert (out / "run_manifest_train_base.json").exists()
    payload = load_checkpoint(out / "base_event.pt")
    assert payload["level"] == "event"
    assert payload["seed"] == 11


def test_train_joint_artifacts(workspace):
    out = workspace["out"]
    assert (out / "joint.pt").exists()
    payload = load_checkpoint(out / "joint.pt")
    assert payload["format"] == "triact.joint.v1"
    assert payload["loss_weights"] == {"event": 1.0, "set": 2.0, "element": 4.0}
    lines = [
        json.loads(x)
        for x in (out / "metrics_joint.jsonl").read_text().splitlines()
    ]
    steps = [r for r in lines if r["kind"] == "step"]
    assert steps and all("loss_element" in r for r in steps)


def test_metrics_stream_truncated_per_run(workspace):
    out = workspace["out"]
    before = (out / "metrics_joint.jsonl").read_text().splitlines()
    assert cli.main(["train-joint", "--config", str(workspace["config"])]) == 0
    after = (out / "metrics_joint.jsonl").read_text().splitlines()
    assert len(after) == len(before)


def test_train_joint_missing_bases(workspace, tmp_path, capsys):
    code = cli.main([
        "train-joint", "--config", str(workspace["config"]),
        "--output", str(tmp_path / "empty_out"),
    ])
    assert code == 3
    assert "error[checkpoint]" in capsys.readouterr().err


def test_tampered_base_checkpoint_detected(workspace, tmp_path, capsys):
    out = tmp_path / "tampered_out"
    out.mkdir()
    for level in ("event", "set", "element"):
        payload = load_checkpoint(workspace["out"] / f"base_{level}.pt")
        if level == "set":
            name = next(iter(payload["backbone_state"]))
            payload["backbone_state"][name] = (
                payload["backbone_state"][name].clone() + 1.0
            )
        torch.save(payload, out / f"base_{level}.pt")
    code = cli.main([
        "train-joint", "--config", str(workspace["config"]),
        "--output", str(out),
    ])
    assert code == 3
    err = capsys.readouterr().err
    assert "tampered" in err or "digest" in err


def test_evaluate_joint(workspace, capsys):
    code = cli.main(["evaluate", "--config", str(workspace["config"])])
    assert code == 0
    shown = capsys.readouterr().out
    assert "hierarchy consistency" in shown
    out = workspace["out"]
    report = json.loads((out / "report.json").read_text())
    assert report["num_records"] == 8  # 4 elements x 2 test clips
    assert set(report["levels"]) == {"event", "set", "element"}
    for level in ("event", "set", "element"):
        assert (out / f"per_class_{level}.tsv").exists()
    records = [
        json.loads(x) for x in (out / "records.jsonl").read_text().splitlines()
    ]
    assert len(records) == 8
    assert set(records[0]["scores"]) == {"event", "set", "element"}
    assert len(records[0]["truth"]) == 3
    assert (out / "run_manifest_evaluate.json").exists()


def test_evaluate_base_checkpoint(workspace, tmp_path):
    out = tmp_path / "base_eval"
    code = cli.main([
        "evaluate", "--config", str(workspace["config"]),
        "--checkpoint", str(workspace["out"] / "base_event.pt"),
        "--output", str(out), "--clips", "2", "--split", "train",
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["level"] == "event"
    assert report["num_records"] == 12
    assert 0.0 <= report["top1"] <= 1.0
    records = [
        json.loads(x) for x in (out / "records.jsonl").read_text().splitlines()
    ]
    assert set(records[0]["scores"]) == {"event"}


def test_predict_single_clip(workspace, capsys):
    data = workspace["data"]
    clip = data / "test" / "element_002" / "clip_0000"
    code = cli.main([
        "predict", "--config", str(workspace["config"]), "--clip", str(clip),
    ])
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    saved = json.loads((workspace["out"] / "prediction.json").read_text())
    assert printed == saved
    assert saved["clip"] == str(clip)
    assert saved["frame_count"] == 40
    assert set(saved["scores"]) == {"event", "set", "element"}
    assert set(saved["argmax_names"]) == {"event", "set", "element"}
    assert isinstance(saved["hierarchy_consistent"], bool)
    assert len(saved["scores"]["element"]) == 4


def test_predict_matches_evaluate_scores(workspace):
    # same clip, same center-crop protocol -> identical scores
    assert cli.main(["evaluate", "--config", str(workspace["config"])]) == 0
    records = [
        json.loads(x)
        for x in (workspace["out"] / "records.jsonl").read_text().splitlines()
    ]
    target = records[0]
    assert cli.main([
        "predict", "--config", str(workspace["config"]),
        "--clip", target["clip_id"],
    ]) == 0
    predicted = json.loads(
        (workspace["out"] / "prediction.json").read_text()
    )
    for level in ("event", "set", "element"):
        assert predicted["scores"][level] == pytest.approx(
            target["scores"][level], abs=1e-6
        )


def test_predict_missing_clip(workspace, capsys):
    code = cli.main([
        "predict", "--config", str(workspace["config"]),
        "--clip", str(workspace["root"] / "nope"),
    ])
    assert code == 2
    assert "error[config]" in capsys.readouterr().err


def test_malformed_config(tmp_path, capsys):
    config = tmp_path / "bad.yaml"
    config.write_text("seeed: 1\n")
    assert cli.main(["evaluate", "--config", str(config)]) == 2
    assert cli.main(["evaluate", "--config", str(tmp_path / "missing.yaml")]) == 2
    capsys.readouterr()


def test_divergence_exit_code(workspace, tmp_path, capsys):
    out = tmp_path / "diverge_out"
    code = cli.main([
        "train-base", "--config", str(workspace["config"]),
        "--level", "event", "--lr", "1e6", "--output", str(out),
    ])
    assert code == 4
    assert "error[divergence]" in capsys.readouterr().err
    assert (out / "base_event.diverged.pt").exists()
    assert (out / "base_event.diverged.json").exists()


def test_seed_override_recorded(workspace, tmp_path):
    out = tmp_path / "seed_out"
    cli.main([
        "evaluate", "--config", str(workspace["config"]),
        "--seed", "123", "--output", str(out),
        "--checkpoint", str(workspace["out"] / "joint.pt"),
    ])
    manifest = json.loads((out / "run_manifest_evaluate.json").read_text())
    assert manifest["seed"] == 123
    assert manifest["args"]["seed"] == 123


def test_epochs_override_trims_decay(workspace, tmp_path):
    # --epochs shorter than the configured decay schedule must still run
    data = base_config(tmp_path)
    data["optimizer"]["stage1"] = {"epochs": 30, "decay_epochs": [20, 25],
                                   "batch_size": 4}
    config = write_config(tmp_path, data)
    out = tmp_path / "runs"
    assert cli.main(["gen-synth", "--config", str(config)]) == 0
    code = cli.main([
        "train-base", "--config", str(config), "--level", "event",
        "--epochs", "2", "--output", str(out),
    ])
    assert code == 0
    metrics = [
        json.loads(x)
        for x in (out / "metrics_base_event.jsonl").read_text().splitlines()
    ]
    assert sum(r["kind"] == "epoch" for r in metrics) == 2


def test_help_runs_as_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "triact.cli", "--help"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0
    for command in ("gen-synth", "train-base", "train-joint", "evaluate",
                    "predict"):
        assert command in proc.stdout
