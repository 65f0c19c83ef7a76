import csv
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from egoppg.cli import main
from egoppg.config import ConfigError, RunConfig, config_from_dict, dump_config, load_config
from egoppg.ingest import write_recording
from egoppg.synth import SynthSpec, generate, make_beat_times, pulse_waveform


# --- configuration -------------------------------------------------------------------

def test_defaults_mirror_reference_protocol():
    cfg = RunConfig()
    assert (cfg.preprocess.T, cfg.preprocess.h, cfg.preprocess.w) == (128, 48, 128)
    assert cfg.train.lr == 0.0009 and cfg.train.batch_size == 4 and cfg.train.epochs == 100
    assert tuple(cfg.eval.band) == (0.5, 2.8) and cfg.eval.window_s == 60.0
    assert cfg.ingest.exclusion_threshold_bpm == 3.0
    assert (cfg.folds.k, cfg.folds.n_val) == (5, 2)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"train": {"learning_rate": 0.1}})
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"trainer": {}})


def test_type_errors_reported_with_path():
    with pytest.raises(ConfigError, match="train.epochs"):
        config_from_dict({"train": {"epochs": 2.5}})
    with pytest.raises(ConfigError, match="model.use_sa"):
        config_from_dict({"model": {"use_sa": "yes"}})
    with pytest.raises(ConfigError, match="eval.band"):
        config_from_dict({"eval": {"band": [0.5]}})
    with pytest.raises(ConfigError):
        config_from_dict({"model": {"T": 10}})


def test_hash_is_stable_and_sensitive(tmp_path):
    a = RunConfig()
    dump_config(a, tmp_path / "c.yaml")
    b = load_config(tmp_path / "c.yaml")
    assert a.hash() == b.hash() and a == b
    c = load_config(None, {"seed": 1})
    assert c.hash() != a.hash()


def test_overrides_apply_on_top_of_file(tmp_path):
    (tmp_path / "c.yaml").write_text(yaml.safe_dump({"seed": 3, "train": {"epochs": 2}}))
    cfg = load_config(tmp_path / "c.yaml", {"seed": 9, "out_dir": None})
    assert cfg.seed == 9 and cfg.train.epochs == 2 and cfg.out_dir == "runs"


# --- CLI -----------------------------------------------------------------------------

def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def write_cfg(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_synth_then_baseline_on_defaults(tmp_path, capsys):
    out = tmp_path / "run"
    code, _, err = run(["synth", "--out-dir", str(out)], capsys)
    assert code == 0, err
    code, _, err = run(["baseline", "--out-dir", str(out), "--input", str(out / "data")], capsys)
    assert code == 0, err
    with open(out / "baseline" / "table_baseline.csv") as f:
        rows = {r["Model"]: r for r in csv.DictReader(f)}
    assert float(rows["Baseline skin"]["MAE"]) <= 2.0
    man = json.loads((out / "run_baseline.json").read_text())
    assert man["status"] == "complete" and man["config_hash"] == load_config(None, {"out_dir": str(out)}).hash()
    assert (out / "config_baseline.yaml").exists()


def test_validate_lists_exclusion_of_shifted_ppg(tmp_path, capsys):
    spec = SynthSpec(duration_s=90.0, frame_size=(24, 64), hr_profile=72.0,
                     activities=[("office", 0.0, 45.0), ("walking", 45.0, 90.0)],
                     device_offsets={"ppg": 0.6, "ecg": -0.9}, participant="P00")
    raw, truth = generate(spec, seed=0)
    # PPG of the walking task runs 5 bpm faster than the ECG
    t = raw.ppg_nose.times
    fast = make_beat_times(lambda x: np.full_like(x, 77.0), 100.0, 0.0, np.random.default_rng(1), t_start=-5.0)
    ppg = np.where(t < 45.0, pulse_waveform(t, truth.beat_times), pulse_waveform(t, fast))
    raw.ppg_nose = raw.ppg_nose.replace(ppg)
    write_recording(raw, tmp_path / "data" / "P00")
    out = str(tmp_path / "run")
    assert run(["ingest", "--out-dir", out, "--input", str(tmp_path / "data")], capsys)[0] == 0
    code, _, err = run(["validate", "--out-dir", out, "--input", out + "/synced"], capsys)
    assert code == 0, err
    with open(tmp_path / "run" / "validation.csv") as f:
        rows = {r["activity"]: r for r in csv.DictReader(f)}
    assert rows["office"]["excluded"] == "False"
    assert rows["walking"]["excluded"] == "True" and float(rows["walking"]["ppg_ecg_mae_bpm"]) > 3.0
    man = json.loads((tmp_path / "run" / "run_validate.json").read_text())
    assert [e["activity"] for e in man["result"]["excluded"]] == ["walking"]


def test_pipeline_end_to_end_produces_table(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.yaml", {
        "out_dir": str(tmp_path / "run"),
        "synth": {"n_participants": 2, "duration_s": 90.0, "frame_size": [24, 64]},
        "preprocess": {"T": 32, "h": 8, "w": 16},
        "model": {"embed_dim": 16, "channels": [4, 8, 8, 8], "resnet_width": 4, "imu_hidden": 8},
        "train": {"epochs": 1, "batch_size": 4},
        "folds": {"train": ["P00"], "val": [], "test": ["P01"]},
        "eval": {"window_s": 30.0},
    })
    out = tmp_path / "run"
    for argv in (["synth"], ["ingest", "--input", str(out / "data")],
                 ["validate", "--input", str(out / "synced")],
                 ["preprocess", "--input", str(out / "synced")],
                 ["train", "--input", str(out / "clips")]):
        code, _, err = run([*argv, "--config", cfg], capsys)
        assert code == 0, (argv, err)
    ckpt = out / "checkpoints" / "fold0_none.pt"
    assert ckpt.exists()
    code, _, err = run(["eval", "--config", cfg, "--input", str(out / "clips"), "--checkpoint", str(ckpt),
                        "--truth", str(out / "data")], capsys)
    assert code == 0, err
    with open(out / "eval" / "table_overall.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["Model", "MAE", "RMSE", "MAPE", "r"]
    assert rows[1][0] == "PulseFormer"
    code, _, err = run(["features", "--config", cfg, "--input", str(out / "eval" / "hr")], capsys)
    assert code == 0, err
    assert (out / "features.csv").exists()


def test_missing_input_gives_structured_error(tmp_path, capsys):
    out = tmp_path / "run"
    code, _, err = run(["ingest", "--out-dir", str(out), "--input", str(tmp_path / "nope")], capsys)
    assert code == 2
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "FileNotFoundError" and payload["command"] == "ingest"
    man = json.loads((out / "run_ingest.json").read_text())
    assert man["status"] == "failed" and man["error"]["error"] == "FileNotFoundError"


def test_bad_config_exits_nonzero(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.yaml", {"train": {"bogus": 1}})
    code, _, err = run(["synth", "--config", cfg, "--out-dir", str(tmp_path)], capsys)
    assert code == 2 and json.loads(err)["error"] == "ConfigError"


def test_console_script_reports_version():
    res = subprocess.run([sys.executable, "-m", "egoppg.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
    res = subprocess.run([sys.executable, "-m", "egoppg.cli", "nosuchcommand"], capture_output=True, text=True)
    assert res.returncode != 0
