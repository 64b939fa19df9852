import json
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import small_config
from sar_atr import imaging
from sar_atr.harness import cli
from sar_atr.harness.config import ExperimentConfig, load_config, parse_config
from sar_atr.harness.dataset import (DatasetError, balanced_classes, decode_record,
                                     generate_dataset, load_dataset, read_manifest)
from sar_atr.harness.experiment import (CVResult, FoldError, FoldResult, angle_bin_index,
                                        angle_binned_report, fold_assignment, format_table,
                                        mirror_angle_deg, split_folds, summary_rows)
from sar_atr.rfsim import ConfigError

TINY_RUN = """\
folds = 2
eval_limit = 4
deepfool_max_iter = 10
data.num_targets = 8
data.images_per_target = 6
train.epochs = 1
train.batch_size = 8
"""


# --- config -----------------------------------------------------------------------

def test_config_round_trip():
    cfg = parse_config(TINY_RUN + "schemes = basic, adv\nimaging.N = 128\n")
    assert cfg.folds == 2 and cfg.schemes == ("BASIC", "ADV")
    assert cfg.data.num_targets == 8 and cfg.imaging.N == 128 and cfg.train.epochs == 1
    assert parse_config(cfg.to_text()) == cfg
    assert parse_config(ExperimentConfig().to_text()) == ExperimentConfig()


def test_config_comments_and_file(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment only\n\ndata.snr_db = 10  # trailing\n")
    assert load_config(path).data.snr_db == 10.0
    assert load_config(None) == ExperimentConfig()


@pytest.mark.parametrize("text", [
    "data.nonsense = 1", "bogus = 3", "nosection.x = 1", "data = 1", "folds 4",
    "folds = four", "schemes = BASIC, FOO", "folds = 1", "angle_bins = 0, 90, 180",
    "data.num_targets = 0", "train.optimizer = rmsprop", "train.lr = fast",
])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 500), st.floats(-10, 40, allow_nan=False), st.integers(2, 10),
       st.floats(1e-6, 1.0))
def test_config_text_is_lossless(targets, snr, folds, lr):
    cfg = parse_config(f"data.num_targets = {targets}\ndata.snr_db = {snr!r}\n"
                       f"folds = {folds}\ntrain.lr = {lr!r}\n")
    assert parse_config(cfg.to_text()) == cfg


# --- dataset ------------------------------------------------------------------------

def test_balanced_classes():
    rng = np.random.default_rng(0)
    c = balanced_classes(10, rng)
    assert len(c) == 10
    for block in range(2):
        assert sorted(c[4 * block:4 * block + 4]) == [0, 1, 2, 3]


def test_dataset_counts(small_dataset_dir, small_dataset):
    rows = read_manifest(small_dataset_dir)
    assert len(rows) == len(small_dataset) == 48
    assert [r["record_id"] for r in rows] == list(range(48))
    assert np.bincount(small_dataset.labels, minlength=4).tolist() == [12] * 4
    assert small_dataset.images.shape == (48, 160, 160)
    assert small_dataset.signals.shape == (48, 64, 64)
    for t in range(8):
        assert len(set(small_dataset.labels[small_dataset.target_ids == t])) == 1
    meta = json.loads((small_dataset_dir / "dataset.json").read_text())
    assert meta["num_records"] == 48


def test_stored_image_is_image_of_stored_signal(small_dataset):
    for i in (0, 17, 47):
        again = imaging.g(small_dataset.history(i), small_dataset.imaging_config)
        assert np.allclose(again, small_dataset.images[i], atol=1e-5)


def test_generation_is_reproducible(small_dataset_dir, tmp_path):
    cfg = small_config()
    generate_dataset(cfg, tmp_path / "serial")
    generate_dataset(cfg, tmp_path / "pool", workers=2)
    for name in ("manifest.jsonl", "dataset.json", "records/000031.bin"):
        ref = (small_dataset_dir / name).read_bytes()
        assert (tmp_path / "serial" / name).read_bytes() == ref
        assert (tmp_path / "pool" / name).read_bytes() == ref
    other = generate_dataset(small_config(seed=1), tmp_path / "other")
    assert other.read_bytes() != (small_dataset_dir / "manifest.jsonl").read_bytes()


def test_refuses_overwrite(small_dataset_dir):
    with pytest.raises(DatasetError):
        generate_dataset(small_config(), small_dataset_dir)


def test_truncated_record(small_dataset_dir):
    blob = (small_dataset_dir / "records/000000.bin").read_bytes()
    header, samples, image = decode_record(blob)
    assert header["record_id"] == 0 and samples.shape == (64, 64) and image.shape == (160, 160)
    with pytest.raises(DatasetError):
        decode_record(blob[:-4])


def test_missing_dataset(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "nothing")


# --- folds --------------------------------------------------------------------------

def test_folds_partition_by_target():
    rng = np.random.default_rng(0)
    labels_of = balanced_classes(40, rng)
    targets = np.repeat(np.arange(40), 5)
    labels = labels_of[targets]
    data = SimpleNamespace(target_ids=targets, labels=labels)
    splits = split_folds(data, 4, seed=3)
    seen = np.concatenate([va for _, va in splits])
    assert sorted(seen.tolist()) == list(range(200))
    for tr, va in splits:
        assert not set(targets[tr]) & set(targets[va])
        assert len(tr) + len(va) == 200
        assert len(set(targets[va])) == 10
        # ten targets per class over four folds: two or three of each class
        per_class = np.bincount(labels[va], minlength=4) // 5
        assert per_class.min() >= 2 and per_class.max() <= 3
    assert split_folds(data, 4, seed=3)[1][1].tolist() == splits[1][1].tolist()


def test_fold_errors():
    with pytest.raises(FoldError):
        fold_assignment([0, 0], [1, 2], 2, 0)
    with pytest.raises(FoldError):
        split_folds(SimpleNamespace(target_ids=np.arange(3), labels=np.arange(3)), 4, 0)


# --- reports ------------------------------------------------------------------------

@pytest.mark.parametrize("deg, expected_bin", [
    (0, 0), (35.9, 0), (36, 1), (90, 2), (270, 2), (130, 3), (180, 4), (200, 4), (230, 3), (359, 0),
])
def test_angle_bins(deg, expected_bin):
    assert angle_bin_index(math.radians(deg)) == expected_bin


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 2 * math.pi))
def test_angle_mirror(theta):
    assert 0 <= mirror_angle_deg(theta) <= 180
    assert angle_bin_index(theta) == angle_bin_index(2 * math.pi - theta)


def _row(theta_deg, correct, ratio):
    return {"theta": math.radians(theta_deg), "true_class": 1, "pred_class": 1 if correct else 2,
            "norm_ratio": ratio}


def test_angle_binned_report():
    rows = [_row(10, True, 0.02), _row(20, False, None), _row(90, True, 0.01),
            _row(100, True, 0.03)]
    out = angle_binned_report("BASIC", rows)
    assert [r["bin"] for r in out] == ["front", "front/side", "broadside", "rear/side", "rear"]
    assert out[0]["count"] == 2 and out[0]["accuracy"] == 0.5 and out[0]["rho"] == 0.02
    assert out[2]["rho"] == pytest.approx(0.02) and out[2]["n_success"] == 2
    assert out[4]["count"] == 0 and out[4]["accuracy"] is None and out[4]["rho"] is None


def test_summary_uses_sample_std():
    folds = [FoldResult(k, a, r, 1, 0, []) for k, (a, r) in
             enumerate([(0.5, 0.01), (0.7, 0.03), (0.6, None)])]
    row = summary_rows({"BASIC": CVResult("BASIC", folds)})[0]
    assert row["accuracy_mean"] == pytest.approx(0.6)
    assert row["accuracy_std"] == pytest.approx(0.1)
    assert row["rho_mean"] == pytest.approx(0.02)
    assert row["rho_std"] == pytest.approx(np.std([0.01, 0.03], ddof=1))
    text = format_table([row, {"scheme": "ADV", "accuracy_mean": None, "accuracy_std": None,
                               "rho_mean": None, "rho_std": None}])
    assert "0.600 +/- 0.100" in text and "n/a" in text and "715k" in text


# --- command line -------------------------------------------------------------------

def _error_line(capsys):
    return capsys.readouterr().err.strip().splitlines()[-1]


@pytest.mark.parametrize("argv, code, category", [
    (["train", "--data", "x", "--out", "y", "--scheme", "FOO"], 2, "config"),
    (["attack", "--data", "/nonexistent", "--checkpoint", "c", "--out", "o"], 3, "data"),
])
def test_cli_error_categories(argv, code, category, capsys):
    assert cli.main(argv) == code
    assert _error_line(capsys).startswith(f"error category={category}: ")


def test_cli_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "bad.txt"
    cfg.write_text("folds = zero\n")
    assert cli.main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 2
    assert "category=config" in _error_line(capsys)


def test_cli_missing_fold_class(tmp_path, small_dataset_dir, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text(TINY_RUN.replace("folds = 2", "folds = 4"))
    code = cli.main(["run-all", "--config", str(cfg), "--out", str(tmp_path / "run")])
    assert code == 3 and "category=data" in _error_line(capsys)


def test_cli_train_attack_report(tmp_path, small_dataset_dir, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text(TINY_RUN)
    args = ["--config", str(cfg)]
    assert cli.main(["train", *args, "--data", str(small_dataset_dir), "--fold", "0",
                     "--out", str(tmp_path / "m")]) == 0
    ckpt = tmp_path / "m" / "model.ckpt"
    assert ckpt.exists() and (tmp_path / "m" / "metrics.csv").exists()
    assert cli.main(["attack", *args, "--data", str(small_dataset_dir), "--fold", "0",
                     "--checkpoint", str(ckpt), "--out", str(tmp_path / "a")]) == 0
    assert capsys.readouterr().out.startswith("accuracy=")
    rows = (tmp_path / "a" / "attack.csv").read_text().splitlines()
    assert len(rows) == 1 + 24
    assert cli.main(["report", "--out", str(tmp_path / "empty")]) == 3


def test_cli_run_all(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text(TINY_RUN)
    out = tmp_path / "run"
    assert cli.main(["run-all", "--config", str(cfg), "--scheme", "BASIC,SIM",
                     "--out", str(out)]) == 0
    assert "BASIC" in capsys.readouterr().out
    for name in ("report.csv", "report.txt", "angle_bins_basic.csv", "angle_bins_sim.csv",
                 "basic/summary.json", "sim/fold1/eval.csv", "config.txt"):
        assert (out / name).exists(), name
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == "scheme,accuracy_mean,accuracy_std,rho_mean,rho_std"
    assert [l.split(",")[0] for l in lines[1:]] == ["BASIC", "SIM"]
    assert parse_config((out / "config.txt").read_text()).schemes == ("BASIC", "SIM")
    before = (out / "report.csv").read_bytes()
    assert cli.main(["report", "--out", str(out)]) == 0
    assert (out / "report.csv").read_bytes() == before
