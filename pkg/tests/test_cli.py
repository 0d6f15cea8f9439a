import filecmp
import json
import os

import numpy as np
import pytest

from egolift.cli import main
from egolift.metrics import EvalReport


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Small datasets plus one short training run, shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--samples", "40", "--seed", "1", "--occlusion", "0.3",
                 "--resolution", "16", "--out", str(root / "train")]) == 0
    assert main(["gen-data", "--samples", "12", "--seed", "2", "--occlusion", "0.3",
                 "--resolution", "16", "--out", str(root / "test")]) == 0
    assert main(["train", "--data", str(root / "train"), "--eval-data",
                 str(root / "test"), "--out", str(root / "run"), "--epochs", "2",
                 "--batch", "8", "--seed", "0"]) == 0
    return root


def test_gen_data_manifest_records_flags(workspace):
    meta = json.loads((workspace / "train" / "manifest.json").read_text())
    assert meta["run"]["command"] == "gen-data"
    assert meta["run"]["config"]["occlusion"] == 0.3
    assert meta["run"]["config"]["seed"] == 1
    assert meta["n_samples"] == 40


def test_gen_data_rerun_from_manifest_is_bitwise(workspace, tmp_path):
    assert main(["gen-data", "--config", str(workspace / "train" / "manifest.json"),
                 "--out", str(tmp_path / "clone")]) == 0
    names = ["manifest.json", "poses.bin", "heatmaps_joint.bin", "heatmaps_limb.bin"]
    match, mismatch, errors = filecmp.cmpfiles(workspace / "train", tmp_path / "clone",
                                               names, shallow=False)
    assert match == names and not mismatch and not errors


def test_gen_data_validation_errors(tmp_path):
    assert main(["gen-data", "--samples", "5", "--occlusion", "1.5",
                 "--out", str(tmp_path / "x")]) == 1
    assert main(["gen-data", "--samples", "0", "--out", str(tmp_path / "x")]) == 1
    assert main(["gen-data", "--samples", "5", "--resolution", "20",
                 "--out", str(tmp_path / "x")]) == 1


def test_unknown_flag_exits_with_validation_code(tmp_path):
    assert main(["gen-data", "--nonsense", "1", "--out", str(tmp_path / "x")]) == 1


def test_env_seed_default(tmp_path):
    os.environ["ETAP_SEED"] = "77"
    try:
        assert main(["gen-data", "--samples", "3", "--resolution", "16",
                     "--out", str(tmp_path / "env")]) == 0
        meta = json.loads((tmp_path / "env" / "manifest.json").read_text())
        assert meta["seed"] == 77
    finally:
        del os.environ["ETAP_SEED"]


def test_train_outputs_and_plots(workspace):
    run = workspace / "run"
    for name in ("metrics.csv", "training_curves.png", "lr_schedule.png",
                 "eval_report.csv", "eval_summary.json", "manifest.json",
                 "epoch_000", "epoch_001"):
        assert (run / name).exists(), name
    history = (run / "metrics.csv").read_text().strip().splitlines()
    assert len(history) == 3  # header + 2 epochs
    assert "eval_mpjpe" in history[0]


def test_train_missing_dataset_is_validation_error(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "r")]) == 1


def test_eval_deterministic_and_per_joint(workspace, tmp_path):
    for i in range(2):
        assert main(["eval", "--ckpt", str(workspace / "run"), "--data",
                     str(workspace / "test"), "--out", str(tmp_path / f"ev{i}"),
                     "--per-joint"]) == 0
    a = (tmp_path / "ev0" / "report.csv").read_text()
    b = (tmp_path / "ev1" / "report.csv").read_text()
    assert a == b
    report = EvalReport.read_csv(tmp_path / "ev0" / "report.csv")
    assert report.joint_errors.shape == (12, 14)
    assert (tmp_path / "ev0" / "per_joint.csv").exists()
    assert (tmp_path / "ev0" / "per_joint_errors.png").exists()


def test_eval_without_per_joint_flag_has_no_joint_columns(workspace, tmp_path):
    assert main(["eval", "--ckpt", str(workspace / "run"), "--data",
                 str(workspace / "test"), "--out", str(tmp_path / "plain")]) == 0
    header = (tmp_path / "plain" / "report.csv").read_text().splitlines()[0]
    assert header == "sample_id,mpjpe,pa_mpjpe"


def test_eval_missing_checkpoint(workspace, tmp_path):
    assert main(["eval", "--ckpt", str(tmp_path / "missing"), "--data",
                 str(workspace / "test"), "--out", str(tmp_path / "ev")]) == 1


def test_eval_dataset_model_mismatch(workspace, tmp_path):
    assert main(["gen-data", "--samples", "3", "--resolution", "32",
                 "--out", str(tmp_path / "wrongres")]) == 0
    assert main(["eval", "--ckpt", str(workspace / "run"), "--data",
                 str(tmp_path / "wrongres"), "--out", str(tmp_path / "ev")]) == 1


def test_prop_metrics_identical_models_give_zero_effect(workspace, tmp_path):
    ev = tmp_path / "same"
    assert main(["eval", "--ckpt", str(workspace / "run"), "--data",
                 str(workspace / "test"), "--out", str(ev), "--per-joint"]) == 0
    out = tmp_path / "pm"
    assert main(["prop-metrics", "--np-report", str(ev / "report.csv"),
                 "--p-report", str(ev / "report.csv"), "--data",
                 str(workspace / "test"), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mean_pe"] == 0.0
    assert summary["slope"] == 0.0
    rows = (out / "pp_pe.csv").read_text().strip().splitlines()
    assert len(rows) - 1 == 12 * 14  # samples x non-root joints
    assert (out / "pp_pe.png").exists()


def test_prop_metrics_rejects_reports_without_joint_columns(workspace, tmp_path):
    plain = tmp_path / "noj"
    assert main(["eval", "--ckpt", str(workspace / "run"), "--data",
                 str(workspace / "test"), "--out", str(plain)]) == 0
    assert main(["prop-metrics", "--np-report", str(plain / "report.csv"),
                 "--p-report", str(plain / "report.csv"), "--data",
                 str(workspace / "test"), "--out", str(tmp_path / "pm2")]) == 1


def test_grad_check_exit_codes(tmp_path):
    report = tmp_path / "gc.json"
    assert main(["grad-check", "--seeds", "1", "--out", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["passed"] and data["max"] < 1e-5
    assert main(["grad-check", "--seeds", "1", "--threshold", "1e-12"]) == 1


def test_grad_check_deterministic_across_reruns(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["grad-check", "--seeds", "2", "--out", str(a)]) == 0
    assert main(["grad-check", "--seeds", "2", "--out", str(b)]) == 0
    assert a.read_text() == b.read_text()


def test_train_resume_continues(workspace, tmp_path):
    out = tmp_path / "resumable"
    args = ["train", "--data", str(workspace / "train"), "--eval-data",
            str(workspace / "test"), "--out", str(out), "--epochs", "2",
            "--batch", "8", "--seed", "0"]
    assert main(args) == 0
    import shutil
    shutil.rmtree(out / "epoch_001")
    assert main(args + ["--resume"]) == 0
    ref = workspace / "run"
    same = filecmp.cmpfiles(out / "epoch_001" / "weights",
                            ref / "epoch_001" / "weights",
                            ["head.w.bin", "enc.wz.bin"], shallow=False)
    assert same[0] == ["head.w.bin", "enc.wz.bin"]


def test_train_rejects_cnn_checkpoint_in_grid_slot(workspace, tmp_path):
    assert main(["ablate-recon", "--grid", str(workspace / "run"), "--cnn",
                 str(workspace / "run"), "--train-data", str(workspace / "train"),
                 "--test-data", str(workspace / "test"),
                 "--out", str(tmp_path / "ar")]) == 1
