import json
import subprocess
import sys

import pytest

from skidsteer.cli import main

SCENARIO = {
    "variant": "ext-dd-sym", "params": [0.86, 3.08], "duration": 120, "speed_limit": 5.0,
    "profile_seed": 1, "noise_vx": 0.05, "noise_vy": 0.02, "noise_omega": 0.05, "seed": 3,
}


def pipeline(root, fast=True):
    """simulate train + eval, calibrate, evaluate; returns the report directory."""
    for name, seed in (("train", 1), ("eval", 2)):
        sc = root / f"{name}.json"
        sc.write_text(json.dumps(SCENARIO | {"profile_seed": seed, "seed": 10 + seed}))
        assert main(["simulate", "--scenario", str(sc), "--out", str(root / name)]) == 0
    opt = ["--restarts", "2", "--max-evals", "300"] if fast else []
    assert main(["calibrate", "--model", "ext-dd-sym", "--train", str(root / "train/cmd.csv"),
                 str(root / "train/pose.csv"), "--out", str(root / "sym.model"), *opt]) == 0
    assert main(["evaluate", "--model-file", str(root / "sym.model"), "--baseline",
                 "--eval", str(root / "eval/cmd.csv"), str(root / "eval/pose.csv"),
                 "--out", str(root / "report")]) == 0
    return root / "report"


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    return pipeline(tmp_path_factory.mktemp("run"))


def test_end_to_end_outputs(report):
    names = {p.name for p in report.iterdir()}
    assert {"summary.json", "rotation_response.csv", "rotation_response.png",
            "error_distributions.png", "samples_sym.csv", "samples_ideal-dd.csv",
            "error_grid_sym.csv", "error_grid_sym.png"} <= names
    doc = json.loads((report / "summary.json").read_text())
    assert set(doc["models"]) == {"sym", "ideal-dd"}
    sym, ideal = doc["models"]["sym"]["eps_t"], doc["models"]["ideal-dd"]["eps_t"]
    assert sym["median"] < ideal["median"]


def test_model_file_records_fit(report):
    doc = json.loads((report.parent / "sym.model").read_text())
    assert doc["variant"] == "ext-dd-sym"
    assert doc["metadata"]["segments"] > 0 and "final_loss" in doc["metadata"]


def test_reruns_byte_identical(tmp_path, report):
    again = pipeline(tmp_path)
    for path in sorted(report.iterdir()):
        assert (again / path.name).read_bytes() == path.read_bytes(), path.name


def test_unknown_flag_is_usage_error(capsys):
    assert main(["evaluate", "--frobnicate"]) == 1


def test_missing_subcommand():
    assert main([]) == 1


def test_missing_input_is_data_error(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    code = main(["calibrate", "--model", "ext-dd-sym", "--train", str(missing), str(missing),
                 "--out", str(tmp_path / "m.model")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_malformed_csv_is_data_error(tmp_path, capsys):
    bad = tmp_path / "cmd.csv"
    bad.write_text("t,omega_l,omega_r\n0,1,1\n0,1,1\n")
    code = main(["calibrate", "--model", "roc", "--train", str(bad), str(bad),
                 "--out", str(tmp_path / "m.model")])
    assert code == 2 and "cmd.csv:3" in capsys.readouterr().err


def test_bad_horizon_is_usage_error(tmp_path, report):
    root = report.parent
    code = main(["calibrate", "--model", "ext-dd-sym", "--train", str(root / "train/cmd.csv"),
                 str(root / "train/pose.csv"), "--out", str(tmp_path / "m"), "--horizon", "-1"])
    assert code == 1


def test_ideal_calibration_refused(tmp_path, report):
    root = report.parent
    code = main(["calibrate", "--model", "ideal-dd", "--train", str(root / "train/cmd.csv"),
                 str(root / "train/pose.csv"), "--out", str(tmp_path / "m")])
    assert code == 2


def test_analyze(tmp_path, report):
    root = report.parent
    code = main(["analyze", "--model", "ext-dd-sym",
                 "--train", str(root / "train/cmd.csv"), str(root / "train/pose.csv"),
                 "--eval", str(root / "eval/cmd.csv"), str(root / "eval/pose.csv"),
                 "--train-horizons", "2", "--eval-horizons", "1", "2",
                 "--restarts", "1", "--max-evals", "200", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "sweep_ext-dd-sym.csv").read_text().splitlines()
    assert lines[0] == "h_t,h_e,median_eps_t,iqr_eps_t,count" and len(lines) == 3
    assert (tmp_path / "sweep_ext-dd-sym.png").is_file()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "skidsteer", "--help"],
                         capture_output=True, text=True, check=True)
    assert "simulate" in out.stdout and "calibrate" in out.stdout


def test_same_stem_models_kept_apart(tmp_path, report):
    root = report.parent
    (tmp_path / "other").mkdir()
    copy = tmp_path / "other" / "sym.model"
    copy.write_bytes((root / "sym.model").read_bytes())
    assert main(["evaluate", "--model-file", str(root / "sym.model"), "--model-file", str(copy),
                 "--eval", str(root / "eval/cmd.csv"), str(root / "eval/pose.csv"),
                 "--out", str(tmp_path / "r"), "--no-plots"]) == 0
    assert set(json.loads((tmp_path / "r/summary.json").read_text())["models"]) == {"sym", "sym-2"}
