"""
Integration Tests for the Command-Line Interface

Test Coverage:
- Estimator subcommands writing CSV and manifest files and printing a one-line summary
- Exit code 1 for unreadable input, unwritable output, unknown flags and bad config keys
- Default restart count for kmedians
- Exit code 2 for numeric failures
- Config file overlays and their precedence below command-line flags
- Replaying a manifest reproduces the CSV byte for byte
- Optional SVG output
"""

import json
from pathlib import Path

import pytest

from mcp_wasserstein_lab.cli import run
from mcp_wasserstein_lab.persistence import read_csv, read_manifest


def _stdout(capsys) -> str:
    return capsys.readouterr().out.strip()


# --- Estimators ---


def test_w1_of_a_file_with_itself_is_zero(temp_data_dir: Path, out_dir: Path, capsys):
    square = str(temp_data_dir / "square.csv")
    assert run(["w1", "--a", square, "--b", square, "--out", str(out_dir)]) == 0
    assert _stdout(capsys) == "0.0"
    columns, rows = read_csv(out_dir / "w1.csv")
    assert columns == ["value", "solver", "n_a", "n_b"]
    assert rows == [["0.0", "lp", "4", "4"]]
    manifest = read_manifest(out_dir / "w1.manifest.json")
    assert manifest.subcommand == "w1"
    assert manifest.outputs == ["w1.csv"]


def test_w1_of_a_translated_square(temp_data_dir: Path, out_dir: Path, capsys):
    args = ["w1", "--a", str(temp_data_dir / "square.csv"), "--b", str(temp_data_dir / "shifted.csv"), "--out", str(out_dir)]
    assert run(args + ["--solver", "assignment", "--name", "shift"]) == 0
    assert float(_stdout(capsys)) == pytest.approx(5.0, abs=1e-12)
    assert (out_dir / "shift.csv").exists()


def test_sinkhorn_reports_the_divergence(temp_data_dir: Path, out_dir: Path, capsys):
    square = str(temp_data_dir / "square.csv")
    args = ["sinkhorn", "--a", square, "--b", str(temp_data_dir / "shifted.csv"), "--epsilon", "0.5", "--out", str(out_dir), "--plot"]
    assert run(args) == 0
    assert _stdout(capsys).startswith("S_eps = ")
    _, rows = read_csv(out_dir / "sinkhorn.csv")
    values = dict(rows)
    assert values["converged"] == "true"
    assert 0.0 < float(values["divergence"]) <= 5.0 + 1e-6
    assert (out_dir / "sinkhorn.svg").exists()


def test_kmedians_separates_two_blobs(temp_data_dir: Path, out_dir: Path, capsys):
    args = ["kmedians", "--data", str(temp_data_dir / "blobs.csv"), "--k", "2", "--n-init", "2", "--out", str(out_dir)]
    assert run(args) == 0
    columns, rows = read_csv(out_dir / "kmedians.csv")
    assert columns == ["cluster", "weight", "x0", "x1"]
    assert sorted(float(r[1]) for r in rows) == pytest.approx([0.5, 0.5])
    assert _stdout(capsys).startswith("k=2 objective")


def test_kmedians_defaults_to_one_hundred_restarts(temp_data_dir: Path, out_dir: Path):
    args = ["kmedians", "--data", str(temp_data_dir / "blobs.csv"), "--k", "2", "--out", str(out_dir)]
    assert run(args) == 0
    assert read_manifest(out_dir / "kmedians.manifest.json").flags["n_init"] == 100


def test_bernoulli_example_has_unit_bias(out_dir: Path, capsys):
    args = ["exp-bernoulli", "--n", "1", "--theta-star", "0.5", "--grid", "0.4", "--out", str(out_dir)]
    assert run(args) == 0
    assert _stdout(capsys) == "theta=0.4 bias 1.0"
    columns, rows = read_csv(out_dir / "exp-bernoulli.csv")
    assert rows[0][columns.index("bias")] == "1.0"


def test_bernoulli_monte_carlo_table_and_plot(out_dir: Path):
    args = ["exp-bernoulli", "--n", "4", "--grid", "0.3,0.6", "--monte-carlo", "2000", "--plot", "--out", str(out_dir)]
    assert run(args) == 0
    columns, rows = read_csv(out_dir / "exp-bernoulli.monte_carlo.csv")
    assert columns == ["theta", "mc_sample_grad", "stderr"]
    assert len(rows) == 2
    outputs = read_manifest(out_dir / "exp-bernoulli.manifest.json").outputs
    assert "exp-bernoulli.monte_carlo.csv" in outputs and "exp-bernoulli.svg" in outputs


# --- Failures ---


def test_missing_file_exits_with_one_and_names_it(temp_data_dir: Path, out_dir: Path, capsys):
    missing = str(temp_data_dir / "missing.csv")
    assert run(["w1", "--a", missing, "--b", missing, "--out", str(out_dir)]) == 1
    captured = capsys.readouterr()
    assert "missing.csv" in captured.err
    assert captured.out == ""


def test_unknown_flag_exits_with_one(out_dir: Path, capsys):
    assert run(["exp-bernoulli", "--nope", "--out", str(out_dir)]) == 1
    assert "error:" in capsys.readouterr().err


def test_missing_subcommand_exits_with_one(capsys):
    assert run([]) == 1


def test_numeric_failure_exits_with_two(temp_data_dir: Path, out_dir: Path, capsys):
    square = str(temp_data_dir / "square.csv")
    args = ["sinkhorn", "--a", square, "--b", str(temp_data_dir / "shifted.csv"), "--epsilon", "1e-320", "--out", str(out_dir)]
    assert run(args) == 2
    assert "epsilon" in capsys.readouterr().err


def test_unwritable_output_exits_with_one(temp_data_dir: Path, tmp_path: Path, capsys):
    taken = tmp_path / "taken"
    taken.write_text("")
    square = str(temp_data_dir / "square.csv")
    assert run(["w1", "--a", square, "--b", square, "--out", str(taken)]) == 1
    captured = capsys.readouterr()
    assert "error:" in captured.err
    assert captured.out == ""


# --- Config overlay ---


def test_config_file_sets_flag_defaults(tmp_path: Path, out_dir: Path, capsys):
    config = tmp_path / "bernoulli.cfg"
    config.write_text("# two draws, biased target\ntheta-star = 0.6\nn=2\n")
    assert run(["exp-bernoulli", "--config", str(config), "--out", str(out_dir)]) == 0
    assert _stdout(capsys).startswith("theta_bar 0.5 (theta* 0.6)")
    flags = read_manifest(out_dir / "exp-bernoulli.manifest.json").flags
    assert flags["n"] == 2 and flags["theta_star"] == 0.6


def test_command_line_beats_the_config_file(tmp_path: Path, out_dir: Path, capsys):
    config = tmp_path / "bernoulli.cfg"
    config.write_text("theta-star = 0.6\nn = 2\n")
    assert run(["exp-bernoulli", "--config", str(config), "--n", "1", "--out", str(out_dir)]) == 0
    assert _stdout(capsys).startswith("theta_bar 0.99 (theta* 0.6)")


def test_unknown_config_key_is_rejected(tmp_path: Path, out_dir: Path, capsys):
    config = tmp_path / "bad.cfg"
    config.write_text("bogus = 1\n")
    assert run(["exp-bernoulli", "--config", str(config), "--out", str(out_dir)]) == 1
    assert "bogus" in capsys.readouterr().err


# --- Replay ---


def test_replay_reproduces_the_csv(tmp_path: Path, capsys):
    first, second = tmp_path / "first", tmp_path / "second"
    args = ["exp-sample-complexity", "--dim", "2", "--sizes", "4,8", "--reps", "30", "--seed", "3", "--jobs", "2", "--out", str(first)]
    assert run(args) == 0
    manifest_path = first / "exp-sample-complexity.manifest.json"
    recorded = json.loads(manifest_path.read_text())
    assert recorded["flags"]["sizes"] == [4, 8]
    assert "loglog" in recorded["fits"]

    assert run(["--replay", str(manifest_path), "--replay-out", str(second)]) == 0
    original = (first / "exp-sample-complexity.csv").read_bytes()
    assert (second / "exp-sample-complexity.csv").read_bytes() == original
    assert (second / "exp-sample-complexity.summary.csv").exists()


def test_replay_rejects_foreign_manifests(tmp_path: Path, capsys):
    path = tmp_path / "foreign.manifest.json"
    path.write_text(json.dumps({"tool": "other", "subcommand": "w1", "flags": {}, "seed": 0}))
    assert run(["--replay", str(path)]) == 1
