import json
from pathlib import Path

import numpy as np
import pytest

from echomem.cli import main

DATA = Path(__file__).resolve().parents[1] / "src" / "echomem" / "data"


def run_cli(args):
    return main([str(a) for a in args])


def read_dir(path: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}


def test_pulse_command(tmp_path):
    out = tmp_path / "pulse"
    assert run_cli(["pulse", "--preset", "pi43", "--out", out]) == 0
    report = json.loads((out / "pulse_report.json").read_text())
    assert report["min_inversion"] >= 0.99
    assert report["detuning_span_hz"] == pytest.approx(0.32e6)
    assert (out / "inversion_sweep.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "pulse"
    assert "config_sha256" in manifest


def test_pulse_unknown_preset(tmp_path, capsys):
    assert run_cli(["pulse", "--preset", "nope", "--out", tmp_path / "x"]) == 2


def test_memory_requires_seed(tmp_path, capsys):
    with pytest.raises(SystemExit):
        run_cli(["memory", "--out", tmp_path / "m"])


def test_memory_nlpe_and_manifest(tmp_path):
    out = tmp_path / "mem"
    code = run_cli(
        ["memory", "--protocol", "nlpe", "--ions", 400, "--seed", 5, "--out", out, "--counting", "--skip-init"]
    )
    assert code == 0
    report = json.loads((out / "memory_report.json").read_text())
    assert report["echo_time_s"] == pytest.approx(32e-6)
    assert abs(report["efficiency"]["echo_peak_time_s"] - 32e-6) < 0.75e-6
    assert 0 < report["efficiency"]["microscopic"] <= 1
    assert report["counting"]["snr"] > 0
    assert (out / "echo_field.csv").exists()
    assert (out / "counts.csv").exists()


def test_memory_nlpe_dd_readout_time(tmp_path):
    out = tmp_path / "dd"
    code = run_cli(
        [
            "memory", "--protocol", "nlpe_dd", "--ions", 64, "--seed", 3, "--tau", 0.02,
            "--n-pulses", 4, "--out", out, "--skip-init",
        ]
    )
    assert code == 0
    report = json.loads((out / "memory_report.json").read_text())
    assert report["echo_time_s"] == pytest.approx(0.08 + 32e-6, abs=1e-9)
    assert report["pulse_count"] == 8


def test_fit_command_on_shipped_dataset(tmp_path):
    out = tmp_path / "fit"
    code = run_cli(
        ["fit", "--model", "mims", "--data", DATA / "storage_decay_example.csv", "--out", out]
    )
    assert code == 0
    report = json.loads((out / "fit_report.json").read_text())
    assert report["t2_s"] == pytest.approx(27.6, rel=0.05)
    assert report["m"] == pytest.approx(1.70, rel=0.10)


def test_fit_tail_option(tmp_path):
    out = tmp_path / "tail"
    code = run_cli(
        [
            "fit", "--model", "mims_tail", "--t-min", 15.0,
            "--data", DATA / "storage_decay_example.csv", "--out", out,
        ]
    )
    assert code == 0
    report = json.loads((out / "fit_report.json").read_text())
    assert report["model"] == "mims_tail"
    assert report["model_power"] == "intensity"


def test_fit_rejects_three_points(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,v,s\n1,0.9,0.01\n2,0.5,0.01\n3,0.3,0.01\n")
    assert run_cli(["fit", "--model", "mims", "--data", bad, "--out", tmp_path / "o"]) == 2


def test_fit_missing_file(tmp_path):
    assert run_cli(["fit", "--model", "mims", "--data", tmp_path / "nope.csv", "--out", tmp_path / "o"]) == 2


def test_bounds_curve_and_report(tmp_path):
    out = tmp_path / "bounds"
    assert run_cli(["bounds", "--out", out, "--mu-steps", 20]) == 0
    rows = (out / "bounds_curve.csv").read_text().strip().splitlines()
    assert rows[0] == "mu_q,classical_bound,expected_fidelity"
    assert len(rows) == 21
    report = json.loads((out / "bounds_report.json").read_text())
    assert not report["bound_convention"]["discrepant"]
    assert report["crossover_mu"] is not None


def test_bounds_single_mu(tmp_path):
    out = tmp_path / "single"
    assert run_cli(["bounds", "--out", out, "--mu", 1.16]) == 0
    rows = (out / "bounds_curve.csv").read_text().strip().splitlines()
    assert len(rows) == 2


def test_bounds_no_crossing_flag(tmp_path):
    out = tmp_path / "flag"
    assert run_cli(["bounds", "--out", out, "--noise", 0.5, "--mu-steps", 5]) == 0
    report = json.loads((out / "bounds_report.json").read_text())
    assert report["crossover_mu"] is None
    assert report["crossover_flag"] == "no_crossing_in_range"


def test_init_profile(tmp_path):
    out = tmp_path / "init"
    assert run_cli(["init-profile", "--out", out]) == 0
    report = json.loads((out / "init_report.json").read_text())
    assert report["sequence_duration_s"] == pytest.approx(1.580, abs=1e-9)
    assert 0.64e6 <= report["feature_width_hz"] <= 0.96e6


def test_plot_outputs(tmp_path):
    out = tmp_path / "plots"
    assert run_cli(["bounds", "--out", out, "--mu-steps", 10, "--plot"]) == 0
    assert (out / "bounds.png").stat().st_size > 0


def test_seeded_runs_are_byte_identical(tmp_path):
    """Identical seeded invocations write byte-identical artifacts."""
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["memory", "--protocol", "nlpe", "--ions", 200, "--seed", 9, "--counting", "--skip-init"]
    assert run_cli(args + ["--out", a]) == 0
    assert run_cli(args + ["--out", b]) == 0
    files_a, files_b = read_dir(a), read_dir(b)
    assert files_a.keys() == files_b.keys()
    for name in files_a:
        assert files_a[name] == files_b[name], f"{name} differs between identical runs"
