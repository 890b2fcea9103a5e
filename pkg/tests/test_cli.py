import json
import subprocess
import sys
import time

import pytest

from fadingrelay import harness
from fadingrelay.cli import PRESETS, load_preset, main
from fadingrelay.harness import ExperimentConfig


MINIMAL = {
    "params": {"a_sq": 1.5, "snr_base": 1.0, "N": 8},
    "codebook": {"M_R": 2, "M_D": 2},
    "n_trials": 1000,
    "base_seed": 3,
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(MINIMAL))
    return path


def test_rates_capacity_case(capsys):
    assert main(["rates", "--set", "a_sq=3", "--set", "b_sq=0.5"]) == 0
    out = capsys.readouterr().out
    assert "RelayLimitedByMACut" in out
    assert "capacity_known    true" in out
    rows = {line.split()[0]: line.split()[1:] for line in out.splitlines()}
    assert rows["cutset_ub"] == rows["block_markov_lb"] == rows["min_cut"]
    assert float(rows["min_cut"][0]) == 1.5
    assert float(rows["min_cut"][1]) == pytest.approx(1.5 / 0.6931471805599453)


def test_rates_direct_and_regime_two(capsys, tmp_path):
    out_path = tmp_path / "rates.json"
    assert main(["rates", "--set", "a_sq=0.5", "--out", str(out_path), "--quiet"]) == 0
    assert capsys.readouterr().out == ""
    data = json.loads(out_path.read_text())
    assert data["regime"] == "Direct" and data["R_1"] == 0 and data["edge_red"] == 0
    assert data["schema_version"] == harness.SCHEMA_VERSION
    assert main(["rates", "--set", "a_sq=1.2", "--set", "b_sq=0.5", "--out", str(out_path)]) == 0
    data = json.loads(out_path.read_text())
    assert data["regime"] == "RelayLimitedBySR"
    assert data["edge_red"] == pytest.approx(0.2)


def test_rates_invalid_params_is_usage_error(capsys):
    assert main(["rates", "--set", "theta=3"]) == 2
    assert "theta" in capsys.readouterr().err


def test_missing_config_exit_2(capsys, tmp_path):
    missing = tmp_path / "nope.json"
    assert main(["simulate", "--config", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["simulate", "--set", "nonsense"],
    ["simulate", "--set", "unknown_key=1"],
    ["simulate", "--preset", "nope"],
    ["sweep"],
    ["simulate", "--preset", "fig3"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_bad_json_config(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["rates", "--config", str(path)]) == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--format", "xml"])
    assert exc.value.code == 2


def test_simulate_minimal_fast(config_file, tmp_path, capsys):
    out = tmp_path / "run.csv"
    start = time.perf_counter()
    assert main(["simulate", "--config", str(config_file), "--out", str(out)]) == 0
    assert time.perf_counter() - start < 5.0
    text = capsys.readouterr().out
    assert "P_e" in text and "exact" in text and "chernoff" in text
    recs = harness.read_records(out, "csv")
    assert len(recs) == 1 and recs[0].n_trials == 1000 and recs[0].M_S == 4


def test_simulate_output_is_reproducible(config_file, tmp_path):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    for path, seed in ((a, "7"), (b, "7"), (c, "8")):
        assert main(["simulate", "--config", str(config_file), "--seed", seed,
                     "--out", str(path), "--quiet"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_simulate_jsonl_and_trials(config_file, tmp_path):
    out = tmp_path / "run.jsonl"
    assert main(["simulate", "--config", str(config_file), "--trials", "50",
                 "--format", "jsonl", "--out", str(out), "--quiet"]) == 0
    row = json.loads(out.read_text())
    assert row["schema_version"] == harness.SCHEMA_VERSION and row["n_trials"] == 50


def test_simulate_planning_failure_exit_1(capsys):
    argv = ["simulate", "--set", "rate_fraction=0.9", "--set", "N=64", "--set", "snr_base=5",
            "--set", "max_codebook=16", "--quiet"]
    assert main(argv) == 1
    assert "ResourceError" in capsys.readouterr().err


def test_sweep_progress_and_output(tmp_path, capsys):
    out = tmp_path / "s.csv"
    argv = ["sweep", "--preset", "example", "--set", 'sweep={"a_sq": [0.5, 1.5]}',
            "--trials", "100", "--out", str(out)]
    assert main(argv) == 0
    text = capsys.readouterr().out
    assert "[1/2]" in text and "[2/2]" in text
    assert [r.a_sq for r in harness.read_records(out, "csv")] == [0.5, 1.5]


def test_sweep_partial_failure_warns(tmp_path, capsys):
    argv = ["sweep", "--preset", "example", "--set", 'sweep={"theta": [1.0, 5.0]}',
            "--trials", "50", "--quiet"]
    assert main(argv) == 0
    assert "warning: point theta=5.0 failed" in capsys.readouterr().err


def test_sweep_all_failed_exit_1(capsys):
    argv = ["sweep", "--preset", "example", "--set", 'sweep={"theta": [3.0, 5.0]}', "--quiet"]
    assert main(argv) == 1
    assert "every sweep point failed" in capsys.readouterr().err


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = ExperimentConfig.from_dict(load_preset(name))
    if name in ("fig3", "n-scaling", "oracle-grid"):
        assert harness.sweep_points(cfg)


def test_oracle_grid_preset_shape():
    cfg = ExperimentConfig.from_dict(load_preset("oracle-grid"))
    pts = harness.sweep_points(cfg)
    assert len(pts) == 12
    sizes = {(o["codebook"]["M_R"], o["codebook"]["M_D"]) for _, o in pts}
    assert {r * d for r, d in sizes} == {4, 8} and {r for r, _ in sizes} == {2, 4}
    assert {o["N"] for _, o in pts} == {8, 32}


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fadingrelay", "rates", "--set", "a_sq=2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "RelayLimitedBySR" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "fadingrelay", "simulate", "--config",
                           str(tmp_path / "x.json")], capture_output=True, text=True, check=False)
    assert proc.returncode == 2
