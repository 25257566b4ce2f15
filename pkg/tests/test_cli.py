import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import closed_form
from percoldp.cli import main, run


def record(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, (json.loads(out.out) if out.out.strip() else None), out.err


def test_sample_writes_perc_and_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.perc", tmp_path / "b.perc"
    code, rec, _ = record(capsys, ["sample", "--L", "16", "--seed", "3", "--out", str(a)])
    assert code == 0 and rec["status"] == "ok"
    assert a.read_bytes()[:4] == b"PERC"
    main(["sample", "--L", "16", "--seed", "3", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_bad_parameter_exit_2_names_flag(tmp_path, capsys):
    code, rec, err = record(capsys, ["sample", "--p", "1.5", "--out", str(tmp_path / "x")])
    assert code == 2 and rec is None and "--p" in err
    code, _, err = record(capsys, ["mgf", "--theta", "0.5"])
    assert code == 2 and "--theta" in err
    assert main(["nonsense"]) == 2


def test_entry_point_subprocess(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "percoldp.cli", "sample", "--p", "1.5", "--out", str(tmp_path / "x")],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "--p" in proc.stderr


def test_duality_zero_theta(capsys):
    code, rec, _ = record(capsys, ["duality", "--L", "8", "--theta", "0,0"])
    assert code == 0
    o = rec["outputs"]
    assert max(abs(o["h_bar"]), abs(o["minimize_lambda"]), abs(o["log_perron"])) <= 1e-10


def test_duality_all_open(capsys):
    code, rec, _ = record(capsys, ["duality", "--L", "8", "--p", "1", "--theta", "1,0"])
    assert code == 0
    assert abs(rec["outputs"]["log_perron"] - closed_form((1.0, 0.0))) <= 1e-10


def test_duality_random_env(capsys):
    code, rec, _ = record(capsys, ["duality", "--L", "8", "--seed", "7"])
    assert code == 0 and max(rec["outputs"]["gaps"].values()) <= 1e-6


def test_duality_gap_exit_3(capsys):
    # round-off alone separates the three routes, so an absurd tolerance must trip
    code, rec, _ = record(capsys, ["duality", "--L", "8", "--seed", "7", "--tol", "1e-300"])
    assert max(rec["outputs"]["gaps"].values()) > 1e-300
    assert code == 3 and rec["status"] == "gap"


def test_mgf_zero_theta(capsys):
    code, rec, _ = record(capsys, ["mgf", "--L", "8", "--theta", "0,0", "--n", "16,64"])
    assert code == 0
    o = rec["outputs"]
    assert abs(o["log_perron"]) <= 1e-12 and np.abs(o["finite_n"]).max() <= 1e-12


def test_mgf_with_monte_carlo(capsys):
    code, rec, _ = record(capsys, ["mgf", "--L", "8", "--n", "32", "--samples", "2000", "--seed", "4"])
    o = rec["outputs"]
    assert code == 0 and abs(o["mc_estimate"] - o["finite_n"][0]) <= 4 * o["mc_stderr"]


def test_speed_srw_near_zero(capsys):
    code, rec, _ = record(capsys, ["speed", "--L", "16", "--betas", "1", "--n", "20000", "--seeds", "3"])
    assert code == 0 and abs(rec["outputs"]["mean_speed"][0]) <= 0.05


def test_rate_all_open(capsys):
    code, rec, _ = record(capsys, ["rate", "--L", "8", "--p", "1", "--theta-steps", "11", "--x-steps", "3",
                                    "--x-max", "0.2", "--check", "2"])
    o = rec["outputs"]
    assert code == 0 and abs(o["J_at_zero"]) <= 1e-12
    for c in o["checks"]:
        assert c["gap"] <= 1e-6


def test_chemdist(capsys):
    code, rec, _ = record(capsys, ["chemdist", "--L", "16", "--pairs", "50"])
    assert code == 0 and rec["outputs"]["pairs"] == 50
    pct = rec["outputs"]["percentiles"]
    assert 1.0 <= pct["p50"] <= pct["p90"] <= pct["p99"] <= pct["max"]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("L = 8\nbogus = 1\n")
    code, _, err = record(capsys, ["duality", "--config", str(cfg)])
    assert code == 2 and "bogus" in err


def test_flag_overrides_config(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\nL = 12\nseed = 5\n")
    _, rec, _ = record(capsys, ["duality", "--config", str(cfg), "--L", "8"])
    assert rec["config"]["L"] == 8 and rec["config"]["seed"] == 5


def test_threads_env_var(monkeypatch):
    monkeypatch.setenv("PERCOLDP_THREADS", "3")
    _, rec, _ = run(["chemdist", "--L", "8", "--pairs", "5"])
    assert rec.config["threads"] == 3
    _, rec, _ = run(["chemdist", "--L", "8", "--pairs", "5", "--threads", "2"])
    assert rec.config["threads"] == 2
    monkeypatch.setenv("PERCOLDP_THREADS", "0")
    assert run(["chemdist", "--L", "8", "--pairs", "5"])[0] == 2


def test_threads_do_not_change_results():
    a = run(["speed", "--L", "16", "--n", "2000", "--seeds", "4", "--threads", "1"])[1]
    b = run(["speed", "--L", "16", "--n", "2000", "--seeds", "4", "--threads", "4"])[1]
    assert a.outputs == b.outputs


def test_records_file_deterministic(tmp_path):
    path = tmp_path / "rec.jsonl"
    for _ in range(2):
        assert main(["mgf", "--L", "8", "--n", "16", "--records", str(path)]) == 0
    lines = [json.loads(s) for s in path.read_text().splitlines()]
    assert len(lines) == 2
    for rec in lines:
        rec.pop("wall_time")
    assert lines[0] == lines[1]
    assert set(lines[0]) == {"command", "config", "outputs", "versions", "status"}


@pytest.mark.parametrize("argv", [["mgf", "--L", "x"], ["speed", "--betas", "0.5"], ["rate", "--x-max", "1"]])
def test_range_and_parse_errors(argv):
    code, rec, msg = run(argv)
    assert code == 2 and rec is None and msg.startswith("error:")
