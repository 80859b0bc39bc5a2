import json
import subprocess
import sys

import pytest

from perctravel.cli import run, runspec_to_argv
from perctravel.lattice import load_configuration, sample_configuration
from perctravel.montecarlo import ExperimentReport


def _run(tmp_path, argv, name="out"):
    out = tmp_path / name
    code = run(argv + [f"--out={out}"])
    return code, out.read_text() if out.exists() else None


def test_sample_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.perc", tmp_path / "b.perc"
    assert run(["sample", "--n", "4", "--p", "0.5", "--seed", "42", "--out", str(a)]) == 0
    assert run(["sample", "--n", "4", "--p", "0.5", "--seed", "42", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert load_configuration(a) == sample_configuration(4, 0.5, 42)


def test_check_e_all_closed_reports_violation(tmp_path):
    code, text = _run(tmp_path, ["check-e", "--n", "6", "--p", "0", "--seed", "1", "--k", "0"])
    assert code == 3
    rep = json.loads(text)
    assert rep["summary"]["holds"] is False
    assert rep["rows"][0]["witness_travel"] == 2
    # the recorded argv re-runs just the failing check
    recheck = rep["summary"]["recheck_argv"]
    code, again = _run(tmp_path, recheck, "again")
    assert code == 3
    assert json.loads(again)["rows"][0]["witness_travel"] == 2


def test_coverage_holds(tmp_path):
    code, text = _run(tmp_path, ["coverage", "--t", "3", "--rmax-squared", "400"])
    assert code == 0 and json.loads(text)["summary"]["holds"] is True
    code, _ = _run(tmp_path, ["coverage", "--t", "0", "--rmax-squared", "20"])
    assert code == 3


def test_csv_and_json_carry_the_same_numbers(tmp_path):
    argv = ["tail-exit", "--m", "6", "--trials", "300", "--theta-radius", "6",
            "--theta-trials", "300", "--seed", "5"]
    _, j = _run(tmp_path, argv + ["--format", "json"], "j")
    _, c = _run(tmp_path, argv + ["--format", "csv"], "c")
    assert ExperimentReport.from_json(j) == ExperimentReport.from_csv(c)


def test_thread_count_does_not_change_output(tmp_path):
    argv = ["theta", "--radii", "4,8", "--trials", "2000", "--seed", "3", "--format", "csv"]
    _, one = _run(tmp_path, argv + ["--threads", "1"], "one")
    _, four = _run(tmp_path, argv + ["--threads", "4"], "four")
    assert one == four


def test_report_parameters_reproduce_the_run(tmp_path):
    _, first = _run(tmp_path, ["walk-cube", "--n", "16", "--p", "0.6", "--seed", "4",
                               "--x=16,-16,3"], "first")
    spec = json.loads(first)["parameters"]
    assert spec["command"] == "walk-cube" and spec["x"] == [16, -16, 3]
    assert "threads" not in spec and "out" not in spec
    code, second = _run(tmp_path, runspec_to_argv(spec), "second")
    assert code == 0 and second == first


def test_config_file_with_flags_winning(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# acceptance run\np = 0.9\nradii = 3\ntrials=100\nseed = 8\n")
    _, text = _run(tmp_path, ["theta", "--config", str(cfg), "--p", "0.2"])
    params = json.loads(text)["parameters"]
    assert params["p"] == 0.2 and params["trials"] == 100 and params["radii"] == [3]


def test_walk_subcommands(tmp_path):
    perc = tmp_path / "c.perc"
    run(["sample", "--n", "32", "--p", "0.6", "--seed", "2", "--out", str(perc)])
    code, text = _run(tmp_path, ["walk-sphere", "--in", str(perc), "--x=-8,-8,-8", "--y=8,8,8",
                                 "--format", "csv"])
    rep = ExperimentReport.from_csv(text)
    assert rep.summary["trace"]["waypoints"][-1] == [8, 8, 8]
    assert code == (0 if rep.summary["reached"] else 3)
    assert rep.parameters["n"] == 32 and rep.parameters["in"] == str(perc)
    code, text = _run(tmp_path, ["theorem-path", "--n", "32", "--seed", "2", "--x=32,0,0",
                                 "--y=-32,5,5"], "tp")
    rep = json.loads(text)
    assert rep["summary"]["total_cost"] == sum(r["cost"] for r in rep["rows"])


def test_check_f_sampled(tmp_path):
    code, text = _run(tmp_path, ["check-f", "--n", "8", "--p", "0.8", "--k", "2",
                                 "--mode", "sampled", "--samples", "20"])
    rep = json.loads(text)
    assert code == (0 if rep["summary"]["holds"] else 3)
    assert rep["confidence"]["method"].startswith("wilson")


@pytest.mark.parametrize("argv", [
    ["check-e", "--n", "0", "--k", "1"],
    ["check-e", "--n", "3", "--p", "1.5", "--k", "1"],
    ["theta", "--trials", "0"],
    ["scaling", "--sizes", "32,16"],
    ["check-e", "--n", "3", "--k", "1", "--mode", "sampled"],
    ["check-e", "--n", "3", "--k", "1", "--mode", "on_demand", "--query=1,2,3"],
    ["walk-sphere", "--n", "16", "--x=0,0,0", "--y=9,0,0"],
    ["nonsense"],
    ["theta", "--trials", "many"],
])
def test_invalid_arguments_exit_2(tmp_path, argv):
    assert run(argv + [f"--out={tmp_path / 'x'}"] if argv[0] != "nonsense" else argv) == 2


def test_io_errors_exit_4(tmp_path, capsys):
    assert run(["check-e", "--in", str(tmp_path / "missing.perc"), "--k", "1"]) == 4
    bad = tmp_path / "bad.perc"
    bad.write_bytes(b"not a configuration")
    assert run(["check-e", "--in", str(bad), "--k", "1"]) == 4
    assert run(["coverage", "--rmax-squared", "5", "--out", str(tmp_path / "no" / "x")]) == 4
    assert run(["theta", "--config", str(tmp_path / "missing.cfg")]) == 4
    assert "perctravel:" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    out = tmp_path / "c.json"
    proc = subprocess.run([sys.executable, "-m", "perctravel.cli", "coverage",
                           "--rmax-squared", "10", "--out", str(out)], capture_output=True)
    assert proc.returncode == 0
    assert json.loads(out.read_text())["summary"]["holds"] is True
