import csv
import io
import json
import subprocess
import sys

import pytest

from mechlab import dumps_instance, paper_instance
from mechlab.cli import CSV_COLUMNS, main


def run(*argv, stdin=None, monkeypatch=None):
    out, err = io.StringIO(), io.StringIO()
    if stdin is not None:
        monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def test_solve_catalog_json():
    code, out, _ = run("solve", "--catalog", "figure1", "--format", "json")
    data = json.loads(out)
    assert code == 0
    assert data["opt"]["value"] == "70" and data["opt"]["items"] == [0, 1, 2, 4]
    assert data["fractional_greedy"]["x"]["4"] == "2/3"


def test_run_human_shows_decimals():
    code, out, _ = run("run", "--mechanism", "greedy", "--catalog", "figure1")
    assert code == 0
    assert "ratio 69/70 (~0.985714)" in out


def test_run_randomized_fit_json_and_samples():
    code, out, _ = run("run", "--mechanism", "randomized-fit", "--catalog", "fig4_left",
                       "--format", "json", "--sample", "20", "--seed", "5")
    data = json.loads(out)
    assert code == 0 and data["expected_value"] == "8" and data["opt_value"] == "10"
    assert [(b["probability"], b["value"]) for b in data["branches"]] == [("2/3", "9"), ("1/3", "6")]
    assert len(data["samples"]) == 20 and set(data["samples"]) <= {"fit_two", "large_fit"}
    again = json.loads(run("run", "--mechanism", "randomized-fit", "--catalog", "fig4_left",
                           "--format", "json", "--sample", "20", "--seed", "5")[1])
    assert again["samples"] == data["samples"]


def test_audit_csv_columns_and_exit_code():
    code, out, _ = run("audit", "--mechanism", "naive_greedy,greedy", "--catalog", "figure1",
                       "--mode", "full-subsets", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[0] == ("instance_id,mechanism,beta,sp_mode,sp_semantics,violations,worst_gain,"
                       "mech_value,opt_value,ratio,degenerate_flag").split(",")
    assert rows[1][:7] == ["figure1", "naive_greedy", "", "full_subsets", "universal", "2", "8"]
    assert rows[2][5] == "0"
    assert code == 1


def test_audit_clean_instance_exits_zero():
    code, out, _ = run("audit", "--mechanism", "greedy", "--catalog", "figure1", "--format", "json")
    report = json.loads(out)["reports"][0]
    assert code == 0 and report["violations"] == [] and report["ratio"] == "69/70"


def test_audit_json_mirrors_report():
    code, out, _ = run("audit", "--mechanism", "naive_greedy", "--catalog", "figure1",
                       "--semantics", "expectation", "--format", "json")
    r = json.loads(out)["reports"][0]
    assert r["sp_semantics"] == "expectation"
    assert {v["gain"] for v in r["violations"]} == {"3", "8"}
    assert r["degenerate"] is True and r["degenerate_violation_count"] == 2


def test_file_and_stdin_sources(tmp_path, monkeypatch):
    path = tmp_path / "fig.json"
    path.write_text(dumps_instance(paper_instance("fig4_left")))
    code, out, _ = run("run", "--mechanism", "fit_two:2/3", "--file", str(path), "--format", "csv")
    assert code == 0 and "9" in out
    code, out, _ = run("solve", "--file", "-", stdin=path.read_text(), monkeypatch=monkeypatch)
    assert code == 0 and "opt value 10" in out


def test_generator_source():
    code, out, _ = run("solve", "--kind", "unit-density-random", "--index", "3", "--seed", "2")
    assert code == 0 and out.startswith("unit_density_random/2/3")


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "--catalog", "figure1", "--kind", "tie_heavy", "--index", "0"],
    ["solve", "--kind", "tie_heavy"],
    ["solve", "--catalog", "nowhere"],
    ["solve", "--file", "/nonexistent/instance.json"],
    ["run", "--mechanism", "auction", "--catalog", "figure1"],
    ["sweep", "--mechanisms", "greedy", "--count", "-1"],
    ["probe", "--family", "det", "--mechanism", "fit_two:2/3", "--epsilon", "5"],
])
def test_input_errors_exit_2(argv):
    code, _, err = run(*argv)
    assert code == 2 and err.startswith("mechlab:")


def test_bad_json_exit_2(monkeypatch):
    code, _, err = run("solve", "--file", "-", stdin='{"capacity": ', monkeypatch=monkeypatch)
    assert code == 2 and "line 1" in err


def test_size_guard_exit_3(monkeypatch):
    monkeypatch.setenv("MECHLAB_MAX_ITEMS", "3")
    assert run("solve", "--catalog", "figure1")[0] == 3


def test_not_applicable_exit_4():
    # the mechanism is checked before any source is required
    assert run("run", "--mechanism", "fit_two", "--beta", "3/4")[0] == 4
    assert run("run", "--mechanism", "large_fit", "--catalog", "figure1")[0] == 4


def test_sweep_reports_errors_on_stderr():
    code, out, err = run("sweep", "--kind", "general-random", "--count", "3", "--mechanisms", "large_fit")
    assert code == 1
    assert err.count("NotApplicableError") == 3


def test_sweep_acceptance_command():
    code, out, _ = run("sweep", "--kind", "unit-density-random", "--count", "200", "--seed", "7",
                       "--mechanisms", "fit_two:987/1597,large_fit,randomized_fit", "--jobs", "1")
    assert code == 0
    assert out.count("200 instances, 0 errors, 0 violations") == 3


def test_probe_formats():
    code, out, _ = run("probe", "--family", "det", "--k", "16", "--epsilon", "1/1000",
                       "--mechanism", "fit_two:987/1597", "--format", "json")
    data = json.loads(out)
    assert code == 0 and data["min_ratio"] == "1597000/2583013" and data["sp_linkage_ok"] is True
    code, out, _ = run("probe", "--family", "rand", "--mechanism", "randomized_fit", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and rows[0]["ratio_E"] == "1597/1974" and rows[0]["sp_linkage_ok"] == "true"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mechlab", "solve", "--catalog", "intro_funding"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "opt value 1" in proc.stdout
