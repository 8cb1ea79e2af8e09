import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from ncodid.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main

PIPELINE = [
    ["simulate", "--seed", "3", "--n-units", "1200"],
    ["validate", "--input", "{d}/data.csv", "--schema", "{d}/schema.json"],
    ["match", "--input", "{d}/data.csv", "--schema", "{d}/schema.json"],
    ["estimate", "--input", "{d}/data.csv", "--schema", "{d}/schema.json", "--bootstrap", "300", "--seed", "1"],
    ["estimate", "--input", "{d}/data.csv", "--schema", "{d}/schema.json", "--bootstrap", "300", "--seed", "1",
     "--estimator", "did", "--nco-years", "1"],
    ["estimate", "--input", "{d}/data.csv", "--schema", "{d}/schema.json", "--bootstrap", "300", "--seed", "1",
     "--estimator", "did-adj", "--nco-years", "1"],
    ["estimate", "--input", "{d}/data.csv", "--schema", "{d}/schema.json", "--bootstrap", "300", "--seed", "1",
     "--unmatched"],
    ["stratify", "--input", "{d}/data.csv", "--schema", "{d}/schema.json", "--bootstrap", "200", "--seed", "1",
     "--estimator", "did", "--nco-years", "1", "--stratify-by", "x1", "--bins=-0.5,0.5"],
    ["qq", "--input", "{d}/data.csv", "--schema", "{d}/schema.json", "--bootstrap", "200", "--seed", "1",
     "--nco-years", "2"],
    ["report", "--input", "{d}/data.csv"],
]


def run_pipeline(d: Path, capsys=None):
    for step in PIPELINE:
        argv = [a.format(d=d) for a in step] + ["--output-dir", str(d)]
        code = main(argv)
        assert code == EXIT_OK, (step, capsys.readouterr().err if capsys else "")


def artifacts(d: Path) -> dict[str, bytes]:
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    run_pipeline(d)
    return d


def test_end_to_end_covers_truth(run_dir):
    truth = json.loads((run_dir / "truth.json").read_text())
    did = json.loads((run_dir / "estimates" / "n1_q0.5.json").read_text())
    rows = {e["point"]["estimator"]: e for e in did["estimates"]}
    assert set(rows) == {"unadjusted", "did_nco", "did_adjusted"}
    est = rows["did_nco"]
    assert est["ci_low"] <= truth["true_atet_sample"] <= est["ci_high"]
    assert truth["note"].startswith("DGP parameter values are artifact choices")


def test_artifacts_present(run_dir):
    names = set(artifacts(run_dir))
    for want in ("data.csv", "schema.json", "truth.json", "validation.json", "matched.json", "matched.csv",
                 "balance.json", "balance.csv", "balance.txt", "estimates/unadj.json", "estimates/n1_q0.5.json",
                 "estimates/unmatched.json", "qq.json", "qq_curve.csv", "report.json", "estimates.csv"):
        assert want in names
    assert any(n.startswith("strata/x1__") for n in names)


def test_one_plot_per_panel(run_dir):
    panels = {p.stem for p in (run_dir / "estimates").glob("*.json")}
    plots = {p.stem for p in (run_dir / "plots").glob("*.svg")}
    assert panels <= plots
    svg = (run_dir / "plots" / "n1_q0.5.svg").read_text()
    assert svg.count('class="row"') == 3 and 'class="zero"' in svg


def test_report_reconstructs_run(run_dir):
    report = json.loads((run_dir / "report.json").read_text())
    assert report["input"]["digest"].startswith("sha256:")
    run = report["estimates"]["n1_q0.5"]["runs"][0]
    assert run["bootstrap"]["seed"] == 1 and run["bootstrap"]["replicates"] == 300
    assert report["estimates"]["n1_q0.5"]["nco"]["window_years"] == 1
    assert "diagnostics" in report and report["matched"]["n_pairs"] > 0


def test_no_absolute_paths(run_dir):
    for name, blob in artifacts(run_dir).items():
        if name.endswith((".json", ".csv", ".svg", ".txt")):
            assert str(run_dir).encode() not in blob, name


def test_byte_identical_rerun(run_dir, tmp_path):
    run_pipeline(tmp_path)
    assert artifacts(tmp_path) == artifacts(run_dir)


def test_malformed_csv_names_row_and_column(run_dir, tmp_path, capsys):
    lines = (run_dir / "data.csv").read_text().splitlines()
    header = lines[0].split(",")
    col = header.index("x1")
    row = lines[5].split(",")
    row[col] = "oops"
    lines[5] = ",".join(row)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    code = main(["estimate", "--input", str(bad), "--schema", str(run_dir / "schema.json"), "--seed", "1",
                 "--output-dir", str(tmp_path)])
    assert code == EXIT_VALIDATION
    err = json.loads(capsys.readouterr().err)
    first = err["detail"]["violations"][0]
    assert (first["record_id"], first["column"], first["value"]) == (row[0], "x1", "oops")


def test_missing_seed_is_validation_error(run_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("NCODID_SEED", raising=False)
    argv = ["estimate", "--input", str(run_dir / "data.csv"), "--schema", str(run_dir / "schema.json"),
            "--matched", str(run_dir / "matched.json"), "--bootstrap", "100", "--output-dir", str(tmp_path)]
    assert main(argv) == EXIT_VALIDATION
    assert "seed" in capsys.readouterr().err
    monkeypatch.setenv("NCODID_SEED", "1")
    assert main(argv) == EXIT_OK
    est = json.loads((tmp_path / "estimates" / "unadj.json").read_text())
    assert est["estimates"][0]["seed"] == 1


def test_nco_estimator_needs_window(run_dir, tmp_path):
    argv = ["estimate", "--input", str(run_dir / "data.csv"), "--schema", str(run_dir / "schema.json"),
            "--matched", str(run_dir / "matched.json"), "--estimator", "did", "--seed", "1",
            "--output-dir", str(tmp_path)]
    assert main(argv) == EXIT_VALIDATION


def test_missing_input_is_runtime_or_validation(tmp_path):
    code = main(["validate", "--input", str(tmp_path / "nope.csv"), "--output-dir", str(tmp_path)])
    assert code in (EXIT_VALIDATION, EXIT_RUNTIME)


def test_console_entry_point(tmp_path):
    env = dict(os.environ, NCODID_SEED="2")
    out = subprocess.run([sys.executable, "-m", "ncodid.cli", "simulate", "--n-units", "50",
                          "--output-dir", str(tmp_path)], capture_output=True, text=True, env=env)
    assert out.returncode == 0, out.stderr
    assert json.loads((tmp_path / "truth.json").read_text())["config"]["seed"] == 2
