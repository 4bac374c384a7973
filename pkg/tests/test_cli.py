from __future__ import annotations

import json
import shutil
import subprocess
import sys
from fractions import Fraction

import pytest

from gridlip.cli import run

F = Fraction


def invoke(capsys, argv):
    code = run(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_sample_emits_frozen_configuration(capsys):
    code, out, err = invoke(
        capsys, ["sample", "--d", "2", "--n", "2", "--c", "3/2", "--seed", "123"]
    )
    assert code == 0 and err == ""
    data = json.loads(out)
    assert data["c"] == "3/2"
    assert data["points"] == [[1, 1], [2, 1], [2, 2], [3, 3]]


def test_sample_missing_flags_is_validation_error(capsys):
    code, out, err = invoke(capsys, ["sample", "--d", "2"])
    assert code == 1
    assert out == ""
    payload = json.loads(err)
    assert payload["error"] == "ValidationError"
    assert "--n" in payload["message"]


def test_unknown_flag_is_validation_error(capsys):
    code, _, err = invoke(capsys, ["sample", "--bogus", "1"])
    assert code == 1
    assert json.loads(err)["error"] == "ValidationError"


def test_sample_bounds_round_trip(capsys, tmp_path):
    pts = tmp_path / "pts.json"
    code, _, _ = invoke(
        capsys,
        ["sample", "--d", "2", "--n", "2", "--c", "3/2", "--seed", "123",
         "--out", str(pts)],
    )
    assert code == 0
    code, out, _ = invoke(capsys, ["bounds", "--points", str(pts)])
    assert code == 0
    report = json.loads(out)
    assert report["lower"] <= report["upper"]
    assert report["brute"] is not None
    assert report["brute"] <= report["upper"] + 1e-15
    lo, hi = (F(report[k]) for k in ("brute_sq", "upper_sq"))
    assert lo <= hi


def test_bounds_flag_file_disagreement(capsys, tmp_path):
    pts = tmp_path / "pts.json"
    invoke(
        capsys,
        ["sample", "--d", "2", "--n", "2", "--c", "3/2", "--seed", "123",
         "--out", str(pts)],
    )
    code, _, err = invoke(capsys, ["bounds", "--points", str(pts), "--n", "4"])
    assert code == 1
    assert "disagrees" in json.loads(err)["message"]


def test_quadrant_bounds_exact_half(capsys, tmp_path):
    pts = tmp_path / "quadrant.json"
    pts.write_text(
        json.dumps({"d": 2, "n": 2, "c": "2/1",
                    "points": [[1, 1], [1, 3], [3, 1], [3, 3]]})
    )
    code, out, _ = invoke(capsys, ["bounds", "--points", str(pts)])
    assert code == 0
    report = json.loads(out)
    assert F(report["upper_sq"]) == F(1, 4)
    assert F(report["brute_sq"]) == F(1, 4)


def test_transport_reports_mass_preservation(capsys, tmp_path):
    pts = tmp_path / "pts.json"
    invoke(
        capsys,
        ["sample", "--d", "2", "--n", "4", "--c", "2", "--seed", "2",
         "--out", str(pts)],
    )
    code, out, _ = invoke(capsys, ["transport", "--points", str(pts), "--l", "1"])
    assert code == 0
    data = json.loads(out)
    assert data["mass_preserved"] is True
    assert data["level"] == 1
    for key in ("max_image_diameter", "per_cell_lipschitz", "coherence"):
        F(data["metrics"][key])  # parses exactly


def test_match_certificate_and_verify_round_trip(capsys, tmp_path):
    pts = tmp_path / "pts.json"
    invoke(
        capsys,
        ["sample", "--d", "2", "--n", "4", "--c", "2", "--seed", "1",
         "--out", str(pts)],
    )
    out_file = tmp_path / "match.json"
    code, _, _ = invoke(capsys, ["match", "--points", str(pts), "--out", str(out_file)])
    assert code == 0
    payload = json.loads(out_file.read_text())
    assert payload["outcome"] == "certificate"
    cert_file = tmp_path / "cert.json"
    cert_file.write_text(json.dumps(payload["certificate"]))
    code, out, _ = invoke(
        capsys, ["verify", "--points", str(pts), "--certificate", str(cert_file)]
    )
    assert code == 0
    assert json.loads(out)["ok"] is True


def test_verify_tampered_certificate_exits_3(capsys, tmp_path):
    pts = tmp_path / "pts.json"
    invoke(
        capsys,
        ["sample", "--d", "2", "--n", "4", "--c", "2", "--seed", "1",
         "--out", str(pts)],
    )
    out_file = tmp_path / "match.json"
    invoke(capsys, ["match", "--points", str(pts), "--out", str(out_file)])
    payload = json.loads(out_file.read_text())["certificate"]
    payload["lipschitz_sq"] = "1/16"
    cert_file = tmp_path / "cert.json"
    cert_file.write_text(json.dumps(payload))
    code, _, err = invoke(
        capsys, ["verify", "--points", str(pts), "--certificate", str(cert_file)]
    )
    assert code == 3
    assert "squared constant" in json.loads(err)["message"]


def test_match_reports_violation_for_mismatched_plan(capsys, tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    plan = tmp_path / "plan.json"
    invoke(capsys, ["sample", "--d", "2", "--n", "4", "--c", "2", "--seed", "1",
                    "--out", str(a)])
    invoke(capsys, ["sample", "--d", "2", "--n", "4", "--c", "2", "--seed", "2",
                    "--out", str(b)])
    code, _, _ = invoke(
        capsys, ["transport", "--points", str(b), "--l", "1", "--out", str(plan)]
    )
    assert code == 0
    code, out, _ = invoke(
        capsys,
        ["match", "--points", str(a), "--plan", str(plan), "--radius", "1/1000"],
    )
    assert code == 0  # a certified violation is a result, not a failure
    data = json.loads(out)
    assert data["outcome"] == "violation"
    assert data["sources"]
    assert len(data["neighborhood"]) < len(data["sources"])


def test_stats_tables(capsys):
    code, out, _ = invoke(capsys, ["stats", "--table", "entropy", "--t", "1/2"])
    assert code == 0
    assert json.loads(out)["entropy"] == 1.0

    code, out, _ = invoke(capsys, ["stats", "--table", "stirling", "--p", "12", "--q", "5"])
    assert code == 0
    row = json.loads(out)
    assert row["lower"] < 792 < row["upper"]

    code, out, _ = invoke(
        capsys,
        ["stats", "--table", "hypergeom", "--size-x", "12", "--size-y", "4",
         "--draws", "4", "--k", "0"],
    )
    assert code == 0
    assert json.loads(out)["pmf"] == "14/99"

    code, out, _ = invoke(
        capsys,
        ["stats", "--table", "gamma", "--size-x", "16", "--size-y", "4",
         "--draws", "4", "--k", "1"],
    )
    assert code == 0
    assert abs(json.loads(out)["gamma"]) <= 1e-12

    code, out, _ = invoke(
        capsys,
        ["stats", "--table", "bonnet", "--size-x", "1024", "--size-y", "256",
         "--draws", "64", "--m", "4", "--delta", "1/8", "--a", "3/4",
         "--b", "3/2", "--gamma-fit", "30"],
    )
    assert code == 0
    row = json.loads(out)
    assert row["low"] > 0 and row["high"] > 0


def test_stats_table_missing_args(capsys):
    code, _, err = invoke(capsys, ["stats", "--table", "entropy"])
    assert code == 1
    assert "--t" in json.loads(err)["message"]


def test_regime_error_exits_2(capsys):
    code, _, err = invoke(
        capsys,
        ["scaling", "--d", "2", "--n", "4", "--c-strategy", "sharper",
         "--alpha", "4.0", "--trials", "1"],
    )
    assert code == 2
    assert json.loads(err)["error"] == "RegimeError"


def test_config_file_merges_and_flags_win(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d": 2, "n": 2, "c": "3/2", "seed": 123}))
    code, merged, _ = invoke(capsys, ["--config", str(cfg), "sample"])
    assert code == 0
    _, explicit, _ = invoke(
        capsys, ["sample", "--d", "2", "--n", "2", "--c", "3/2", "--seed", "123"]
    )
    assert merged == explicit
    code, overridden, _ = invoke(capsys, ["--config", str(cfg), "sample", "--seed", "124"])
    assert code == 0
    assert overridden != explicit


def test_study_csv_identical_across_jobs(capsys):
    argv = ["deviation", "--d", "2", "--n", "8", "--trials", "6",
            "--master-seed", "5", "--format", "csv"]
    code, base, _ = invoke(capsys, argv)
    assert code == 0
    assert base.startswith(
        "n,trial,seed,c,level,min_count,max_count,"
        "deviation_low,deviation_high,lipschitz,status\n"
    )
    code, again, _ = invoke(capsys, argv + ["--jobs", "2"])
    assert code == 0
    assert again == base


def test_study_json_summary(capsys):
    code, out, _ = invoke(
        capsys,
        ["scaling", "--d", "2", "--n", "4", "--c-strategy", "fixed", "--c", "2",
         "--trials", "3", "--master-seed", "1", "--format", "json"],
    )
    assert code == 0
    summary = json.loads(out)
    assert summary["kind"] == "scaling"
    assert len(summary["rows"]) == 1


def test_report_writes_artifacts_and_figures(capsys, tmp_path):
    outdir = tmp_path / "rep"
    code, out, _ = invoke(
        capsys,
        ["report", "--study", "scaling", "--d", "2", "--n", "4,8",
         "--c-strategy", "fixed", "--c", "2,3/2", "--trials", "5",
         "--master-seed", "3", "--outdir", str(outdir)],
    )
    assert code == 0
    written = [s.split("/")[-1] for s in json.loads(out)["written"]]
    assert written[:3] == ["records.csv", "summary.json", "events.jsonl"]
    assert any(name.endswith(".png") for name in written)
    for name in written:
        path = outdir / name
        assert path.exists() and path.stat().st_size > 0
        if name.endswith(".png"):
            assert path.read_bytes()[:4] == b"\x89PNG"
    summary = json.loads((outdir / "summary.json").read_text())
    assert summary["kind"] == "scaling"
    events = [json.loads(line) for line in
              (outdir / "events.jsonl").read_text().splitlines()]
    assert len(events) == 10


def test_console_entry_point_smoke():
    exe = shutil.which("gridlip")
    if exe is None:
        pytest.skip("console script not on PATH")
    proc = subprocess.run(
        [exe, "stats", "--table", "entropy", "--t", "1/2"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["entropy"] == 1.0
    proc = subprocess.run(
        [sys.executable, "-m", "gridlip.cli", "stats", "--table", "entropy",
         "--t", "1/4"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
