import csv
import json

import pytest

from loopsoup.cli import EXIT_DOMAIN, EXIT_FAIL, EXIT_USAGE, main
from loopsoup.graph import complete_graph, save_graph


@pytest.fixture
def k4_file(tmp_path):
    path = tmp_path / "k4.json"
    save_graph(complete_graph(4, 0.15), path)
    return str(path)


def test_exact_torus_reports_three_routes(capsys):
    assert main(["exact", "--torus", "2x5", "--x", "0.1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out["log_Z"]) == {"det", "vertex", "torus"}
    assert out["max_pairwise_gap"] < 1e-12
    assert set(out["error_bounds"]) == set(out["log_Z"])


def test_exact_supercritical_is_domain_error(capsys):
    assert main(["exact", "--torus", "2x5", "--x", "0.4"]) == EXIT_DOMAIN
    assert "supercritical" in capsys.readouterr().err


def test_verify_suite_passes(k4_file, capsys):
    assert main(["verify", "--suite", "all", "--graph", k4_file, "--x", "0.15"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_oracle_partition(capsys):
    assert main(["oracle", "--torus", "2x3", "--x", "0.1", "--lmax", "16"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["gap"] <= out["tail_bound"]


def test_config_file_overridden_by_flags(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("torus: 2x4\nx: 0.1\n")
    assert main(["exact", "--config", str(cfg)]) == 0
    low = json.loads(capsys.readouterr().out)["log_Z"]["det"]
    assert main(["exact", "--config", str(cfg), "--x", "0.2"]) == 0
    high = json.loads(capsys.readouterr().out)["log_Z"]["det"]
    assert high > low


def test_sample_writes_jsonl_and_gibbs_reads_it(k4_file, tmp_path, capsys):
    out = tmp_path / "fields.jsonl"
    assert main(["sample", "--graph", k4_file, "--lmax", "20", "--reps", "20000", "--seed", "3",
                 "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 20000 and len(json.loads(rows[0])) == 6
    assert main(["gibbs", "--graph", k4_file, "--check", "fit", "--samples", str(out)]) == 0


def test_sample_is_reproducible(k4_file, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for path in (a, b):
        main(["sample", "--graph", k4_file, "--reps", "3000", "--seed", "5", "--out", str(path)])
    assert a.read_bytes() == b.read_bytes()


def test_scan_writes_csv(tmp_path, capsys):
    out = tmp_path / "scan.csv"
    assert main(["scan", "--d", "3", "--quantity", "free-energy-deriv", "--order", "2", "--points", "8",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 8
    assert set(rows[0]) == {"x", "value", "deriv_order", "deriv_value", "quad_error"}


def test_observables_csv(capsys):
    assert main(["observables", "--torus", "2x4", "--x", "0.1", "--pair", "e0,e5"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    kinds = [r["quantity"] for r in rows]
    assert kinds[:2] == ["one-point", "two-point"]
    assert "error_bound" in rows[0]


def test_spin_rejects_misplaced_line(capsys):
    assert main(["spin", "--patch", "20x20", "--line", "x=10", "--reps", "10"]) == EXIT_USAGE


def test_bad_torus_string(capsys):
    assert main(["exact", "--torus", "two-by-five", "--x", "0.1"]) == EXIT_USAGE


def test_oracle_failure_exit_code(capsys, monkeypatch):
    import loopsoup.cli as cli

    monkeypatch.setattr(cli.loops, "tail_bound", lambda g, lmax: -1.0)
    assert main(["oracle", "--graph", "K4", "--x", "0.15", "--lmax", "6"]) == EXIT_FAIL
