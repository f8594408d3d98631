import json

import pytest

from leachsim.cli import main
from leachsim.io import read_table, write_table


def test_cell_prints_record(capsys):
    assert main(["cell", "--r", "0.25", "--n", "16"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["r"] == 0.25 and 0 < rec["d"] < rec["m"] and rec["k"] > 0


def test_cell_invalid_radius(capsys):
    assert main(["cell", "--r", "0.6", "--n", "16"]) == 1
    assert "error" in capsys.readouterr().err


def test_run_invalid_config_aggregates(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[physics]\ntheta = -1\n[time]\nT = 1\ndt = 0.5\nT_slab = 0.25\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "physics.theta" in err and "time.dt" in err and "time.T_slab" in err


def test_unknown_subcommand():
    assert main(["frobnicate"]) == 1


def test_run_with_table_and_numerical_failure(table16, tmp_path, capsys):
    table = write_table(tmp_path / "t.csv", table16)
    good = tmp_path / "good.ini"
    good.write_text("[grid]\nn = 4\n[time]\nT = 0.1\n")
    assert main(["run", "--config", str(good), "--out", str(tmp_path / "a"), "--table", str(table)]) == 0
    assert (tmp_path / "a" / "series.csv").exists()
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nn = 4\n[physics]\ntheta = 2\n[time]\nT = 0.2\n[solver]\npicard_max_iter = 1\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "b"), "--table", str(table)]) == 2
    assert "stage=picard" in capsys.readouterr().err


def test_tabulate(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[bounds]\nr_min = 0.1\nr_max = 0.4\n")
    out = tmp_path / "t.csv"
    assert main(["tabulate", "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 0
    t = read_table(out)
    assert t.r_min == 0.1 and t.r_max == 0.4 and t.cell_resolution == 16


def test_check_passes(capsys):
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 7
