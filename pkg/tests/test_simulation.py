import logging

import numpy as np
import pytest

from leachsim.config import config_from_mapping
from leachsim.errors import PicardDivergenceError, SimulationError
from leachsim.free_boundary import run_simulation
from leachsim.io import read_series, read_snapshot, write_table


@pytest.fixture(scope="module")
def table_path(table16, tmp_path_factory):
    return write_table(tmp_path_factory.mktemp("table") / "table.csv", table16)


def make_config(table_path, **sections):
    data = {"output": {"table": str(table_path)}}
    for key, value in sections.items():
        section, name = key.split("__")
        data.setdefault(section, {})[name] = str(value)
    return config_from_mapping(data)


def test_zero_final_time(table_path, tmp_path):
    cfg = make_config(table_path, time__T=0, grid__n=4)
    res = run_simulation(cfg, tmp_path / "out")
    assert len(res.radius) == 1 and len(res.snapshots) == 1
    snap = read_snapshot(res.snapshots[0][2])
    assert np.array_equal(snap["r"], cfg.r0_field())
    assert np.array_equal(snap["c"], cfg.reservoir().c0_field())
    assert not res.picard_reports


@pytest.fixture(scope="module")
def desk_run(table_path, tmp_path_factory):
    cfg = make_config(table_path, fields__r0_profile="linear_x1", fields__r0_lo=0.2, fields__r0_hi=0.4)
    return cfg, run_simulation(cfg, tmp_path_factory.mktemp("desk") / "out")


def test_desk_run_monotone(desk_run):
    cfg, res = desk_run
    assert cfg.n == 16 and cfg.steps == 20 and cfg.theta == 0.1
    drop = res.radius.values[:-1] - res.radius.values[1:]
    assert drop.min() >= 0 and drop.max() <= cfg.theta * cfg.dt * (1 + 1e-12)
    for key in ("porosity_mean", "dissolved_volume"):
        assert np.all(np.diff(res.series[key]) >= 0)
    assert res.series["dissolved_volume"][-1] > 0
    assert res.concentration.min() >= 0 and res.concentration.max() <= 1


def test_outputs_written(desk_run):
    cfg, res = desk_run
    out = res.out_dir
    series = read_series(out / "series.csv")
    assert np.array_equal(series["dissolved_volume"], res.series["dissolved_volume"])
    picard = read_series(out / "picard.csv")
    assert picard["slab"].size == sum(r.iterations for r in res.picard_reports)
    assert (out / "config.ini").read_text() == cfg.to_ini()
    assert [s[0] for s in res.snapshots] == [0, 20]
    assert not (out / "extensions.txt").exists()


def test_rerun_is_bit_identical(desk_run, tmp_path):
    cfg, res = desk_run
    again = run_simulation(cfg, tmp_path / "again")
    for f in sorted(res.out_dir.iterdir()):
        assert (tmp_path / "again" / f.name).read_bytes() == f.read_bytes(), f.name


def test_picard_tolerance_sensitivity(table_path, tmp_path):
    tol = 1e-8
    runs = [
        run_simulation(make_config(table_path, grid__n=8, physics__theta=0.5, solver__picard_tol=t), tmp_path / str(i))
        for i, t in enumerate((tol, 2 * tol))
    ]
    it = [sum(r.iterations for r in res.picard_reports) for res in runs]
    assert it[1] <= it[0]
    assert np.abs(runs[0].radius.final - runs[1].radius.final).max() <= 2 * 2 * tol


def test_failure_is_tagged(table_path, tmp_path):
    cfg = make_config(table_path, grid__n=4, physics__theta=2.0, time__T=0.2, time__dt=0.05,
                      solver__picard_max_iter=1)
    with pytest.raises(SimulationError) as info:
        run_simulation(cfg, tmp_path / "out")
    assert info.value.stage == "picard" and info.value.slab == 0
    assert isinstance(info.value.cause, PicardDivergenceError)


def test_head_extension_flagged(table_path, tmp_path, caplog):
    cfg = make_config(table_path, grid__n=4, time__T=0.1, head_bc__enabled="true", head_bc__S1=1.0)
    with caplog.at_level(logging.WARNING):
        res = run_simulation(cfg, tmp_path / "out")
    assert res.extensions
    assert (tmp_path / "out" / "extensions.txt").read_text().strip() == res.extensions[0]
    snap = read_snapshot(res.snapshots[-1][2])
    assert np.abs(snap["phi"]).max() > 0.1


def test_auto_tabulation_is_cached(tmp_path, caplog):
    cfg = config_from_mapping({"grid": {"n": "4"}, "time": {"T": "0.1"}})
    first = run_simulation(cfg, tmp_path / "out")
    assert first.table_path == tmp_path / "out.table.csv" and first.table_path.exists()
    with caplog.at_level(logging.INFO, logger="leachsim.free_boundary"):
        second = run_simulation(cfg, tmp_path / "out")
    assert any("reusing cached table" in r.message for r in caplog.records)
    assert second.table == first.table
