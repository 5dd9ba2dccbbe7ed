import json
import math

import numpy as np
import pytest

from conftest import SHIPPED, run, scenario_path
from gridsurge.cli import run_cli, shipped_scenarios
from gridsurge.engine import SimResult, compare_runs, summarize
from gridsurge.errors import EmptySeries
from gridsurge.report import (
    IoError,
    atomic_write,
    csv_text,
    read_csv,
    summary_dict,
    svg_text,
    write_csv,
)


def toy(n=3, freq=60.0):
    time = np.round(np.arange(n) * 0.001, 9)
    return SimResult(
        scenario="toy",
        dt=0.001,
        duration=(n - 1) * 0.001,
        nominal_hz=60.0,
        time=time,
        frequency_hz=np.full(n, freq),
        bus_voltage={"B1": np.ones(n)},
        source_p_kw={"g": np.full(n, 500.0)},
        source_q_kvar={"g": np.zeros(n)},
        genset_loading=np.full(n, 0.5),
        events=[],
    )


def test_toy_csv_has_header_plus_rows():
    text = csv_text(toy(3))
    lines = text.splitlines()
    assert len(lines) == 4
    assert lines[0] == "time_s,freq_hz,v_B1_pu,p_g_kw,q_g_kvar,genset_loading_pu"
    assert lines[1] == "0.0,60.0,1.0,500.0,0.0,0.5"


def test_constant_run_json_nadir():
    r = toy(5)
    doc = summary_dict(summarize(r), r)
    assert doc["nadir_hz"] == 60.0
    assert doc["blackout"] is False
    json.dumps(doc)


def test_csv_round_trip_is_exact(tmp_path):
    result = run("rtds-pq")
    back = read_csv(write_csv(result, tmp_path / "pq.csv"))
    assert compare_runs(result, back).identical


def test_empty_series_not_written():
    with pytest.raises(EmptySeries):
        csv_text(toy(0))


def test_svg_overlay_colours():
    svg = svg_text(run("rtds-f2"), baseline=run("rtds-f2-nodelay"))
    assert svg.lstrip().startswith("<?xml")
    assert "#000000" in svg and "#ff0000" in svg
    for label in ("frequency (Hz)", "|V| (pu)", "P (kW)", "Q (kvar)"):
        assert label in svg


def test_svg_is_deterministic():
    assert svg_text(toy(4)) == svg_text(toy(4))


def test_atomic_write_leaves_no_temp(tmp_path):
    atomic_write(tmp_path / "a.txt", "hello")
    atomic_write(tmp_path / "a.txt", "again")
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
    assert (tmp_path / "a.txt").read_text() == "again"


def test_atomic_write_reports_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        atomic_write(blocker / "sub" / "out.txt", "data")


def test_run_blackout_exit_code(tmp_path, capsys):
    code = run_cli(["run", str(scenario_path("opal-dos-15")), "--emit", "json", "--out", str(tmp_path)])
    assert code == 2
    doc = json.loads((tmp_path / "opal-dos-15.json").read_text())
    assert doc["blackout"] is True and doc["status"] == "blackout"
    assert doc["genset_overload_s"] > 10.0
    assert not (tmp_path / "opal-dos-15.csv").exists()


@pytest.mark.parametrize("name", SHIPPED)
def test_exit_code_contract(name, tmp_path):
    code = run_cli(["run", name, "--emit", "csv", "--out", str(tmp_path)])
    assert code == (2 if run(name).status == "blackout" else 0)
    rows = (tmp_path / f"{name}.csv").read_text().splitlines()
    if run(name).status == "completed":
        scn_steps = round(run(name).duration / run(name).dt)
        assert len(rows) == 1 + math.floor(scn_steps) + 1


def test_error_exit_code(tmp_path, capsys):
    assert run_cli(["run", str(tmp_path / "missing.scn")]) == 1
    assert capsys.readouterr().err.startswith("ERROR:IoError:")
    assert run_cli(["run", "opal-dos-0", "--set", "loads.critical.sheddable=true", "--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("ERROR:ValidationError:loads.critical.sheddable")
    assert run_cli(["run", "opal-dos-0", "--emit", "pdf"]) == 1
    assert capsys.readouterr().err.startswith("ERROR:UsageError:")
    assert run_cli(["frobnicate"]) == 1


def test_parse_error_reported(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("[scenario\nname = 1\n")
    assert run_cli(["validate", str(bad)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("ERROR:ParseError:") and "line 1" in err


def test_validate_all(capsys):
    assert run_cli(["validate", *[str(scenario_path(n)) for n in SHIPPED]]) == 0
    assert capsys.readouterr().out.count(": ok") == len(SHIPPED)


def test_list():
    assert shipped_scenarios() == SHIPPED


def test_batch_writes_table(tmp_path):
    names = ["opal-dos-0", "opal-dos-2", "opal-dos-5", "opal-dos-15"]
    code = run_cli(["batch", *names, "--emit", "csv,svg", "--out", str(tmp_path), "--jobs", "2"])
    assert code == 2
    for n in names:
        assert (tmp_path / f"{n}.csv").exists() and (tmp_path / f"{n}.svg").exists()
    rows = (tmp_path / "nadir_vs_delay.csv").read_text().splitlines()
    assert rows[0] == "scenario,delay_s,nadir_hz,nadir_time_s,blackout,status"
    table = [r.split(",") for r in rows[1:]]
    assert [r[0] for r in table] == names
    assert [float(r[1]) for r in table] == [0.0, 2.0, 5.0, 15.0]
    nadirs = [float(r[2]) for r in table]
    assert nadirs == sorted(nadirs, reverse=True)
    assert [r[4] for r in table] == ["false", "false", "false", "true"]
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GRIDSURGE_OUT", str(tmp_path / "env"))
    assert run_cli(["run", "rtds-f1-nodelay", "--emit", "json"]) == 0
    assert (tmp_path / "env" / "rtds-f1-nodelay.json").exists()
    assert run_cli(["run", "rtds-f1-nodelay", "--emit", "json", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "rtds-f1-nodelay.json").exists()


def test_frametrace_and_baseline_svg(tmp_path):
    code = run_cli(["run", "rtds-f2", "--emit", "svg,frametrace", "--baseline", "rtds-f2-nodelay",
                    "--out", str(tmp_path)])
    assert code == 0
    svg = (tmp_path / "rtds-f2.svg").read_text()
    assert "#ff0000" in svg
    lines = (tmp_path / "rtds-f2.frames.txt").read_text().splitlines()
    assert lines and all(len(ln.split()) == 6 for ln in lines)


def test_diff_scenarios_and_csvs(tmp_path, capsys):
    assert run_cli(["diff", "rtds-f1-nodelay", "rtds-f1", "--emit", "json", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "first divergence: 1.105000 s" in out
    doc = json.loads((tmp_path / "diff_rtds-f1-nodelay_vs_rtds-f1.json").read_text())
    assert doc["first_divergence_s"] == pytest.approx(1.105)
    run_cli(["run", "rtds-pq", "--emit", "csv", "--out", str(tmp_path)])
    csv = str(tmp_path / "rtds-pq.csv")
    assert run_cli(["diff", csv, csv]) == 0
    assert "first divergence: none" in capsys.readouterr().out


def test_dt_override(tmp_path):
    assert run_cli(["run", "rtds-f1-nodelay", "--dt", "0.002", "--emit", "csv", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "rtds-f1-nodelay.csv").read_text().splitlines()
    assert len(rows) == 1 + 5000 + 1
    assert run_cli(["run", "rtds-f1-nodelay", "--dt", "-1"]) == 1


def test_csv_bytes_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_cli(["run", "rtds-pq", "--emit", "csv", "--out", str(a)])
    run_cli(["run", "rtds-pq", "--emit", "csv", "--out", str(b)])
    assert (a / "rtds-pq.csv").read_bytes() == (b / "rtds-pq.csv").read_bytes()
