import io
from pathlib import Path

import pytest

from tfrc_sched import Algorithm, SimConfig
from tfrc_sched.cli import main
from tfrc_sched.fileio import (
    CSV_HEADER,
    MalformedValue,
    UnknownKey,
    dump_config,
    emit_csv,
    parse_config,
    read_instance,
    write_instance,
)
from tfrc_sched.harness import Row, SweepTable
from tfrc_sched.model import ConfigError

ORACLE = Path(__file__).parent / "data" / "oracle.txt"


def test_parse_empty_is_defaults():
    cfg, scenario = parse_config("")
    assert cfg == SimConfig() and scenario == {}


def test_parse_override_and_comments():
    cfg, _ = parse_config("# a comment\nmean_snr_db=15   # trailing\n\n")
    assert cfg == SimConfig(mean_snr_db=15.0)
    cfg, sc = parse_config("q_max_bits=30Mbit\nalgorithm=L-MaxWeight\ntfrc_enabled=off\n"
                           "scenario_id=fig2\nruns=5\nsweep_points=1,2")
    assert cfg.q_max_bits == 30_000_000 and cfg.algorithm is Algorithm.LMAXWEIGHT
    assert not cfg.tfrc_enabled
    assert sc == {"scenario_id": "fig2", "runs": 5, "sweep_points": [1.0, 2.0]}


def test_parse_errors():
    with pytest.raises(UnknownKey, match=r"unknown_key\(bogus\)"):
        parse_config("bogus=1")
    with pytest.raises(MalformedValue) as err:
        parse_config("num_users=5\nnum_channels=abc")
    assert err.value.line == 2
    with pytest.raises(MalformedValue):
        parse_config("just text")
    with pytest.raises(ConfigError):
        parse_config("q_min_bits=30Mbit")


def test_dump_round_trip():
    cfg = SimConfig(mean_snr_db=12.5, algorithm=Algorithm.DSF_NP, tfrc_enabled=False, seed=7)
    assert parse_config(dump_config(cfg))[0] == cfg
    assert parse_config(dump_config(SimConfig()))[0] == SimConfig()


def test_csv_formats():
    assert emit_csv(SweepTable(), None) == (CSV_HEADER + "\n").encode()
    table = SweepTable([Row("fig1", "lambda", 0.01, Algorithm.DSFRB, True, 100, 5, 0.5, 0.02, 20)])
    data = emit_csv(table, None)
    assert data == (CSV_HEADER + "\nfig1,lambda,0.01,DSFRB,on,100,5,0.5,0.02,,,20\n").encode()
    buf = io.BytesIO()
    emit_csv(table, buf)
    assert buf.getvalue() == data == emit_csv(table, None)


def test_csv_six_significant_digits(tmp_path):
    table = SweepTable([Row("s", "lambda", 0.1, Algorithm.EDF, False, 1234.56789, 0.000123456789,
                            float("nan"), float("nan"), 2, 0.987654321, 1.0)])
    out = tmp_path / "t.csv"
    emit_csv(table, out)
    assert out.read_text().splitlines()[1] == "s,lambda,0.1,EDF,off,1234.57,0.000123457,nan,nan,0.987654,1,2"


def test_instance_round_trip():
    inst = read_instance(ORACLE.read_text())
    again = read_instance(write_instance(inst))
    assert (again.rates == inst.rates).all() and again.requests == inst.requests
    assert again.expected_block_rate == inst.expected_block_rate


def test_validate_exit_codes(tmp_path, capsys):
    empty = tmp_path / "empty.cfg"
    empty.write_text("")
    assert main(["validate", "--config", str(empty)]) == 0
    assert capsys.readouterr().out.strip() == "ok"
    bad = tmp_path / "bad.cfg"
    bad.write_text("num_channels=0\n")
    assert main(["validate", "--config", str(bad)]) == 2
    assert "num_channels_zero" in capsys.readouterr().err
    unknown = tmp_path / "unknown.cfg"
    unknown.write_text("bogus=1\n")
    assert main(["validate", "--config", str(unknown)]) == 2
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["validate"]) == 1


def test_solve_oracle(capsys):
    assert main(["solve", "--instance", str(ORACLE), "--algorithm", "DSFRB"]) == 0
    out = capsys.readouterr().out
    assert "reward 60\n" in out and "complete_ratio 0.5\n" in out
    assert "assign channel=0 block=0 request=2" in out
    assert main(["solve", "--instance", str(ORACLE), "--algorithm", "SF_OP", "--lp", "simplex"]) == 0
    assert "reward 50\n" in capsys.readouterr().out
    assert main(["solve", "--instance", str(ORACLE), "--algorithm", "EDF"]) == 1


def test_run_custom_scenario(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("scenario_id=tiny\nsweep_param=lambda\nsweep_points=0.02,0.04\n"
                   "algorithms=EDF,MSR\ntfrc_modes=on\nruns=2\narrival_window_slots=100\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--config", str(cfg), "--desk", "--seed", "3", "--out", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--desk", "--seed", "3", "--workers", "2",
                 "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == CSV_HEADER and len(lines) == 1 + 4


def test_run_requires_scenario(tmp_path):
    assert main(["run", "--out", str(tmp_path / "x.csv")]) == 1
