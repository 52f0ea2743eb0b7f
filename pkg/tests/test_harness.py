import io
import json
from fractions import Fraction

import pytest

from mvba.cli import main, read_config_file
from mvba.errors import ConfigError
from mvba.harness import (
    CSV_COLUMNS,
    AggregateReport,
    ExperimentError,
    ExperimentSpec,
    emit_report,
    run_experiment,
    run_trial,
    write_report,
)
from mvba.protocol import ProtocolConfig

BASE = ProtocolConfig(n=4, t=1, l=64, D=16, k=4)


def test_honest_hundred_trials():
    (row,) = run_experiment(ExperimentSpec(BASE, trials=100)).rows
    assert row["p_correct"] == 1.0
    assert row["ext_steps_max"] == 0
    assert row["ext_steps_histogram"] == {"0": 100}
    assert row["trials"] == 100
    assert row["bits_data"] == 100 * 3 * 64


def test_sweep_alpha_model_decreasing():
    spec = ExperimentSpec(BASE, beta=Fraction(1, 2),
                          sweep=[("l", [2 ** 10, 2 ** 12, 2 ** 14, 2 ** 16, 2 ** 18])])
    rows = run_experiment(spec).rows
    assert len(rows) == 5
    assert [r["l"] for r in rows] == [2 ** e for e in range(10, 19, 2)]
    alphas = [r["alpha_model"] for r in rows]
    assert all(a > b for a, b in zip(alphas, alphas[1:]))


def test_single_row_without_sweep():
    assert len(run_experiment(ExperimentSpec(BASE)).rows) == 1


def test_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec(BASE, trials=0)
    with pytest.raises(ConfigError):
        ExperimentSpec(BASE, sweep=[("colour", [1])])
    with pytest.raises(ConfigError):
        ExperimentSpec(BASE, sweep=[("l", [])])


def test_json_roundtrip(tmp_path):
    report = run_experiment(ExperimentSpec(BASE, adversary="digest_liar", trials=3))
    path = emit_report(report, tmp_path / "r.json")
    back = AggregateReport.from_json(json.loads(path.read_text()))
    assert back == report
    assert back.schema_version == 1


def test_csv_columns_frozen():
    buf = io.StringIO()
    write_report(run_experiment(ExperimentSpec(BASE, trials=2)), buf, "csv")
    lines = buf.getvalue().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) == 2
    with pytest.raises(ConfigError):
        write_report(AggregateReport([]), buf, "xml")


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_report(AggregateReport([]), tmp_path / "missing" / "r.json")


def test_failure_reports_seed():
    spec = ExperimentSpec(BASE, adversary="fuzz", adversary_params={"p": "bad"}, trials=2)
    with pytest.raises(ExperimentError) as info:
        run_experiment(spec)
    assert info.value.seed == 0
    assert "seed 0" in str(info.value)


def test_trial_replay_is_exact():
    spec = ExperimentSpec(BASE.replace(seed=40), adversary="fuzz", trials=4)
    run_experiment(spec)
    a = run_trial(BASE, "fuzz", {}, None, 42)
    b = run_trial(BASE, "fuzz", {}, None, 42)
    assert a == b


def test_parallel_matches_serial():
    serial = run_experiment(ExperimentSpec(BASE, adversary="fuzz", trials=6))
    parallel = run_experiment(ExperimentSpec(BASE, adversary="fuzz", trials=6, workers=2))
    assert serial == parallel


def test_cli_json(capsys):
    assert main(["--n", "4", "--t", "1", "--l", "64", "--d-bits", "16", "--k", "4",
                 "--trials", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["rows"][0]["p_correct"] == 1.0


def test_cli_csv_and_trace(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    out = tmp_path / "r.csv"
    assert main(["--l", "64", "--d-bits", "16", "--k", "4", "--adversary", "false_flagger",
                 "--format", "csv", "--output", str(out), "--trace", str(trace)]) == 0
    assert out.read_text().splitlines()[0].split(",") == CSV_COLUMNS
    recs = [json.loads(line) for line in trace.read_text().splitlines()]
    tags = {r["step_tag"] for r in recs}
    assert {"Session", "Data", "HashExchange", "NotificationBA", "ExtendedBA",
            "Diagnosis"} <= tags


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.conf"
    cfg.write_text("# demo\nn = 7\nt = 2\nl = 64\nd-bits = 16\nk = 4\ntrials = 2\n"
                   "adversary = colluders\nparams = {\"mix\": \"liars\"}\n")
    assert read_config_file(cfg)["n"] == "7"
    assert main(["--config", str(cfg), "--trials", "3"]) == 0
    row = json.loads(capsys.readouterr().out)["rows"][0]
    assert (row["n"], row["t"], row["trials"], row["adversary"]) == (7, 2, 3, "colluders")


def test_cli_errors_exit_2(tmp_path, capsys):
    assert main(["--n", "3"]) == 2
    bad = tmp_path / "bad.conf"
    bad.write_text("colour = red\n")
    assert main(["--config", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_beta_schedule(capsys):
    assert main(["--l", "1024", "--beta", "1/2"]) == 0
    row = json.loads(capsys.readouterr().out)["rows"][0]
    assert (row["k"], row["D"], row["beta"]) == (10, 40, 0.5)
