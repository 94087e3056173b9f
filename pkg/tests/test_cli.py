import csv
import io
import json

import pytest

from swapforge.cli import EXIT_INFEASIBLE, EXIT_SAFE, EXIT_USAGE, EXIT_VIOLATION, main
from swapforge.metrics import run_batch
from swapforge.scenario import BUNDLED, ScenarioError, bundled_path, load_scenario, loads_scenario


def run_cli(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def test_run_example_one_base(tmp_path):
    trace = tmp_path / "t.jsonl"
    code, text = run_cli("run", "example1", "--trace", str(trace))
    assert code == EXIT_SAFE
    assert "completed schemes: [1]" in text
    events = [json.loads(l) for l in trace.read_text().splitlines()]
    assert sum(e["type"] == "trigger" for e in events) == 3


def test_protocol_a_on_example_one_triggers_all_three(tmp_path):
    verdicts = tmp_path / "v.json"
    assert run_cli("run", "example1", "--protocol", "A", "--verdicts", str(verdicts))[0] == EXIT_SAFE
    doc = json.loads(verdicts.read_text())
    assert all(doc["assignment"].values()) and len(doc["assignment"]) == 3


def test_crash_flag_and_plan_dump():
    code, text = run_cli("run", "example2", "--protocol", "A", "--crash", "Carol@escrow", "--dump-plan")
    assert code == EXIT_SAFE
    assert "crash@escrow" in text
    assert "last settlement round 6" in text


def test_traces_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for p in (a, b):
        run_cli("run", "fig2-three-party", "--protocol", "B", "--behavior", "Alice=leak:Bob@2", "--seed", "9", "--trace", str(p))
    assert a.read_bytes() == b.read_bytes() and a.stat().st_size > 0


def test_infeasible_exit_code():
    code, text = run_cli("run", "infeasible", "--protocol", "A")
    assert code == EXIT_INFEASIBLE
    assert "no feasible trade" in text


def test_usage_errors_exit_three(capsys):
    assert run_cli("run", "no-such-scenario")[0] == EXIT_USAGE
    assert run_cli("run", "example1", "--crash", "Zed@escrow")[0] == EXIT_USAGE
    assert run_cli("run", "example1", "--q", "0.5")[0] == EXIT_USAGE
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "example1", "--crash", "Carol@never"])


def test_violation_exit_code(monkeypatch):
    import swapforge.cli as cli

    real = cli.execute

    def tampered(setup):
        res = real(setup)
        res.report.double_triggers.append("synthetic")
        return res

    monkeypatch.setattr(cli, "execute", tampered)
    code, text = run_cli("run", "example1")
    assert code == EXIT_VIOLATION
    assert "VIOLATION double_triggers: synthetic" in text


def test_run_report_writes_csv_and_png(tmp_path):
    report = tmp_path / "run.csv"
    assert run_cli("run", "three-alternatives", "--protocol", "A", "--report", str(report))[0] == EXIT_SAFE
    rows = list(csv.DictReader(report.open()))
    assert {r["party"]: r["collateral"] for r in rows}["Alice"] == "3"
    png = report.with_suffix(".png")
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_batch_report_and_single_run_agree(tmp_path):
    report = tmp_path / "batch.csv"
    code, text = run_cli("batch", "example2", "--runs", "1", "--seed", "11", "--q", "0.5", "--report", str(report))
    assert code == EXIT_SAFE
    assert "closed forms" in text
    rows = list(csv.DictReader(report.open()))
    assert {r["strategy"] for r in rows} == {"sequential", "A", "B"}
    assert report.with_suffix(".png").exists()
    for proto in ("A", "B"):
        v = tmp_path / f"{proto}.json"
        run_cli("run", "example2", "--protocol", proto, "--seed", "11", "--q", "0.5", "--verdicts", str(v))
        doc = json.loads(v.read_text())
        row = next(r for r in rows if r["strategy"] == proto)
        expect = "" if not doc["completed_schemes"] else str(doc["completion_round"])
        assert row["completion_round"] == expect
        assert row["completed"] == " ".join(map(str, doc["completed_schemes"]))


@pytest.mark.parametrize("name", BUNDLED)
def test_every_bundled_scenario_has_a_defined_exit_code(name):
    code, _ = run_cli("run", name)
    assert code == (EXIT_INFEASIBLE if name == "infeasible" else EXIT_SAFE)


def test_batch_attempts_and_parallel_speedup():
    batch = run_batch(load_scenario("example2"), 1000, 7, 0.25)
    s = batch.summary()
    assert abs(s["sequential"]["mean_attempts"] - 4) / 4 <= 0.10
    assert s["A"]["mean_time"] < s["sequential"]["mean_time"]


def test_batch_rejects_zero_runs():
    assert run_cli("batch", "example2", "--runs", "0", "--seed", "1")[0] == EXIT_USAGE


# ---------------------------------------------------------- scenario files

BASE = bundled_path("example1").read_text()


def test_unknown_party_in_arc_is_reported():
    with pytest.raises(ScenarioError, match="arc 'cb'.*'Dave' is not declared"):
        loads_scenario(BASE.replace('to = "Bob"', 'to = "Dave"'))


def test_graph_must_be_strongly_connected():
    text = BASE.replace('[arcs.ba]\nfrom = "Bob"\nto = "Alice"\nasset = "ticket"\n', "")
    text = text.replace('[predicates.Bob]\nincome = { ba = "arc(cb)" }\n', "")
    with pytest.raises(ScenarioError, match="strongly connected"):
        loads_scenario(text)


def test_predicate_syntax_error_carries_position():
    with pytest.raises(ScenarioError, match=r"line 1, column 10"):
        loads_scenario(BASE.replace('"arc(ba)"', '"arc(ba) &"'))


def test_toml_syntax_error():
    with pytest.raises(ScenarioError, match="syntax error"):
        loads_scenario(BASE + "\n[[[")
