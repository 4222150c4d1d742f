import csv
import io
import json
import subprocess
import sys

import pytest

from vbqc_netsim import cli, harness

SMALL = 'protocol = "pas"\ntrials = 4\nseed = 8\nm = 32\npattern = "chain:3"\n'


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def test_validate_ok(cfg, capsys):
    assert cli.main(["validate", "--config", str(cfg)]) == cli.EXIT_OK
    assert "ok: small" in capsys.readouterr().out


def test_validate_lists_every_violation(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('protocol = "pas"\ntrials = 0\npattern = "chain:25"\n')
    assert cli.main(["validate", "--config", str(p)]) == cli.EXIT_INVALID
    err = capsys.readouterr().err
    assert "trials" in err and "capacity" in err


def test_unknown_key_and_missing_file(tmp_path, capsys):
    p = tmp_path / "odd.toml"
    p.write_text(SMALL + "speed = 3\n")
    assert cli.main(["run", "--config", str(p)]) == cli.EXIT_INVALID
    assert "speed" in capsys.readouterr().err
    assert cli.main(["validate", "--config", str(tmp_path / "nope.toml")]) == cli.EXIT_INVALID


def test_run_json_to_stdout_and_overrides(cfg, capsys):
    assert cli.main(["run", "--config", str(cfg), "--trials", "3", "--seed", "11"]) == cli.EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["trials"] == 3 and out["config"]["seed"] == 11


def test_run_override_is_validated(cfg, capsys):
    assert cli.main(["run", "--config", str(cfg), "--trials", "0"]) == cli.EXIT_INVALID


def test_run_csv_file_and_channel_log(cfg, tmp_path):
    out, log = tmp_path / "r.csv", tmp_path / "events.jsonl"
    code = cli.main(["run", "--config", str(cfg), "--format", "csv", "--out", str(out), "--log-channel", str(log)])
    assert code == cli.EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert tuple(rows[0]) == harness.CSV_COLUMNS
    events = [json.loads(line) for line in log.read_text().splitlines()]
    assert {e["trial"] for e in events} == {0, 1, 2, 3}
    assert all({"step", "sender", "receiver", "kind"} <= set(e) for e in events)


def test_run_fault_exit_code(cfg, monkeypatch, capsys):
    def boom(*a, **k):
        raise RuntimeError("broken server")

    monkeypatch.setattr(harness, "run_trap_verified", boom)
    assert cli.main(["run", "--config", str(cfg)]) == cli.EXIT_FAULT
    assert "trial 0" in capsys.readouterr().err


def test_unwritable_output_is_a_fault(cfg, tmp_path, capsys):
    code = cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "no" / "r.json")])
    assert code == cli.EXIT_FAULT


def test_suite_writes_reports(monkeypatch, tmp_path, capsys):
    few = [harness.load_config(p) for p in sorted(harness.suite_dir().glob("pas_*.toml"))[:2]]
    for c in few:
        c.trials = 3
    monkeypatch.setattr(harness, "suite_configs", lambda: few)
    assert cli.main(["suite", "--out-dir", str(tmp_path)]) == cli.EXIT_OK
    assert sorted(p.name for p in tmp_path.glob("*.json")) == sorted(f"{c.name}.json" for c in few)
    assert capsys.readouterr().out.count("checks") == 2


def test_console_script_module_entry(cfg):
    res = subprocess.run([sys.executable, "-m", "vbqc_netsim.cli", "validate", "--config", str(cfg)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "ok" in res.stdout
