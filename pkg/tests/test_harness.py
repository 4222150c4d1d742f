import csv
import io
import json
import math

import pytest

from vbqc_netsim import harness
from vbqc_netsim.harness import (
    AggregateReport,
    ConfigError,
    ScenarioConfig,
    config_from_dict,
    emit,
    load_config,
    render,
    run_scenario,
    run_trials,
    summarize,
    validate,
)


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- configs and validation ------------------------------------------------------------


def test_ram_n4_alpha2_beta2_is_valid():
    assert validate(ScenarioConfig(protocol="ram", pattern="chain:4", N=4, alpha=2, beta=2)) == []


def test_trap_next_to_computation_vertex():
    pattern = {
        "graph": {"n": 3, "edges": [[0, 1], [1, 2]]},
        "classes": "CTD",
        "angles": [0, 0, 0],
        "x_deps": [[], [], []],
        "z_deps": [[], [], []],
        "order": [0, 1, 2],
        "outputs": [0],
    }
    bad = validate(ScenarioConfig(protocol="pas", pattern=pattern))
    assert any(v.startswith("trap not isolated") for v in bad)


def test_graph_over_capacity():
    bad = validate(ScenarioConfig(protocol="ram", pattern="chain:25"))
    assert any("capacity" in v for v in bad)


def test_violations_name_their_field():
    bad = validate(ScenarioConfig(protocol="qkd", trials=0, auth_key_length=7, noise=2.0, N=9))
    fields = {v.split(":")[0] for v in bad}
    assert {"protocol", "trials", "auth_key_length", "noise", "N"} <= fields


def test_unknown_keys_and_bad_types_rejected(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, 'protocol = "ram"\ncolour = "blue"\n'))
    assert "colour" in str(exc.value)
    with pytest.raises(ConfigError):
        config_from_dict({"trials": "many"})
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "protocol = \n"))


def test_config_name_defaults_to_file_stem(tmp_path):
    cfg = load_config(write(tmp_path, 'protocol = "pas"\n', "my_run.toml"))
    assert cfg.name == "my_run" and cfg.protocol == "pas"


def test_bundled_suite_is_valid():
    cfgs = harness.suite_configs()
    assert len(cfgs) == 12
    assert {c.protocol for c in cfgs} == {"ram", "pas", "cb"}
    for c in cfgs:
        assert validate(c) == [], c.name


# -- aggregation and output -----------------------------------------------------------


def test_summary_statistics():
    m = summarize("x", [1, 0, 1, 1])
    assert m.mean == 0.75 and m.n == 4
    se = math.sqrt(0.25 / 4)   # sample variance with ddof=1 is 1/4
    assert abs(m.stderr - se) < 1e-12
    assert abs(m.hi95 - (0.75 + 1.96 * se)) < 1e-12
    assert summarize("y", [0.1], 0.1, 0.0).passed is True
    assert summarize("z", [0.2], 0.1, 0.05, "le").passed is False


def test_empty_report_renders_config_echo():
    report = AggregateReport({"protocol": "ram"}, [])
    out = json.loads(render(report, "json"))
    assert out["config"] == {"protocol": "ram"} and out["metrics"] == []


def small(**kw):
    base = dict(protocol="pas", trials=8, seed=5, m=32, pattern="chain:3")
    base.update(kw)
    return ScenarioConfig(**base)


def test_json_and_csv_carry_the_same_numbers(tmp_path):
    report = run_scenario(small())
    j = json.loads(emit(report, "json", tmp_path / "r.json").read_text())
    rows = list(csv.DictReader(io.StringIO(emit(report, "csv", tmp_path / "r.csv").read_text())))
    assert [r["metric"] for r in rows] == [m["name"] for m in j["metrics"]]
    for row, m in zip(rows, j["metrics"]):
        for col in ("mean", "stderr", "lo95", "hi95"):
            assert float(row[col]) == m[col]
            assert len(row[col].replace("-", "").replace(".", "").lstrip("0").split("e")[0]) <= 12
        assert int(row["n"]) == m["n"]


def test_unknown_format_and_unwritable_path(tmp_path):
    report = AggregateReport({}, [])
    with pytest.raises(ValueError):
        render(report, "xml")
    with pytest.raises(OSError) as exc:
        emit(report, "json", tmp_path / "missing" / "r.json")
    assert "missing" in str(exc.value)


def test_rerun_is_byte_identical():
    cfg = small(adversary="intercept_resend")
    assert render(run_scenario(cfg)) == render(run_scenario(cfg))


def test_parallel_workers_give_the_same_report():
    cfg = small(trials=6)
    assert render(run_scenario(cfg, workers=1)) == render(run_scenario(cfg, workers=3))


def test_one_report_per_trial_in_order():
    reports = run_trials(small(trials=5))
    assert [r.trial for r in reports] == list(range(5))
    assert all(len(r.sessions) == 1 for r in reports)


def test_clients_are_spread_over_servers():
    reports = run_trials(small(trials=2, m_clients=3, n_servers=2))
    assert [s.server for s in reports[0].sessions] == ["server0", "server1", "server0"]
    assert [s.client for s in reports[0].sessions] == ["client0", "client1", "client2"]


def test_invalid_config_raises_before_running():
    with pytest.raises(ConfigError):
        run_trials(small(trials=0))


def test_runtime_fault_carries_trial_index(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("bad luck")

    monkeypatch.setattr(harness, "run_stabilizer_verified", boom)
    with pytest.raises(harness.TrialFault) as exc:
        run_trials(ScenarioConfig(protocol="ram", trials=2, m=32, pattern="chain:2"))
    assert exc.value.trial == 0 and "trial 0" in str(exc.value)


def test_interval_width_shrinks_with_root_trials():
    cfg = dict(protocol="pas", seed=9, m=64, pattern="chain:2", min_key_length=4, auth_key_length=4,
               auth_decoys=1)
    widths = []
    for trials in (100, 1000, 10_000):
        m = run_scenario(ScenarioConfig(trials=trials, **cfg)).metric("kept_fraction")
        widths.append(m.hi95 - m.lo95)
    for a, b in zip(widths, widths[1:]):
        assert abs(a / b / math.sqrt(10) - 1) < 0.2


# -- scenario examples ------------------------------------------------------------------


def test_ram_honest_everything_succeeds():
    report = run_scenario(ScenarioConfig(protocol="ram", trials=100, seed=1, m=64, pattern="chain:4", beta=4))
    for name in ("registration_success", "auth_mutual_accept", "vbqc_accept"):
        assert report.metric(name).mean == 1.0
    assert report.abort_codes == {}


def test_pas_trap_flip_always_rejected():
    cfg = ScenarioConfig(protocol="pas", trials=1000, seed=2, m=128, pattern="chain:2", min_key_length=16,
                         auth_key_length=16, adversary="trap_flip_server", adversary_params={"p": 1.0})
    report = run_scenario(cfg)
    assert report.metric("vbqc_accept").mean == 0.0
    assert report.metric("vbqc_accept").n > 950
    assert report.metric("end_to_end_success").mean == 0.0


def test_cb_blank_channel_intercept_abort_rate():
    d = 8
    # m is large enough that one registration round almost always suffices
    cfg = ScenarioConfig(protocol="cb", trials=600, seed=3, m=512, k=d, pattern="chain:2",
                         adversary="intercept_resend", adversary_params={"channel": "lba->client"})
    report = run_scenario(cfg)
    m = report.metric("decoy_detect_rate")
    assert m.reference == 1 - 0.75**d
    assert abs(m.mean - m.reference) < 0.03


def test_detection_reference_dropped_when_rounds_repeat():
    cfg = ScenarioConfig(protocol="cb", trials=5, seed=3, m=32, k=8, pattern="chain:2",
                         adversary="intercept_resend", adversary_params={"channel": "lba->client"})
    assert run_scenario(cfg).metric("decoy_detect_rate").reference is None


def test_adversarial_suite_scenarios_respect_the_bound():
    for cfg in harness.suite_configs():
        if cfg.adversary not in ("wrong_graph_server", "trap_flip_server"):
            continue
        cfg.trials = 100
        m = run_scenario(cfg).metric("incorrect_and_accept")
        assert m.comparator == "le"
        assert m.mean <= m.reference + 0.02, cfg.name
