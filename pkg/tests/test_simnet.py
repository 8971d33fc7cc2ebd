import json
from pathlib import Path

import pytest

from affectmesh import simnet
from affectmesh.mesh import scan_payload
from affectmesh.simnet import (AgentConfig, ScenarioError, ScenarioScript, ScriptEvent, metrics_from_log,
                               replay_requeue_check, scenario_colisten, scenario_echo, scenario_solo, simulate)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.fixture(scope="module")
def echo_on():
    return simulate(scenario_echo(True))


@pytest.fixture(scope="module")
def echo_off():
    return simulate(scenario_echo(False))


@pytest.fixture(scope="module")
def colisten():
    return simulate(scenario_colisten(0))


@pytest.fixture(scope="module")
def solo():
    return simulate(scenario_solo())


def test_byte_identical_replay(colisten):
    assert simulate(scenario_colisten(0)).event_log == colisten.event_log
    assert simulate(scenario_colisten(1)).event_log != colisten.event_log


def test_seeds_logged_up_front(colisten):
    rows = simnet.parse_log(colisten.event_log)
    assert rows[0].kind == "seed"


def test_echo_bounded_with_isolation(echo_on):
    counts = {a: len(v) for a, v in echo_on.metrics.triggers.items()}
    assert all(c <= 1 for c in counts.values())


def test_echo_oscillates_without_isolation(echo_on, echo_off):
    off = {a: len(v) for a, v in echo_off.metrics.triggers.items()}
    assert sum(off.values()) > sum(len(v) for v in echo_on.metrics.triggers.values())
    assert echo_off.metrics.oscillation_count > echo_on.metrics.oscillation_count


def test_no_dial_no_triggers():
    m = simulate(scenario_echo(True, dial=False)).metrics
    assert all(not v for v in m.triggers.values())


def test_colisten_propagation_and_genre_cooldown(colisten):
    m = colisten.metrics
    latencies = [lat for src, dst, _, lat in m.propagation if (src, dst) == ("A", "B")]
    assert latencies and latencies[0] <= 10.0
    assert [(a, g) for _, a, g in m.genre_changes] == [("B", "jazz")]
    assert any(g == "electronic" for _, _, g in m.genre_blocked)


def test_identical_dials_converge_rho():
    m = simulate(scenario_colisten(0, identical_dials=True)).metrics
    assert all(v[-1][1] == pytest.approx(1.0) for v in m.rho.values())


def test_solo_has_no_traffic_and_consistent_requeues(solo):
    assert solo.traffic == [] and solo.metrics.messages == 0
    assert replay_requeue_check(solo.event_log) == []
    reasons = {r for _, r, _, _ in solo.metrics.requeues["solo"]}
    assert {"divergence", "expired"} <= reasons
    ticks = [r for r in simnet.parse_log(solo.event_log) if r.kind == "tick"]
    assert any(float(r.detail["conf"]) < 0.4 for r in ticks)


def test_tampered_log_is_caught(solo):
    lines = solo.event_log.splitlines()
    i = next(k for k, ln in enumerate(lines) if ",tick," in ln and "action=requeue" in ln)
    lines[i] = lines[i].replace("action=requeue", "action=none")
    assert replay_requeue_check("\n".join(lines) + "\n")


def test_metrics_recomputed_from_log(colisten):
    again = metrics_from_log(colisten.event_log)
    assert again.report() == colisten.metrics.report()


def test_traffic_passes_privacy_scan(colisten, echo_off):
    for data in colisten.traffic + echo_off.traffic:
        assert scan_payload(data) == []


def test_fusion_csv(colisten):
    rows = simnet.fusion_csv(colisten.event_log).splitlines()
    assert rows[0] == "time,from,to,field,drift,band,gate"
    assert len(rows) - 1 == 7 * colisten.metrics.messages


@pytest.mark.parametrize("factory, name", [
    (lambda: scenario_echo(True), "echo_isolation_on"),
    (lambda: scenario_echo(False), "echo_isolation_off"),
    (lambda: scenario_colisten(0), "colisten"),
    (scenario_solo, "solo_60min"),
])
def test_shipped_scenarios_match_canned(factory, name):
    shipped = ScenarioScript.load(SCENARIOS / f"{name}.json")
    assert shipped == factory()
    assert ScenarioScript.loads(shipped.dumps()) == shipped


def _script(**kw):
    base = dict(name="t", agents=(AgentConfig("A"),), events=(), duration=100.0)
    base.update(kw)
    return ScenarioScript(**base)


@pytest.mark.parametrize("kw, needle", [
    (dict(agents=()), "no agents"),
    (dict(agents=(AgentConfig("A"), AgentConfig("A"))), "duplicate"),
    (dict(events=(ScriptEvent(5.0, "mood_dial", "Z", {"valence": 0, "arousal": 0}),)), "undeclared"),
    (dict(events=(ScriptEvent(5.0, "dance", "A"),)), "unknown kind"),
    (dict(events=(ScriptEvent(500.0, "play", "A"),)), "outside"),
    (dict(events=(ScriptEvent(5.0, "play", "A"), ScriptEvent(1.0, "play", "A"))), "time-ordered"),
    (dict(events=(ScriptEvent(5.0, "mood_dial", "A", {"valence": 0.1}),)), "valence and arousal"),
    (dict(agents=(AgentConfig("A", trajectory_source="oracle"),)), "trajectory_source"),
    (dict(agents=(AgentConfig("A", influence="loud"),)), "influence"),
])
def test_validation_errors(kw, needle):
    with pytest.raises(ScenarioError) as err:
        _script(**kw).validate()
    assert any(needle in p for p in err.value.problems)


def test_loads_rejects_bad_documents():
    with pytest.raises(ScenarioError):
        ScenarioScript.loads("[1, 2]")
    with pytest.raises(ScenarioError):
        ScenarioScript.loads("{not json")
    with pytest.raises(ScenarioError):
        ScenarioScript.loads(json.dumps({"name": "x"}))
    with pytest.raises(ScenarioError):
        ScenarioScript.load("/nonexistent/scenario.json")
