import logging
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlt_recovery.errors import ConfigurationError, ScenarioError
from dlt_recovery.scenario import (
    ROLES,
    STATED_TOTAL_DISRUPTIONS,
    ROLE_INHERENT_LIKELIHOOD,
    ROLE_PSEUDOCOUNTS,
    ROLE_QUEUE_SIZES,
    REFERENCE_PLAN_ROWS,
    CostModel,
    Disruption,
    ImpactStub,
    LatencyModel,
    RecoveryImpact,
    SimConfig,
    generate_queues,
    load_scenario,
    parse_scenario,
    passenger_cost,
    predict_impact,
    reference_plan_impacts,
    write_scenario,
)
from dlt_recovery.utfm import Phase, inherent_likelihood

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

FOUR = """\
[agents]
roles = NAS, Security, Weather, Inflight
"""


def test_minimal_scenario_uses_role_defaults():
    sc = parse_scenario(FOUR)
    c = sc.config
    assert c.agents == ("NAS", "Security", "Weather", "Inflight")
    assert c.queue_sizes["Security"] == 30
    assert c.pseudocounts["NAS"].tactical == ROLE_PSEUDOCOUNTS["NAS"][0]
    assert sc.cost.passenger_value_per_hour == 47.0
    assert c.latency == LatencyModel("uniform", 10, 50)
    assert sum(len(q) for q in sc.queues().values()) == 227 + 30 + 127 + 795


def test_unknown_role_reports_line():
    text = "# comment\n[agents]\nroles = NAS, Security\n\n[queues]\nNAS = 3\nPilots = 4\n"
    with pytest.raises(ScenarioError, match="line 7"):
        parse_scenario(text)


def test_twelfth_role_rejected():
    roles = ", ".join(ROLES + ("Crew Scheduling",))
    with pytest.raises(ScenarioError, match="line 2.*Crew Scheduling"):
        parse_scenario(f"[agents]\nroles = {roles}\n")


@pytest.mark.parametrize("text, where", [
    ("[agents]\nroles = NAS, Security\n[sim]\nseeds = 3\n", "line 4"),
    ("[agents]\nroles = NAS, Security\n[network]\nx = 1\n", "line 3"),
    ("[agents]\nroles = NAS, Security\nmembers = 2\n", "line 3"),
    ("[agents]\nroles = NAS, Security\n[sim]\nseed = seven\n", "line 4"),
    ("[agents]\nroles = NAS, Security\n[pseudocounts]\nNAS.daily = 3\n", "line 4"),
])
def test_bad_keys_report_line(text, where):
    with pytest.raises(ScenarioError, match=where):
        parse_scenario(text)


@pytest.mark.parametrize("text", [
    "",
    "[agents]\nroles = NAS\n",
    "[agents]\nroles = NAS, NAS\n",
    "[agents]\nroles = NAS, Security\n[queues]\nNAS = -1\n",
    "[agents]\nroles = NAS, Security\n[adversaries]\nNAS = lie\n",
    "[agents]\nroles = NAS, Security\n[stakes]\nNAS = 3\n",
    "[agents]\nroles = NAS, Security\n[sim]\nlatency_model = gamma\n",
])
def test_invalid_scenarios(text):
    with pytest.raises(ScenarioError):
        parse_scenario(text)


def test_round_trip():
    text = FOUR + ("[sim]\nseed = 9\nlatency_model = constant\nlatency_min_ms = 20\n"
                   "[cost]\nrate = 52.5\n[stakes]\nNAS = 3\nSecurity = 1\nWeather = 2\n"
                   "Inflight = 4\n[adversaries]\nWeather = fork\n"
                   "[pseudocounts]\nNAS.operational = 7\n")
    sc = parse_scenario(text)
    assert sc.config.pseudocounts["NAS"].operational == 7
    assert sc.config.latency == LatencyModel("constant", 20, 20)
    again = parse_scenario(write_scenario(sc))
    assert again == sc


@pytest.mark.parametrize("name", ["five_roles.ini", "eleven_roles.ini"])
def test_shipped_scenarios_load(name):
    sc = load_scenario(SCENARIOS / name)
    assert parse_scenario(write_scenario(sc)) == sc


def test_missing_file():
    with pytest.raises(ScenarioError):
        load_scenario("/nonexistent/x.ini")


def test_config_replace_restricts_role_maps():
    c = SimConfig(agents=ROLES, stakes={r: 2 for r in ROLES}, adversaries={"NAS": "fork"})
    small = c.replace(agents=("Security", "Weather", "Inflight"))
    assert set(small.queue_sizes) == set(small.pseudocounts) == set(small.stakes) == {
        "Security", "Weather", "Inflight"}
    assert small.adversaries == {}
    with pytest.raises(ConfigurationError):
        c.replace(tx_per_event=0)


# -- reference data --------------------------------------------------------


def test_reference_data_sums():
    assert sum(ROLE_QUEUE_SIZES.values()) == 4346
    assert STATED_TOTAL_DISRUPTIONS == 4364
    assert set(ROLE_PSEUDOCOUNTS) == set(ROLES) == set(ROLE_QUEUE_SIZES)


def test_pseudocount_data_shape():
    assert sum(sum(v) for v in ROLE_PSEUDOCOUNTS.values()) == 175_675
    assert inherent_likelihood(16_160, 620_000) == pytest.approx(0.026064516)
    # the likelihood column is published without its underlying counts
    for row in ROLE_INHERENT_LIKELIHOOD.values():
        assert len(row) == 3 and all(0 < v < 1 for v in row)


# -- queues ----------------------------------------------------------------


def test_default_queues(caplog):
    with caplog.at_level(logging.INFO, logger="dlt_recovery.scenario"):
        qs = generate_queues(ROLE_QUEUE_SIZES, seed=1)
    assert sum(len(q) for q in qs.values()) == 4346
    assert "4346" in caplog.text and "4364" in caplog.text
    ids = [d.flight_id for q in qs.values() for d in q]
    assert len(set(ids)) == len(ids)
    for role, q in qs.items():
        assert [d.queue_position for d in q] == list(range(1, len(q) + 1))
        assert all(d.role == role for d in q)


def test_queue_generation_is_deterministic():
    sizes = {"NAS": 5, "Security": 3}
    assert generate_queues(sizes, seed=4) == generate_queues(sizes, seed=4)
    assert generate_queues(sizes, seed=4) != generate_queues(sizes, seed=5)


def test_empty_queues():
    qs = generate_queues({"NAS": 0, "Security": 0})
    assert qs == {"NAS": [], "Security": []}


def test_queue_errors():
    with pytest.raises(ScenarioError):
        generate_queues({"Pilots": 3})
    with pytest.raises(ScenarioError):
        generate_queues({"NAS": -1})


def test_disruption_criteria_by_phase():
    d = Disruption(7, "NAS", ("a0",), ("a1", "a2"), ("a3",), 1)
    assert d.criteria == ("a0", "a1", "a2", "a3")
    assert d.criteria_for(Phase.OPERATIONAL) == ("a1", "a2")


# -- impact stub and cost --------------------------------------------------


def test_impact_stub_deterministic():
    d = Disruption(1536, "Fuel Management", (), (), (), 1)
    stub = ImpactStub(seed=3)
    assert stub.predict(d) == predict_impact(stub, d) == ImpactStub(seed=3).predict(d)
    assert ImpactStub(seed=4).predict(d) != stub.predict(d)


def test_impact_stub_ranges():
    stub = ImpactStub(seed=0)
    lo = [10**9] * 4
    hi = [-10**9] * 4
    for k in range(10_000):
        i = stub.predict(Disruption(k, ROLES[k % 11], (), (), (), 1))
        vals = (i.tactical_delay_min, i.turnaround_min, i.block_time_min, i.strategic_delay_min)
        lo = [min(a, b) for a, b in zip(lo, vals)]
        hi = [max(a, b) for a, b in zip(hi, vals)]
    assert lo == [-20, 1, 93, -14]
    assert hi == [61, 41, 339, 40]
    # every reference row lies inside the stub's ranges
    for row in REFERENCE_PLAN_ROWS:
        assert -20 <= row[4] <= 61 and 1 <= row[5] <= 41
        assert 93 <= row[6] <= 339 and -14 <= row[7] <= 40


def test_reference_plan_cost():
    assert passenger_cost(reference_plan_impacts()) == pytest.approx(359.55, abs=0.01)
    tactical = sum(r[4] for r in REFERENCE_PLAN_ROWS)
    strategic = sum(r[7] for r in REFERENCE_PLAN_ROWS)
    assert (tactical, strategic) == (269, 190)


def test_cost_examples():
    assert passenger_cost([RecoveryImpact(0, 0, 0, 0)]) == 0.0
    assert passenger_cost([RecoveryImpact(30, 0, 0, 30)]) == pytest.approx(47.0)
    with pytest.raises(ScenarioError):
        passenger_cost([])
    with pytest.raises(ScenarioError):
        CostModel(0)
    with pytest.raises(ScenarioError):
        RecoveryImpact(0, -1, 0, 0)


impacts = st.lists(st.builds(RecoveryImpact, st.integers(-60, 120), st.integers(0, 60),
                             st.integers(0, 400), st.integers(-60, 120)), min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(a=impacts, b=impacts, rate=st.floats(1, 500), k=st.floats(0.1, 10))
def test_cost_is_additive_and_linear(a, b, rate, k):
    m = CostModel(rate)
    assert passenger_cost(a + b, m) == pytest.approx(
        passenger_cost(a, m) + passenger_cost(b, m), abs=1e-9)
    assert passenger_cost(a, CostModel(rate * k)) == pytest.approx(
        k * passenger_cost(a, m), abs=1e-9)


def test_inline_comments_keep_line_numbers():
    text = ("[agents]   # members\nroles = NAS, Security  # two roles\n\n"
            "[sim]  # timing\nseed = 3  # fixed\nticks = 4\n")
    with pytest.raises(ScenarioError, match="line 6"):
        parse_scenario(text)
    assert parse_scenario(text.replace("ticks = 4\n", "")).config.seed == 3
