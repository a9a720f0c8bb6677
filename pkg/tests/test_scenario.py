import pytest

from securiot.ledger import load_export, verify_chain
from securiot.netsim import Behavior
from securiot.scenario import (BUNDLED, ScenarioError, build_registry, bundled_scenario,
                               parse_scenario, run_scenario)

GOOD = """\
# two devices, one attack
name tiny
seed 9
validators 4
devices 2
network delay=1..4 loss=0
fault val-0 delay_injector delay=5
traffic Benign count=3 start=1 every=10 devices=dev-0
submit 40 dev-1 Dos_Hulk value=7
"""


def test_parse_scenario():
    sc = parse_scenario(GOOD)
    assert sc.name == "tiny" and sc.seed == 9 and sc.delay == (1, 4)
    assert sc.faults[0].behavior is Behavior.DELAY_INJECTOR and sc.faults[0].params == {"delay": 5}
    assert [(s.time, s.device, s.cls) for s in sc.submissions] == [
        (1, "dev-0", "Benign"), (11, "dev-0", "Benign"), (21, "dev-0", "Benign"),
        (40, "dev-1", "Dos Hulk")]
    assert sc.submissions[-1].value == 7.0
    assert sc.gateway_of("dev-1") == "gw-0"


@pytest.mark.parametrize("text,line,fragment", [
    ("validators 3\n", 1, ">= 4"),
    ("name x\nbogus 1\n", 2, "unknown directive"),
    ("devices 1\n\ntraffic Nope count=1\n", 3, "unknown class"),
    ("network delay=5\n", 1, "<lo>..<hi>"),
    ("network loss=1.5\n", 1, "[0, 1)"),
    ("fault val-9 silent\n", 1, "unknown node"),
    ("fault val-0 sleepy\n", 1, "unknown behavior"),
    ("submit 1 dev-5 Benign\n", 1, "unknown device"),
    ("seed x\n", 1, "integer"),
    ("traffic Benign count=1 colour=red\n", 1, "unknown traffic option"),
])
def test_parse_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert err.value.line == line and fragment in str(err.value)


def test_bundled_scenarios_parse():
    for name in BUNDLED:
        assert bundled_scenario(name).validators >= 4
    with pytest.raises(KeyError):
        bundled_scenario("nope")


def test_tiny_scenario_end_to_end(tree_model):
    res = run_scenario(parse_scenario(GOOD), tree_model)
    s = res.summary
    assert s["submissions"] == 4 and s["conservation"] and s["unresolved"] == 0
    assert s["committed_updates"] == 3 and s["committed_alerts"] == 1
    assert s["conflicting_commits"] == 0 and s["chain_valid"]
    blocks = load_export(res.ledger_export())
    assert verify_chain(blocks, build_registry(res.scenario))
    assert len(res.decision_log().splitlines()) == 4
    assert res.summary_text().startswith("scenario=tiny\n")


def test_honest_scenario(tree_model):
    s = run_scenario(bundled_scenario("honest"), tree_model).summary
    assert s["committed_updates"] == s["submissions"] == 20
    assert s["view_changes"] == 0 and s["conservation"]


def test_runs_are_reproducible(tree_model):
    a = run_scenario(parse_scenario(GOOD), tree_model)
    b = run_scenario(parse_scenario(GOOD), tree_model)
    assert a.trace() == b.trace() and a.ledger_export() == b.ledger_export()
    assert a.summary_json() == b.summary_json()
