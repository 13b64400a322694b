import json
from dataclasses import replace

import pytest

from mecsim import verify
from mecsim.market import price
from mecsim.taskgraph import chain


@pytest.mark.parametrize(
    "suite",
    [
        lambda: verify.suite_topo(10),
        lambda: verify.suite_partition_chains(10),
        lambda: verify.suite_partition_dags(10),
        lambda: verify.suite_demand(8),
        lambda: verify.suite_ratio(10),
        lambda: verify.suite_uniform(10),
        lambda: verify.suite_truthful(2, 1),
        lambda: verify.suite_monotone(10),
        lambda: verify.suite_threshold(3),
        lambda: verify.suite_modes(10),
        lambda: verify.suite_crosscheck(10),
        lambda: verify.suite_determinism(1),
        lambda: verify.suite_occupancy(1),
    ],
)
def test_suites_pass_on_small_counts(suite):
    result = suite()
    assert result.checked > 0
    assert result.failures == []
    assert result.passed


def test_soft_suite_never_fails_the_run():
    result = verify.SuiteResult("soft", failures=["below target"], hard=False)
    assert result.passed
    assert verify.suite_trends(0).checked == 0


def test_run_suites_validates_names():
    with pytest.raises(ValueError):
        verify.run_suites("exhaustive")
    with pytest.raises(ValueError):
        verify.run_suites("quick", only=["nonexistent"])
    assert set(verify.LEVELS["quick"]) == set(verify.LEVELS["full"])


def test_build_report_layout():
    results = [
        verify.SuiteResult("good", checked=3),
        verify.SuiteResult("bad", checked=2, failures=["seed=1: broke"]),
        verify.SuiteResult("soft", checked=1, failures=["slow"], hard=False),
    ]
    lines, detail = verify.build_report(results, "quick", 0)
    text = "\n".join(lines)
    assert lines[0] == "=" * 70
    assert "PASS  good" in text
    assert "FAIL  bad" in text
    assert "WARN  soft" in text
    assert "Suites failed: 1/3" in text
    assert lines[-1].endswith("FAIL")
    assert list(detail["status"]) == ["PASS", "FAIL", "WARN"]
    assert detail["checked"].sum() == 6


def test_failures_carry_serialized_input(three_users):
    demands, topo, catalog = three_users
    priced = price(demands, topo, catalog)
    result = verify.SuiteResult("payments")
    verify._check_payments(result, 7, replace(priced, payments={**priced.payments, 3: 1.0}), topo, catalog)
    assert len(result.failures) == 1
    failure = result.failures[0]
    assert failure.startswith("seed=7: loser 3 pays 1.0")
    data = json.loads(failure.split("input=", 1)[1])
    assert [d["user"] for d in data["demands"]] == [1, 2, 3]
    assert data["vm_hz"] == [5e9]


def test_graph_json_includes_device_and_link(device, link, two_chain):
    data = json.loads(verify.graph_json(two_chain, device, link, 5e9))
    assert data["graph"]["output"] == 1
    assert data["device"]["deadline_s"] is None
    assert data["link"]["station_subchannels"] == 15
    assert data["vm_hz"] == 5e9
    assert "device" not in json.loads(verify.graph_json(chain([1.0], [])))
