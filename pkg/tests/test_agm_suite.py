from __future__ import annotations

import json
from collections import Counter

import pytest

from graphmem import agm_suite, belief
from graphmem.agm_suite import CATEGORIES, NOT_APPLICABLE, POSTULATES


def test_catalog_shape():
    catalog = agm_suite.scenario_catalog()
    assert len(catalog) == 49
    assert len({s.id for s in catalog}) == 49
    cells = Counter((s.postulate, s.category) for s in catalog)
    for p in POSTULATES:
        for c in CATEGORIES:
            if (p, c) in NOT_APPLICABLE:
                assert cells[(p, c)] == 0
            else:
                assert cells[(p, c)] >= 1, (p, c)
    by_cat = Counter(s.category for s in catalog)
    assert by_cat == {"simple": 7, "multi-item": 14, "chain": 6, "temporal": 6, "adversarial": 16}


def test_all_pass_with_na_cells():
    report = agm_suite.run_all()
    assert (report.total, report.passed, report.failed) == (49, 49, 0)
    m = report.matrix
    assert {k for k, v in m.items() if v == "n/a"} == set(NOT_APPLICABLE)
    assert all(v in ("pass", "n/a") for v in m.values())
    assert "49 scenarios: 49 passed, 0 failed." in report.table()


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_order_independent(seed):
    base = {r.scenario.id: r.passed for r in agm_suite.run_all().results}
    shuffled = {r.scenario.id: r.passed for r in agm_suite.run_all(shuffle_seed=seed).results}
    assert base == shuffled


def test_select():
    assert len(agm_suite.select(agm_suite.scenario_catalog(), "K2/simple")) == 1
    assert len(agm_suite.select(agm_suite.scenario_catalog(), "K6")) == 6
    assert len(agm_suite.select(agm_suite.scenario_catalog(), "adversarial")) == 16
    assert agm_suite.select(agm_suite.scenario_catalog(), "nope") == []


def test_suite_detects_missing_supersedes(monkeypatch):
    monkeypatch.setattr(belief, "_supersede", lambda *a, **k: None)
    report = agm_suite.run_all()
    failed = {r.scenario.id for r in report.results if not r.passed}
    assert failed
    assert all(i.startswith(("K5", "K2")) for i in failed)


def test_suite_detects_broken_contraction(monkeypatch):
    monkeypatch.setattr(belief, "targets", lambda g, atom, at=None: belief.TargetSet(frozenset()))
    report = agm_suite.run_all()
    failed = {r.scenario.postulate for r in report.results if not r.passed}
    assert {"Relevance", "CoreRetainment"} <= failed


def test_json_report():
    data = json.loads(agm_suite.report_json(agm_suite.run_all(only="K3")))
    assert (data["total"], data["passed"]) == (7, 7)
    assert data["matrix"]["K6"]["chain"] == "n/a"
