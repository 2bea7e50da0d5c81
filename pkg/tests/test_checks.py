import json

import pytest

from commalab.checks import CHECKS, run_check, run_suite, suite_passed
from commalab.config import KNOWN_CHECKS, CheckerSuiteConfig
from commalab.reports import BoundReport, dump_json


def test_registry_matches_known_ids():
    assert tuple(CHECKS) == KNOWN_CHECKS


@pytest.mark.parametrize("name", ["lemma1", "lemma2", "thm5", "chernoff", "lemma7", "lemma8", "lemma14", "approx"])
def test_fast_checks_pass(name):
    reports = run_check(name, seed=1)
    assert reports
    assert all(r.passed for r in reports if r.hypothesis_ok)
    json.loads(dump_json([r.to_dict() for r in reports]))


def test_check_is_stable_under_suite_composition():
    alone = run_check("lemma19", seed=3)[0].to_dict()
    both = run_suite(CheckerSuiteConfig(("lemma7", "lemma19"), seed=3))
    assert both["lemma19"][0].to_dict() == alone


def test_suite_passed_ignores_out_of_hypothesis():
    good = BoundReport("a", True, {}, 0.1, 0.0, 0.2, 1)
    outside = BoundReport("b", False, {}, 0.9, 0.0, 0.2, 1)
    bad = BoundReport("c", True, {}, 0.9, 0.0, 0.2, 1)
    assert suite_passed({"x": [good, outside]})
    assert not suite_passed({"x": [good, bad]})


def test_rescore_uses_sigma():
    r = BoundReport("a", True, {}, 0.25, 0.02, 0.2, 100)
    assert r.passed
    assert not r.rescore(1.0).passed
    lower = BoundReport("b", True, {}, 0.15, 0.01, 0.2, 100, kind="lower")
    assert not lower.passed
