"""The scripted adversary suite must pass wholesale and deterministically."""

import time

import pytest

from otpwallet.scenarios import SCENARIOS, run_all, run_scenario


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenario_passes(name):
    result = run_scenario(name, seed=0)
    assert result.passed, "\n".join(result.lines())


def test_unknown_scenario_name_rejected():
    with pytest.raises(ValueError):
        run_scenario("theorem99")


def test_suite_is_deterministic():
    first = [(r.name, r.state_hash, r.event_log) for r in run_all(seed=7)]
    second = [(r.name, r.state_hash, r.event_log) for r in run_all(seed=7)]
    assert first == second


def test_different_seeds_change_the_world():
    a = run_scenario("theorem1", seed=0)
    b = run_scenario("theorem1", seed=1)
    assert a.passed and b.passed
    assert a.state_hash != b.state_hash


def test_suite_runs_quickly():
    start = time.time()
    results = run_all(seed=0)
    assert all(r.passed for r in results)
    assert time.time() - start < 30.0
