from fractions import Fraction as F

import pytest

from conftest import bundled
from dynalloc import oracle
from dynalloc.oracle import BudgetExceeded, EnumerationBudget
from dynalloc.prob_core import INF


def test_rule_census_counts_never_as_a_rule(b_proj):
    rp, filt = b_proj
    # stop at 0, or continue; each child block then stops at 1 or continues to
    # the horizon where it stops or never stops: 1 + (1 + 2)^2 = 10
    assert oracle.count_stopping_rules(filt, 0, rp.horizon) == 10
    assert oracle.count_stopping_rules(filt, 1, rp.horizon) == 9


def test_enumeration_matches_census_and_is_deterministic(b_proj):
    rp, filt = b_proj
    rules = list(oracle.enumerate_stopping_rules(filt, 0, rp.horizon))
    again = list(oracle.enumerate_stopping_rules(filt, 0, rp.horizon))
    assert len(rules) == 10
    assert rules == again
    assert len({r.times for r in rules}) == 10
    assert rules[0].times == (0, 0)
    assert (INF, INF) in {r.times for r in rules}


def test_rules_are_stopping_times(b_proj):
    rp, filt = b_proj
    for rule in oracle.enumerate_stopping_rules(filt, 0, rp.horizon):
        for th in range(rp.horizon + 1):
            event = [a for a, s in enumerate(rule.times) if s == th]
            assert filt[th].contains_event(event)


def test_oracle_V_scenario_b(b_proj):
    rp, filt = b_proj
    assert oracle.oracle_V(rp, filt, 0, 1) == (F(15, 8), F(15, 8))
    assert oracle.oracle_V(rp, filt, 1, 1) == (F(5, 2), F(1))


def test_oracle_V_scenario_a(a_proj):
    rp, filt = a_proj
    assert oracle.oracle_V(rp, filt, 0, 0) == (1,)
    assert oracle.oracle_V(rp, filt, 0, 3) == (3,)


def test_forward_induction_ratios(a_proj, b_proj):
    assert oracle.forward_induction_index(*a_proj, 0) == (2,)
    assert oracle.forward_induction_index(*b_proj, 0) == (F(12, 5), F(12, 5))
    assert oracle.forward_induction_index(*b_proj, 1) == (4, 0)


def test_strategy_census_scenario_d():
    inst = bundled("scenario_d")
    census = oracle.strategy_census(inst.lat, inst.start)
    assert census["closed_form"] == census["enumerated"] == 50


def test_oracle_phi_scenario_c_and_argmax():
    inst = bundled("scenario_c")
    assert oracle.oracle_Phi(inst.lat, inst.rps, inst.start) == (F(13, 10),)
    best, winners = oracle.oracle_Phi_argmax(inst.lat, inst.rps, inst.start)
    assert best == F(13, 10)
    assert [w.choices for w in winners] == [((0, 1),)]


def test_retirement_at_or_above_bound_retires():
    inst = bundled("scenario_d")
    assert oracle.oracle_Phi(inst.lat, inst.rps, inst.start, 2) == (2,) * 4
    inst = bundled("scenario_c")
    assert oracle.oracle_Phi(inst.lat, inst.rps, inst.start, 5) == (5,)


def test_path_reward_conventions():
    inst = bundled("scenario_c")
    assert oracle.path_reward(inst.rps, (0, 0), (0, 1), 0) == F(13, 10)
    assert oracle.path_reward(inst.rps, (0, 0), (1, 0), 0) == F(11, 10)
    assert oracle.path_reward(inst.rps, (0, 0), (0, oracle.RETIRE), 0, 4) == 3
    assert oracle.path_reward(inst.rps, (0, 0), (oracle.NEVER,), 0, 4) == 0


def test_budget_is_enforced_before_enumeration():
    inst = bundled("scenario_d")
    tiny = EnumerationBudget(max_rules=10)
    with pytest.raises(BudgetExceeded):
        next(oracle.enumerate_strategies(inst.lat, inst.start, tiny))
    with pytest.raises(BudgetExceeded):
        EnumerationBudget(max_atoms=2).admit(1, atoms=3)


def test_enumerated_strategies_are_distinct_and_complete():
    inst = bundled("scenario_d")
    seen = {S.choices for S in oracle.enumerate_strategies(inst.lat, inst.start)}
    assert len(seen) == oracle.count_strategies(inst.lat, inst.start)
