from fractions import Fraction as F

import pytest

from dynalloc import oracle
from dynalloc.prob_core import INF, FiniteSpace, Partition
from dynalloc.stopping import (
    RewardsProcess,
    all_breakpoints,
    check_rewards,
    check_right_derivative,
    check_stopped_martingale,
    m_grid,
    right_derivative_V,
    sigma_left,
    sigma_opt,
    snell_value,
    value_curves,
    z_process,
)


class TestValue:
    def test_scenario_a(self, a_proj):
        assert snell_value(*a_proj, 0, 0) == (1,)
        assert snell_value(*a_proj, 0, 3) == (3,)

    def test_scenario_b(self, b_proj):
        assert snell_value(*b_proj, 0, 1) == (F(15, 8), F(15, 8))
        assert snell_value(*b_proj, 1, 1) == (F(5, 2), 1)

    def test_value_agrees_with_oracle_on_the_grid(self, b_proj):
        rp, filt = b_proj
        for t in range(rp.horizon + 1):
            for m in m_grid(rp, filt, t):
                assert snell_value(rp, filt, t, m) == oracle.oracle_V(rp, filt, t, m)

    def test_curves_evaluate_to_the_recursion(self, b_proj):
        rp, filt = b_proj
        curves = value_curves(rp, filt)
        for m in (0, F(1, 3), 1, F(12, 5), 3, 7):
            assert tuple(c(m) for c in curves[0]) == snell_value(rp, filt, 0, m)

    def test_breakpoints_are_the_indices(self, b_proj):
        assert all_breakpoints(*b_proj, 0) == [F(12, 5), 4]

    def test_negative_exit_reward_is_rejected(self, b_proj):
        with pytest.raises(ValueError):
            snell_value(*b_proj, 0, -1)


class TestSigma:
    def test_scenario_a(self, a_proj):
        assert sigma_opt(*a_proj, 0, 1) == (1,)
        assert sigma_opt(*a_proj, 0, 0) == (INF,)

    def test_scenario_b(self, b_proj):
        assert sigma_opt(*b_proj, 0, 1) == (2, 1)

    def test_left_limit_at_a_jump(self, b_proj):
        assert sigma_opt(*b_proj, 0, F(12, 5)) == (0, 0)
        assert sigma_left(*b_proj, 0, F(12, 5)) == (2, 1)


class TestRightDerivative:
    def test_scenario_b(self, b_proj):
        assert right_derivative_V(*b_proj, 0, 1) == (F(3, 8), F(3, 8))

    def test_one_at_and_above_the_bound(self, b_proj):
        rp, filt = b_proj
        assert right_derivative_V(rp, filt, 0, rp.reward_bound) == (1, 1)

    def test_zero_uses_the_right_limit(self, a_proj):
        # at a finite horizon M(H) = 0, so sigma(t;0+) is finite and the
        # right derivative at 0 is E[beta^sigma(t;0+)] rather than 0
        assert right_derivative_V(*a_proj, 0, 0) == (F(1, 2),)

    def test_secant_identity(self, b_proj):
        rp, filt = b_proj
        for t in range(rp.horizon + 1):
            assert check_right_derivative(rp, filt, t, m_grid(rp, filt, t)).passed


class TestStoppedMartingale:
    def test_scenarios(self, a_proj, b_proj):
        rep = check_stopped_martingale(*a_proj, 0, 1)
        assert rep.passed and rep.worst == 0
        assert check_stopped_martingale(*b_proj, 0, 1).passed

    def test_planted_perturbation_is_located(self, b_proj):
        rp, filt = b_proj
        z = z_process(rp, filt, 1)
        z[1] = (z[1][0] + F(1, 10), z[1][1])
        rep = check_stopped_martingale(rp, filt, 0, 1, z=z)
        assert not rep.passed
        assert rep.witness == {"theta": 0, "atom": ("u",), "residual": F(1, 20)}


class TestRewards:
    def test_bound_and_predictability(self):
        sp = FiniteSpace(("u", "d"), (F(1, 2), F(1, 2)))
        filt = [Partition.trivial(2), Partition.discrete(2)]
        ok = RewardsProcess(sp, ((1, 1), (2, 0)), F(1, 2), 4)
        assert check_rewards(ok, filt).passed
        peeking = RewardsProcess(sp, ((1, 0),), F(1, 2), 4)
        assert check_rewards(peeking, filt).name == "predictability"
        too_big = RewardsProcess(sp, ((3, 3),), F(1, 2), 4)
        rep = check_rewards(too_big, filt)
        assert rep.name == "bound" and rep.witness["limit"] == 2

    def test_beta_range(self):
        sp = FiniteSpace(("w",), (1,))
        with pytest.raises(ValueError):
            RewardsProcess(sp, ((1,),), 1, None)
