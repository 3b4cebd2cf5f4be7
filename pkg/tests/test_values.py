from fractions import Fraction as F

import pytest

from conftest import bundled
from dynalloc import oracle
from dynalloc.allocation import build_sync_strategy, fixed_order, index_policy, lattice_projects, operational_clock
from dynalloc.gittins import restart_at_zero
from dynalloc.prob_core import FiniteSpace, Partition, build_product_lattice, cond_expect
from dynalloc.stopping import RewardsProcess, snell_value
from dynalloc.values import (
    bellman_probe,
    bellman_residual,
    decreasing_value,
    envelope_value,
    general_value,
    klw_processes,
    product_integral,
    q_process,
    surrogate_projects,
    value_field,
    whittle_value,
)


@pytest.fixture
def c():
    return bundled("scenario_c")


@pytest.fixture
def d():
    return bundled("scenario_d")


class TestWhittle:
    def test_scenario_c(self, c):
        assert whittle_value(c.projects, (0, 0), 0, c.lat) == (F(13, 10),)

    def test_retirement_above_bound(self, c, d):
        assert whittle_value(c.projects, (0, 0), 5, c.lat) == (5,)
        assert whittle_value(d.projects, (0, 0), 2, d.lat) == (2,) * 4

    def test_single_project_is_the_stopping_value(self, b_proj):
        inst = bundled("scenario_b")
        assert product_integral(inst.projects, (0,)) == snell_value(*b_proj, 0, 0)

    def test_matches_oracle_with_retirement(self, d):
        for M in (0, F(1, 2), 1):
            assert whittle_value(d.projects, (0, 0), M, d.lat) == oracle.oracle_Phi(d.lat, d.rps, (0, 0), M)

    def test_rejects_non_product_lattice(self):
        e = bundled("scenario_e")
        with pytest.raises(ValueError):
            whittle_value(e.projects, e.start, 0, e.lat)

    def test_negative_retirement(self, c):
        with pytest.raises(ValueError):
            whittle_value(c.projects, (0, 0), -1)


class TestBellman:
    def test_exact_fields_have_zero_residual(self, c, d):
        assert bellman_residual(value_field(c.projects, c.lat), c.projects, c.lat).worst == 0
        rep = bellman_residual(value_field(d.projects, d.lat, 1), d.projects, d.lat, 1)
        assert rep.passed
        assert all(rep.details[k] for k in ("Q1", "Q2", "Q3", "Q4"))

    def test_float_field_is_within_tolerance(self):
        d = bundled("scenario_d", "float")
        rep = bellman_residual(value_field(d.projects, d.lat, 1.0), d.projects, d.lat, 1.0)
        assert rep.passed and rep.worst <= 1e-12

    def test_perturbation_is_localized(self, d):
        field = value_field(d.projects, d.lat)
        field[(1, 1)] = tuple(v + F(1, 100) for v in field[(1, 1)])
        rep = bellman_residual(field, d.projects, d.lat)
        assert not rep.passed
        assert rep.witness["point"] == (1, 1)
        assert rep.worst == F(1, 100)

    def test_value_iteration_contracts(self, d):
        rep = bellman_probe(d.projects, d.lat, 1)
        assert rep.passed
        errs = rep.details["errors"]
        assert errs[-1] < errs[0]


class TestDecreasing:
    def test_scenario_c_surrogates(self, c):
        clock = operational_clock(c.projects, (0, 0))
        value, forms = decreasing_value(surrogate_projects(clock), (0, 0), c.lat)
        assert value == (F(13, 10),)
        assert forms.passed
        assert forms.details["n_form"] == (F(13, 10),)

    def test_rejects_increasing_rewards(self, b_proj):
        inst = bundled("scenario_b")
        with pytest.raises(ValueError):
            decreasing_value(inst.projects, (0,), inst.lat)

    def test_zero_rewards(self):
        one = FiniteSpace(("w",), (1,))
        lat = build_product_lattice([(one, [Partition.trivial(1)] * 2)] * 2)
        rps = [RewardsProcess(lat.space, ((0,),), F(1, 2), 1)] * 2
        value, _ = decreasing_value(lattice_projects(lat, rps), (0, 0), lat)
        assert value == (0,)


class TestGeneral:
    def test_scenario_c_routes(self, c):
        g = general_value(c.projects, c.lat, (0, 0))
        assert g["agree"] and g["f4"]
        assert all(v == (F(13, 10),) for v in g["routes"].values())

    def test_scenario_e_matches_oracle(self):
        e = bundled("scenario_e")
        g = general_value(e.projects, e.lat, e.start)
        assert g["agree"] and g["f4"]
        assert g["routes"]["decreasing"] == oracle.oracle_Phi(e.lat, e.rps, e.start)

    def test_single_project_restart_route(self, b_proj):
        inst = bundled("scenario_b")
        g = general_value(inst.projects, inst.lat, (0,))
        v0, _, dec = restart_at_zero(*b_proj, 0)
        assert g["routes"]["decreasing"] == v0 == dec

    def test_envelope_value(self, c):
        clock = operational_clock(c.projects, (0, 0))
        assert envelope_value(build_sync_strategy(clock), clock, c.lat) == (F(13, 10),)


class TestProcesses:
    def test_q_index_policy_is_martingale(self, c):
        clock = operational_clock(c.projects, (0, 0))
        field = value_field(c.projects, c.lat)
        Q, rep = q_process(index_policy(c.lat, clock), field, c.projects, c.lat)
        assert rep.details["verdict"] == "martingale"
        assert Q[0] == (F(13, 10),)

    def test_q_wrong_order_is_strict_supermartingale(self, c):
        field = value_field(c.projects, c.lat)
        Q, rep = q_process(fixed_order(c.lat, (0, 0), [1, 0]), field, c.projects, c.lat)
        assert rep.passed and rep.details["verdict"] == "supermartingale"
        assert Q[-1][0] == F(11, 10) < Q[0][0]

    def test_q_zero_rewards(self):
        one = FiniteSpace(("w",), (1,))
        lat = build_product_lattice([(one, [Partition.trivial(1)] * 2)] * 2)
        projects = lattice_projects(lat, [RewardsProcess(lat.space, ((0,),), F(1, 2), 1)] * 2)
        Q, _ = q_process(fixed_order(lat, (0, 0), [0, 1]), value_field(projects, lat), projects, lat)
        assert all(q == (0,) for q in Q)

    def test_klw_scenario_c(self, c):
        clock = operational_clock(c.projects, (0, 0))
        out = klw_processes(build_sync_strategy(clock), clock, c.lat)
        assert all(out["checks"].values())
        assert out["Lambda"][-1] == (0,)
        assert out["K"][-1] == (0,)

    def test_klw_scenario_e(self):
        e = bundled("scenario_e")
        clock = operational_clock(e.projects, e.start)
        T = build_sync_strategy(clock)
        out = klw_processes(T, clock, e.lat)
        assert all(out["checks"].values())
        assert out["K"][-1] == out["Lambda"][-1]

    def test_scenario_e_rewards_differ_but_not_in_mean(self):
        from dynalloc.allocation import reward_of

        e = bundled("scenario_e")
        clock = operational_clock(e.projects, e.start)
        T = build_sync_strategy(clock)
        r, rp = reward_of(T, clock), reward_of(T, clock, "decreasing")
        assert all(x != y for x, y in zip(r, rp))
        part = e.lat(e.start)
        assert cond_expect(r, part, e.lat.space) == cond_expect(rp, part, e.lat.space)
