"""Acceptance battery.

Every criterion prints one ``PASS``/``FAIL`` line and asserts.  Instances
are drawn from fixed seeds in rational mode, so reruns are identical.
"""

import random
import time
from fractions import Fraction as F

import pytest

from conftest import bundled
from dynalloc import oracle
from dynalloc.allocation import classify_strategy, operational_clock, satisfies_synchronization
from dynalloc.cli.suites import Context, martingale_fixtures, suite_decreasing, suite_f4
from dynalloc.gittins import gittins_forward_induction, gittins_index, restart_at_zero, restart_representation
from dynalloc.instances import load_scenario, random_product, random_sheet, random_single
from dynalloc.prob_core import check_enlargement, check_F4
from dynalloc.stopping import check_right_derivative, m_grid, snell_value
from dynalloc.values import bellman_residual, general_value, klw_processes, value_field, whittle_value

SINGLE_SEED, PRODUCT_SEED, SHEET_SEED = 1, 2, 3
N_SINGLE, N_PRODUCT, N_SHEET = 100, 100, 50
MAX_STRATEGIES = 300
# the retirement oracle also enumerates stopping actions; beyond this many
# strategies it is only run at M = 0
MAX_RETIREMENT_STRATEGIES = 2000

ELAPSED = {}
CTX = Context(oracle.DEFAULT_BUDGET, 0)


def _singles():
    rng = random.Random(SINGLE_SEED)
    return [load_scenario(random_single(rng, max_atoms=8, max_horizon=3)) for _ in range(N_SINGLE)]


def _products():
    rng = random.Random(PRODUCT_SEED)
    out = []
    while len(out) < N_PRODUCT:
        inst = load_scenario(random_product(rng, max_d=2, max_atoms=4, max_horizon=2, trivial_start=False, min_d=2))
        if oracle.count_strategies(inst.lat, inst.start) <= MAX_STRATEGIES:
            out.append(inst)
    return out


def _sheets():
    rng = random.Random(SHEET_SEED)
    return [load_scenario(random_sheet(rng)) for _ in range(N_SHEET)]


@pytest.fixture(scope="module")
def singles():
    t0 = time.perf_counter()
    out = _singles()
    ELAPSED["generate singles"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="module")
def products():
    t0 = time.perf_counter()
    out = _products()
    ELAPSED["generate products"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="module")
def sheets():
    t0 = time.perf_counter()
    out = _sheets()
    ELAPSED["generate sheets"] = time.perf_counter() - t0
    return out


@pytest.fixture
def verdict(request):
    """Prints one line per criterion, records its runtime and asserts."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    t0 = time.perf_counter()

    def emit(k, text, failures):
        dt = time.perf_counter() - t0
        ELAPSED[f"criterion {k}"] = dt
        line = f"{'PASS' if not failures else 'FAIL'} criterion {k}: {text} ({dt:.2f}s)"
        if failures:
            line += f" first failure: {failures[0]}"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)
        assert not failures, line

    return emit


def _projects(insts):
    for n, inst in enumerate(insts):
        for i, p in enumerate(inst.projects):
            yield n, i, p.rp, p.filt


def test_criterion_01_stopping_value_equals_oracle(singles, verdict):
    t0 = time.perf_counter()
    bad = []
    points = 0
    for n, _, rp, filt in _projects(singles):
        for t in range(rp.horizon + 1):
            for m in m_grid(rp, filt, t):
                points += 1
                if snell_value(rp, filt, t, m) != oracle.oracle_V(rp, filt, t, m):
                    bad.append({"instance": n, "t": t, "m": m})
    dt = time.perf_counter() - t0
    if dt >= 10:
        bad.append({"runtime": dt})
    verdict(1, f"snell value equals oracle on {len(singles)} instances, {points} grid points, {dt:.2f}s < 10s", bad)


def test_criterion_02_index_dual_computation(singles, verdict):
    bad = []
    for n, _, rp, filt in _projects(singles):
        for t in range(rp.horizon + 1):
            if gittins_index(rp, filt, t) != gittins_forward_induction(rp, filt, t):
                bad.append({"instance": n, "t": t})
    a = bundled("scenario_a").projects[0]
    if gittins_index(a.rp, a.filt, 0) != (2,) * a.rp.space.n:
        bad.append({"scenario_a": gittins_index(a.rp, a.filt, 0)})
    b = bundled("scenario_b").projects[0]
    if gittins_index(b.rp, b.filt, 0) != (F(12, 5),) * 2 or gittins_index(b.rp, b.filt, 1) != (4, 0):
        bad.append({"scenario_b": [gittins_index(b.rp, b.filt, t) for t in (0, 1)]})
    verdict(2, "index equals forward induction; A gives M(0)=2; B gives 12/5 and (4,0)", bad)


def test_criterion_03_restart_representation(singles, verdict):
    bad = []
    for n, _, rp, filt in _projects(singles):
        for t in range(rp.horizon + 1):
            for m in m_grid(rp, filt, t):
                lhs, rhs = restart_representation(rp, filt, t, m)
                if lhs != rhs:
                    bad.append({"instance": n, "t": t, "m": m})
            v0, plain, dec = restart_at_zero(rp, filt, t)
            if not v0 == plain == dec:
                bad.append({"instance": n, "t": t, "m": 0})
    verdict(3, "restart representation on every grid point and at m=0", bad)


def _m_grid(inst):
    K = inst.rps[0].reward_bound
    pts = {F(0), K / 4, K / 2, 3 * K / 4, K}
    for p in inst.projects:
        pts.update(gittins_index(p.rp, p.filt, 0))
    return sorted(pts)


def test_criterion_04_whittle_value_and_retirement(products, verdict):
    bad = []
    retire_checked = 0
    for n, inst in enumerate(products):
        if whittle_value(inst.projects, inst.start, 0, inst.lat) != oracle.oracle_Phi(inst.lat, inst.rps, inst.start):
            bad.append({"instance": n, "M": 0})
        retire_ok = oracle.count_strategies(inst.lat, inst.start, retire=True) <= MAX_RETIREMENT_STRATEGIES
        for M in _m_grid(inst):
            rep = bellman_residual(value_field(inst.projects, inst.lat, M), inst.projects, inst.lat, M, 0)
            if not rep.passed or not all(rep.details[q] for q in ("Q1", "Q2", "Q3", "Q4")):
                bad.append({"instance": n, "M": M, "witness": rep.witness})
            if M > 0 and retire_ok:
                retire_checked += 1
                w = whittle_value(inst.projects, inst.start, M, inst.lat)
                if w != oracle.oracle_Phi(inst.lat, inst.rps, inst.start, M):
                    bad.append({"instance": n, "M": M, "retirement": True})
    c = bundled("scenario_c")
    if whittle_value(c.projects, c.start, 0, c.lat) != (F(13, 10),) * c.lat.space.n:
        bad.append({"scenario_c": whittle_value(c.projects, c.start, 0, c.lat)})
    verdict(
        4,
        f"whittle equals oracle on {len(products)} products ({retire_checked} retirement points); C gives 13/10; Q1-Q4 on M-grid",
        bad,
    )


def test_criterion_05_flag_meta_equivalence(products, verdict):
    bad = []
    total = 0
    for n, inst in enumerate(products):
        clock = operational_clock(inst.projects, inst.start)
        for S in oracle.enumerate_strategies(inst.lat, inst.start):
            total += 1
            f = classify_strategy(S, clock)
            if not f["meta_ok"]:
                bad.append({"instance": n, "choices": S.choices, "flags": f})
    verdict(5, f"five flags coincide over all {total} strategies, zero exceptions", bad)


def test_criterion_06_decreasing_rewards(products, verdict):
    bad = []
    for n, inst in enumerate(products):
        for rec in suite_decreasing(inst, CTX):
            if rec["passed"] is not True:
                bad.append({"instance": n, "check": rec["name"], "witness": rec["witness"]})
    c = bundled("scenario_c")
    clock = operational_clock(c.projects, c.start)
    g = general_value(c.projects, c.lat, c.start)
    forms = (g["routes"]["decreasing"], g["routes"]["clock_n_form"])
    if any(v != (F(13, 10),) * c.lat.space.n for v in forms):
        bad.append({"scenario_c": forms})
    if not satisfies_synchronization(g["strategy"], clock):
        bad.append({"scenario_c": "sync strategy not synchronized"})
    verdict(6, "value attained iff synchronized; closed forms agree; C gives 13/10 by both", bad)


def test_criterion_07_general_value(products, sheets, verdict):
    bad = []
    for kind, insts in (("sheet", sheets), ("product", products)):
        for n, inst in enumerate(insts):
            g = general_value(inst.projects, inst.lat, inst.start)
            o = oracle.oracle_Phi(inst.lat, inst.rps, inst.start)
            if not g["agree"] or g["routes"]["decreasing"] != o:
                bad.append({kind: n, "routes": g["routes"], "oracle": o})
            klw = klw_processes(g["strategy"], g["clock"], inst.lat)["checks"]
            if not (klw["K_martingale"] and klw["W_terminal_zero"]):
                bad.append({kind: n, "klw": klw})
    verdict(7, f"routes agree and equal oracle on {len(sheets)} sheets and {len(products)} products; K martingale; terminal W=0", bad)


def test_criterion_08_f4_machinery(products, sheets, verdict):
    bad = []
    pairs = 0
    modes = {"exhaustive": 0, "sampled": 0}
    for kind, insts in (("sheet", sheets), ("product", products)):
        for n, inst in enumerate(insts):
            for rec in suite_f4(inst, CTX):
                if rec["passed"] is not True:
                    bad.append({kind: n, "check": rec["name"], "witness": rec["witness"]})
                if "mode" in rec:
                    modes[rec["mode"]] += 1
                    pairs += rec["pairs"]
    corr = bundled("correlated")
    rep = check_F4(corr.lat)
    if rep.passed or rep.witness is None:
        bad.append({"correlated": "expected an F4 failure with a witness"})
    for i, seq in martingale_fixtures(bundled("scenario_e")):
        if not check_enlargement(bundled("scenario_e").lat, i, seq).passed:
            bad.append({"scenario_e": i})
    verdict(
        8,
        f"F4 holds on products and sheets; correlated fails; enlargement; optional sampling over {pairs} pairs "
        f"({modes['exhaustive']} instances exhaustive, {modes['sampled']} sampled)",
        bad,
    )


def test_criterion_09_right_derivative(singles, verdict):
    bad = []
    for n, _, rp, filt in _projects(singles):
        for t in range(rp.horizon + 1):
            rep = check_right_derivative(rp, filt, t, m_grid(rp, filt, t), 0)
            if not rep.passed:
                bad.append({"instance": n, "witness": rep.witness})
    verdict(9, "secant slopes equal E[beta^(sigma-t)|F(t)] on every grid point", bad)


def test_criterion_10_total_runtime(verdict):
    total = sum(v for k, v in ELAPSED.items())
    missing = [k for k in range(1, 10) if f"criterion {k}" not in ELAPSED]
    bad = [{"missing": missing}] if missing else []
    if total >= 120:
        bad.append({"runtime": total})
    verdict(10, f"battery completes in {total:.1f}s < 120s", bad)

