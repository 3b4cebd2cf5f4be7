"""Verification suites run by ``verify`` and ``random``.

Each suite maps an :class:`Instance` to a list of check records
``{"name", "passed", "worst", "witness"}``; ``passed`` is ``None`` when a
check was skipped because the enumeration budget was exceeded.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

from .. import oracle
from ..allocation import (
    build_sync_strategy,
    check_Y_zero,
    classify_strategy,
    index_policy,
    operational_clock,
    reward_of,
    round_robin,
    satisfies_synchronization,
    validate_strategy,
)
from ..gittins import (
    check_decreasing_identity,
    check_index_agreement,
    check_right_inverse,
    check_u_martingale,
    restart_at_zero,
    restart_representation,
)
from ..instances import Instance, atom_key
from ..oracle import BudgetExceeded, EnumerationBudget
from ..prob_core import (
    CheckReport,
    Number,
    check_enlargement,
    check_F4,
    check_field_supermartingale,
    check_optional_sampling_pairs,
    check_product_structure,
    cond_expect,
    derive_axis_filtrations,
    enumerate_stopping_points,
    leq,
    random_stopping_point,
)
from ..stopping import check_right_derivative, check_stopped_martingale, m_grid, snell_value
from ..values import (
    bellman_probe,
    bellman_residual,
    decreasing_value,
    envelope_value,
    general_value,
    klw_processes,
    q_process,
    surrogate_projects,
    value_field,
)


@dataclass
class Context:
    budget: EnumerationBudget
    tol: Number
    stopping_point_limit: int = 1000
    sampled_pairs: int = 2000


def record(name: str, passed, worst=0, witness=None, **extra) -> dict:
    out = {"name": name, "passed": passed, "worst": worst, "witness": witness}
    out.update(extra)
    return out


def from_report(name: str, rep: CheckReport, **extra) -> dict:
    return record(name, rep.passed, rep.worst, rep.witness, **extra)


def skipped(name: str, exc: Exception) -> dict:
    return record(name, None, 0, None, reason=str(exc))


def _max_gap(x, y) -> Number:
    return max((abs(a - b) for a, b in zip(x, y)), default=0)


def _grid_check(name: str, gaps: list, tol: Number) -> dict:
    worst = max((g for g, _ in gaps), default=0)
    bad = next((w for g, w in gaps if g > tol), None)
    return record(name, bad is None, worst, bad)


# ---------------------------------------------------------------------------


def suite_stopping(inst: Instance, ctx: Context) -> list:
    out = []
    for i, p in enumerate(inst.projects):
        rp, filt = p.rp, p.filt
        grid_gaps, mart, rdiff = [], [], []
        try:
            for t in range(rp.horizon + 1):
                for m in m_grid(rp, filt, t):
                    grid_gaps.append(
                        (_max_gap(snell_value(rp, filt, t, m), oracle.oracle_V(rp, filt, t, m, ctx.budget)), {"t": t, "m": m})
                    )
            out.append(_grid_check(f"project {i}: value equals oracle", grid_gaps, ctx.tol))
        except BudgetExceeded as exc:
            out.append(skipped(f"project {i}: value equals oracle", exc))
        for t in range(rp.horizon + 1):
            grid = m_grid(rp, filt, t)
            for m in grid:
                rep = check_stopped_martingale(rp, filt, t, m, ctx.tol)
                mart.append((rep.worst, rep.witness))
            r = check_right_derivative(rp, filt, t, grid, ctx.tol)
            rdiff.append((r.worst, r.witness))
        out.append(_grid_check(f"project {i}: stopped value process is a martingale", mart, ctx.tol))
        out.append(_grid_check(f"project {i}: right derivative identity", rdiff, ctx.tol))
    return out


def suite_gittins(inst: Instance, ctx: Context) -> list:
    out = []
    for i, p in enumerate(inst.projects):
        rp, filt = p.rp, p.filt
        try:
            out.append(from_report(f"project {i}: index equals forward induction", check_index_agreement(rp, filt, ctx.budget, ctx.tol)))
        except BudgetExceeded as exc:
            out.append(skipped(f"project {i}: index equals forward induction", exc))
        ri, rs, rz = [], [], []
        for t in range(rp.horizon + 1):
            grid = m_grid(rp, filt, t)
            rep = check_right_inverse(rp, filt, t, grid, tol=ctx.tol)
            ri.append((0 if rep.passed else 1, rep.witness))
            for m in grid:
                lhs, rhs = restart_representation(rp, filt, t, m)
                rs.append((_max_gap(lhs, rhs), {"t": t, "m": m}))
            v0, plain, dec = restart_at_zero(rp, filt, t)
            rz.append((max(_max_gap(v0, plain), _max_gap(v0, dec)), {"t": t}))
        out.append(_grid_check(f"project {i}: sigma and envelope are right inverses", ri, 0))
        out.append(_grid_check(f"project {i}: restart representation", rs, ctx.tol))
        out.append(_grid_check(f"project {i}: restart representation at m=0", rz, ctx.tol))
        dec = check_decreasing_identity(rp, filt, ctx.tol)
        if dec.passed or (dec.witness or {}).get("reason") != "rewards not decreasing":
            out.append(from_report(f"project {i}: decreasing rewards identity", dec))
    return out


def suite_ui(inst: Instance, ctx: Context) -> list:
    out = []
    for i, p in enumerate(inst.projects):
        reps = [check_u_martingale(p.rp, p.filt, t, ctx.tol) for t in range(p.horizon + 1)]
        bad = next((r for r in reps if not r.passed), None)
        out.append(
            record(
                f"project {i}: U is a martingale starting at 0",
                bad is None,
                max(r.worst for r in reps),
                None if bad is None else bad.witness,
            )
        )
    return out


def suite_index_properties(inst: Instance, ctx: Context) -> list:
    lat = inst.lat
    clock = operational_clock(inst.projects, inst.start)
    out = [from_report("clock jump structure", clock.report)]
    T = build_sync_strategy(clock)
    out.append(from_report("sync strategy is an allocation strategy", validate_strategy(T, lat)))
    out.append(record("sync strategy satisfies synchronization", satisfies_synchronization(T, clock)))
    out.append(from_report("sync strategy: Y vanishes on the windows", check_Y_zero(clock, ctx.tol)))
    flags = classify_strategy(T, clock)
    out.append(record("sync strategy: all equivalent flags hold", all(flags[k] for k in ("sync", "per_m_split", "bracket", "dual_opt", "lower_index"))))
    out.append(record("sync strategy is of index type (reported only)", True, details={"index_type": flags["index_type"]}))
    for sticky in (False, True):
        P = index_policy(lat, clock, sticky)
        f = classify_strategy(P, clock)
        out.append(record(f"{P.label} policy is synchronized", validate_strategy(P, lat).passed and f["sync"] and f["index_type"]))
    try:
        closed = oracle.count_strategies(lat, inst.start)
        census = {"closed_form": closed, "enumerated": 0, "sync": 0, "index_type": 0, "minimal_switching": 0}
        exceptions = []
        for S in oracle.enumerate_strategies(lat, inst.start, ctx.budget):
            census["enumerated"] += 1
            f = classify_strategy(S, clock)
            for k in ("sync", "index_type", "minimal_switching"):
                census[k] += f[k]
            if not f["meta_ok"]:
                exceptions.append({"choices": [list(c) for c in S.choices], "flags": f})
        out.append(record("census matches closed form", census["enumerated"] == closed, census=census))
        out.append(record("flag meta-equivalence over all strategies", not exceptions, len(exceptions), exceptions[:1] or None))
    except BudgetExceeded as exc:
        out.append(skipped("flag meta-equivalence over all strategies", exc))
    return out


def suite_decreasing(inst: Instance, ctx: Context) -> list:
    lat = inst.lat
    clock = operational_clock(inst.projects, inst.start)
    sur = surrogate_projects(clock)
    phi, forms = decreasing_value(sur, inst.start, lat)
    out = [from_report("closed forms agree", forms)]
    try:
        wrong = []
        for S in oracle.enumerate_strategies(lat, inst.start, ctx.budget):
            ce = cond_expect(reward_of(S, clock, "decreasing"), lat(inst.start), lat.space)
            attains = _max_gap(ce, phi) <= ctx.tol
            if attains != satisfies_synchronization(S, clock):
                wrong.append([list(c) for c in S.choices])
        out.append(record("attains the value iff synchronized", not wrong, len(wrong), wrong[:1] or None))
    except BudgetExceeded as exc:
        out.append(skipped("attains the value iff synchronized", exc))
    return out


def suite_main(inst: Instance, ctx: Context) -> list:
    lat = inst.lat
    g = general_value(inst.projects, lat, inst.start)
    out = [record("value routes agree", g["agree"], g["worst"])]
    out.append(record("lattice satisfies F4", g["f4"]))
    try:
        o = oracle.oracle_Phi(lat, inst.rps, inst.start, 0, ctx.budget)
        gap = _max_gap(o, g["routes"]["decreasing"])
        out.append(record("value equals oracle", gap <= ctx.tol, gap))
    except BudgetExceeded as exc:
        out.append(skipped("value equals oracle", exc))
    klw = klw_processes(g["strategy"], g["clock"], lat)
    for k, v in klw["checks"].items():
        out.append(record(f"sync strategy: {k}", v))
    env = envelope_value(g["strategy"], g["clock"], lat)
    gap = _max_gap(env, g["routes"]["decreasing"])
    out.append(record("envelope form of the value", gap <= ctx.tol, gap))
    return out


def suite_q(inst: Instance, ctx: Context) -> list:
    lat = inst.lat
    clock = operational_clock(inst.projects, inst.start)
    field = value_field(inst.projects, lat, 0)
    P = index_policy(lat, clock)
    Q, rep = q_process(P, field, inst.projects, lat)
    out = [record("index policy: Q is a martingale", rep.details["verdict"] == "martingale", rep.worst)]
    R = round_robin(lat, inst.start)
    Q, rep = q_process(R, field, inst.projects, lat)
    out.append(record("round robin: Q is a supermartingale", rep.passed, rep.worst, verdict=rep.details["verdict"]))
    try:
        bad = []
        for S in oracle.enumerate_strategies(lat, inst.start, ctx.budget):
            _, rep = q_process(S, field, inst.projects, lat)
            f = classify_strategy(S, clock)
            if not rep.passed or (f["index_type"] and rep.details["verdict"] != "martingale"):
                bad.append([list(c) for c in S.choices])
        out.append(record("Q verdicts over all strategies", not bad, len(bad), bad[:1] or None))
    except BudgetExceeded as exc:
        out.append(skipped("Q verdicts over all strategies", exc))
    return out


def martingale_fixtures(inst: Instance, seed: int = 0) -> list:
    """``(axis, E[xi | F_i(t)])`` sequences for a few deterministic ``xi``."""
    lat = inst.lat
    rng = random.Random(seed)
    out = []
    for i in range(lat.dim):
        small = derive_axis_filtrations(lat, i)[0]
        for _ in range(2):
            xi = tuple(rng.randint(-3, 3) for _ in range(lat.space.n))
            if inst.mode == "float":
                xi = tuple(float(x) for x in xi)
            out.append((i, [cond_expect(xi, p, lat.space) for p in small]))
    return out


def field_fixtures(inst: Instance, seed: int = 0) -> list:
    """Martingale fields ``E[xi | F(s)]`` and drifted supermartingales."""
    lat = inst.lat
    rng = random.Random(seed)
    out = []
    for k in range(2):
        xi = tuple(rng.randint(-3, 3) for _ in range(lat.space.n))
        mart = {r: cond_expect(xi, lat(r), lat.space) for r in lat.points()}
        out.append(("martingale", mart))
        c = rng.randint(1, 2)
        out.append(("supermartingale", {r: tuple(x - c * sum(r) for x in v) for r, v in mart.items()}))
    return out


def suite_f4(inst: Instance, ctx: Context) -> list:
    lat = inst.lat
    f4 = check_F4(lat, ctx.tol)
    out = [from_report("F4 conditional independence", f4)]
    prod = check_product_structure(lat)
    out.append(record("product structure (reported only)", True, details={"product": prod.passed}))
    if not f4.passed:
        return out
    worst = 0
    bad = None
    for i, seq in martingale_fixtures(inst):
        rep = check_enlargement(lat, i, seq, ctx.tol)
        worst = max(worst, rep.worst)
        if not rep.passed and bad is None:
            bad = rep.witness
    out.append(record("F_i-martingales stay martingales for F^i", bad is None, worst, bad))
    fields = field_fixtures(inst)
    reps = [check_field_supermartingale(x, lat, ctx.tol) for _, x in fields]
    out.append(record("field supermartingale forms agree", all(r.passed and r.details.get("forms_agree") for r in reps)))
    try:
        points = list(enumerate_stopping_points(lat, ctx.stopping_point_limit))
        order = {(p, q): leq(p, q) for p in lat.points() for q in lat.points()}
        pairs = [(s, t) for s in points for t in points if all(order[a, b] for a, b in zip(s, t))]
        mode = "exhaustive"
    except OverflowError:
        rng = random.Random(0)
        pairs = []
        for _ in range(ctx.sampled_pairs):
            s = random_stopping_point(lat, rng)
            pairs.append((s, random_stopping_point(lat, rng, floor=s)))
        mode = "sampled"
    bad = None
    parts = {}
    for kind, x in fields:
        rep = check_optional_sampling_pairs(x, pairs, lat, ctx.tol, parts, ordered=True)
        ok = rep.passed and (kind != "martingale" or rep.details["equality"])
        if not ok and bad is None:
            bad = dict(rep.witness or {"reason": "martingale without equality"}, kind=kind)
    out.append(record("optional sampling", bad is None, 0, bad, pairs=len(pairs) * len(fields), mode=mode))
    return out


def perturbed_field(inst: Instance, field: dict) -> dict:
    perturb = inst.doc.get("perturb")
    if not perturb:
        return field
    from ..prob_core import parse_number

    pt = tuple(perturb["point"])
    delta = parse_number(perturb["delta"], inst.mode)
    keys = [atom_key(a) for a in inst.lat.space.atoms]
    target = perturb.get("atom")
    if target is not None and target not in keys:
        raise ValueError(f"perturb: unknown atom {target!r}")
    out = dict(field)
    out[pt] = tuple(v + delta if target in (None, k) else v for k, v in zip(keys, field[pt]))
    return out


def suite_bellman(inst: Instance, ctx: Context) -> list:
    lat = inst.lat
    out = []
    grid = sorted({0, inst.retirement} | set(inst.doc.get("retirement_grid", [])))
    from ..prob_core import parse_number

    grid = sorted({parse_number(m, inst.mode) if isinstance(m, str) else m for m in grid})
    for M in grid:
        field = perturbed_field(inst, value_field(inst.projects, lat, M))
        rep = bellman_residual(field, inst.projects, lat, M, ctx.tol)
        out.append(from_report(f"Bellman equation at M={M}", rep, inequalities={k: rep.details[k] for k in ("Q1", "Q2", "Q3", "Q4")}))
    out.append(from_report("value iteration contracts with ratio beta", bellman_probe(inst.projects, lat, inst.retirement)))
    return out


SUITES: dict = {
    "prop-stopping": suite_stopping,
    "gittins": suite_gittins,
    "prop-ui": suite_ui,
    "thm-index-properties": suite_index_properties,
    "thm-dd": suite_decreasing,
    "thm-main": suite_main,
    "lemma-q": suite_q,
    "f4": suite_f4,
    "bellman": suite_bellman,
}


def run_suite(name: str, inst: Instance, ctx: Context) -> list:
    names = list(SUITES) if name == "all" else [name]
    out = []
    for n in names:
        fn: Callable = SUITES[n]
        for rec in fn(inst, ctx):
            rec["suite"] = n
            out.append(rec)
    return out
