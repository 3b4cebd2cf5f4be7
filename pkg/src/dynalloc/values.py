"""Values of the dynamic allocation problem and the process identities
behind them.

Every integral over the retirement parameter ``m`` is evaluated exactly
on the partition of ``[0, K]`` induced by the index breakpoints.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .allocation import (
    AllocationStrategy,
    OperationalClock,
    Project,
    build_sync_strategy,
    operational_clock,
    reward_of,
    surrogate_rewards,
)
from .gittins import index_sequence, u_martingale
from .prob_core import (
    CheckReport,
    FiltrationLattice,
    Number,
    Point,
    RandomVariable,
    add_point,
    check_F4,
    check_product_structure,
    cond_expect,
    default_tol,
    stopped_partition,
    unit,
)
from .stopping import all_breakpoints, right_derivative_V, value_curves


def shared_bound(projects: Sequence[Project]) -> Number | None:
    bounds = {p.rp.reward_bound for p in projects}
    if len(bounds) != 1:
        raise ValueError(f"projects must share one reward bound, got {sorted(map(str, bounds))}")
    return bounds.pop()


def _tol(projects: Sequence[Project]) -> Number:
    return default_tol(projects[0].rp.beta)


def _cut_points(projects: Sequence[Project], start: Sequence[int]) -> list:
    pts = set()
    for p, s in zip(projects, start):
        pts.update(b for b in all_breakpoints(p.rp, p.filt, s) if b > 0)
    return sorted(pts)


def product_integral(projects: Sequence[Project], start: Sequence[int], M: Number = 0) -> RandomVariable:
    """``K - int_M^K prod_i d+V_i(s_i; m) dm`` per atom (``M`` when ``M >= K``).

    With no declared bound any ``K`` above every index works, since the
    integrand equals 1 there."""
    bps = _cut_points(projects, start)
    K = shared_bound(projects)
    if K is None:
        K = max(bps + [M])
    n = projects[0].rp.space.n
    if M >= K:
        return (M,) * n
    xs = [M] + [b for b in bps if M < b < K] + [K]
    total = [0] * n
    for lo, hi in zip(xs, xs[1:]):
        prod = [1] * n
        for p, s in zip(projects, start):
            dv = right_derivative_V(p.rp, p.filt, s, lo)
            prod = [x * y for x, y in zip(prod, dv)]
        for a in range(n):
            total[a] += prod[a] * (hi - lo)
    return tuple(K - x for x in total)


def whittle_value(
    projects: Sequence[Project], start: Sequence[int], M: Number = 0, lat: FiltrationLattice | None = None
) -> RandomVariable:
    """Whittle's product formula; requires independent projects."""
    if M < 0:
        raise ValueError("retirement reward must be non-negative")
    if lat is not None:
        rep = check_product_structure(lat)
        if not rep.passed:
            raise ValueError("whittle_value needs a product lattice; use general_value instead")
    return product_integral(projects, start, M)


def value_field(projects: Sequence[Project], lat: FiltrationLattice, M: Number = 0) -> dict:
    """The product-integral formula at every lattice point."""
    return {r: product_integral(projects, r, M) for r in lat.points()}


def _bellman_rhs(field: Mapping, projects: Sequence[Project], lat: FiltrationLattice, r: Point, M: Number, idle: bool):
    n = lat.space.n
    part = lat(r)
    beta = projects[0].rp.beta
    best = [M] * n
    arg = [None] * n
    for j, p in enumerate(projects):
        if r[j] >= lat.bounds[j]:
            continue
        ce = cond_expect(field[add_point(r, unit(lat.dim, j))], part, lat.space)
        h = p.rp.reward(r[j] + 1)
        for a in range(n):
            v = h[a] + beta * ce[a]
            if v > best[a]:
                best[a] = v
                arg[a] = j
    if idle:
        # engaging an exhausted project pays nothing and leaves the state unchanged
        best = [max(b, beta * x) for b, x in zip(best, field[r])]
    return best, arg


def bellman_operator(field: Mapping, projects: Sequence[Project], lat: FiltrationLattice, M: Number = 0) -> dict:
    return {r: tuple(_bellman_rhs(field, projects, lat, r, M, True)[0]) for r in lat.points()}


def bellman_residual(
    field: Mapping, projects: Sequence[Project], lat: FiltrationLattice, M: Number = 0, tol: Number | None = None
) -> CheckReport:
    """Worst ``|F - max(M, max_j h_j + beta E[F(s+e_j)|F(s)])|`` over the
    lattice with its location, plus the inequalities that go with it:
    ``F >= M``, ``F >= h_j + beta E[...]``, ``F = M`` where every index is
    at most ``M`` and equality through any project of strictly larger
    maximal index."""
    tol = _tol(projects) if tol is None else tol
    n = lat.space.n
    beta = projects[0].rp.beta
    idx = [index_sequence(p.rp, p.filt) for p in projects]
    worst = 0
    where = None
    flags = {"Q1": True, "Q2": True, "Q3": True, "Q4": True}
    first = {}
    for r in lat.points():
        rhs, _ = _bellman_rhs(field, projects, lat, r, M, False)
        F = field[r]
        for a in range(n):
            res = abs(F[a] - rhs[a])
            if res > worst:
                worst = res
                where = {"point": r, "atom": lat.space.atoms[a], "residual": F[a] - rhs[a]}
            if F[a] < M - tol:
                flags["Q1"] = False
                first.setdefault("Q1", {"point": r, "atom": lat.space.atoms[a]})
        part = lat(r)
        Ms = [[idx[j].M[min(r[j], projects[j].horizon)][a] for j in range(lat.dim)] for a in range(n)]
        for j, p in enumerate(projects):
            if r[j] >= lat.bounds[j]:
                continue
            ce = cond_expect(field[add_point(r, unit(lat.dim, j))], part, lat.space)
            h = p.rp.reward(r[j] + 1)
            for a in range(n):
                q = h[a] + beta * ce[a]
                if F[a] < q - tol:
                    flags["Q2"] = False
                    first.setdefault("Q2", {"point": r, "project": j, "atom": lat.space.atoms[a]})
                top = max(Ms[a])
                if Ms[a][j] == top and top > M and abs(F[a] - q) > tol:
                    flags["Q4"] = False
                    first.setdefault("Q4", {"point": r, "project": j, "atom": lat.space.atoms[a]})
        for a in range(n):
            if max(Ms[a]) <= M and abs(F[a] - M) > tol:
                flags["Q3"] = False
                first.setdefault("Q3", {"point": r, "atom": lat.space.atoms[a]})
    passed = worst <= tol and all(flags.values())
    details = dict(flags, failures=first)
    return CheckReport("bellman", passed, worst, where, details)


def bellman_probe(
    projects: Sequence[Project], lat: FiltrationLattice, M: Number = 0, iterations: int = 12, target: Mapping | None = None
) -> CheckReport:
    """Value iteration from the constant field ``K``; the sup-distance to
    the formula field must shrink at least by ``beta`` per step."""
    target = value_field(projects, lat, M) if target is None else target
    K = shared_bound(projects)
    if K is None:
        K = max(max(v) for v in target.values())
    beta = projects[0].rp.beta
    field = {r: (K + M,) * lat.space.n for r in lat.points()}

    def dist(f):
        return max(abs(x - y) for r in lat.points() for x, y in zip(f[r], target[r]))

    errs = [dist(field)]
    ok = True
    tol = _tol(projects)
    for _ in range(iterations):
        field = bellman_operator(field, projects, lat, M)
        errs.append(dist(field))
        if errs[-1] > beta * errs[-2] + tol:
            ok = False
    return CheckReport("bellman_probe", ok, errs[-1], None, {"errors": errs})


# ---------------------------------------------------------------------------
# decreasing rewards and the general value


def _stopped_expect(x: Sequence[Number], lat: FiltrationLattice, start: Sequence[int]) -> RandomVariable:
    return cond_expect(x, lat(tuple(start)), lat.space)


def clock_integrals(clock: OperationalClock) -> tuple:
    """``(int_0^inf (1 - beta^tau(m)) dm, (1-beta) sum_t beta^t N(t))`` per atom."""
    beta = clock.beta
    n = clock.n
    bps = clock.breakpoints
    edges = [0] + bps
    integral = [0] * n
    for k, lo in enumerate(edges):
        if k + 1 >= len(edges):
            break  # past the largest breakpoint tau = 0
        hi = edges[k + 1]
        rep = clock.zero_plus() if lo == 0 else lo
        tv = clock.tau(rep)
        for a in range(n):
            integral[a] += (1 - beta ** tv[a]) * (hi - lo)
    nform = [0] * n
    for t in range(clock.horizon):
        N = clock.N_at(t)
        for a in range(n):
            nform[a] += beta**t * N[a]
    return tuple(integral), tuple((1 - beta) * x for x in nform)


def decreasing_value(projects: Sequence[Project], start: Sequence[int], lat: FiltrationLattice) -> tuple:
    """The value with atomwise nonincreasing rewards from both closed
    forms.  Returns ``(value, report)``; the report fails if the forms
    disagree."""
    start = tuple(start)
    tol = _tol(projects)
    for i, p in enumerate(projects):
        for k in range(start[i] + 2, p.horizon + 1):
            if any(x > y + tol for x, y in zip(p.rp.reward(k), p.rp.reward(k - 1))):
                raise ValueError(f"project {i} rewards increase at t={k}")
    clock = operational_clock(projects, start)
    integ, nform = clock_integrals(clock)
    a = _stopped_expect(integ, lat, start)
    b = _stopped_expect(nform, lat, start)
    worst = max((abs(x - y) for x, y in zip(a, b)), default=0)
    return a, CheckReport("decreasing_forms", worst <= tol, worst, None, {"integral": a, "n_form": b})


def surrogate_projects(clock: OperationalClock) -> list:
    return [Project(rp, p.filt) for rp, p in zip(surrogate_rewards(clock), clock.projects)]


def envelope_value(T: AllocationStrategy, clock: OperationalClock, lat: FiltrationLattice) -> RandomVariable:
    """``(1-beta) E[sum_t beta^t max_i lower_i(s_i, T_i(t)) | F(s)]``."""
    beta = clock.beta
    acc = [0] * clock.n
    for t in range(clock.horizon):
        pts = T.point(t)
        for a in range(clock.n):
            acc[a] += beta**t * max(clock.lower(i, pts[a][i])[a] for i in range(clock.d))
    return _stopped_expect([(1 - beta) * x for x in acc], lat, clock.start)


def general_value(projects: Sequence[Project], lat: FiltrationLattice, start: Sequence[int]) -> dict:
    """All routes to the general value; ``agree`` is True when they match."""
    start = tuple(start)
    tol = _tol(projects)
    f4 = check_F4(lat, tol)
    clock = operational_clock(projects, start)
    T = build_sync_strategy(clock)
    sur = surrogate_projects(clock)
    dec, forms = decreasing_value(sur, start, lat)
    routes = {
        "product_integral": _stopped_expect(product_integral(projects, start), lat, start),
        "decreasing": dec,
        "sync_replay": _stopped_expect(reward_of(T, clock), lat, start),
        "sync_replay_surrogate": _stopped_expect(reward_of(T, clock, "decreasing"), lat, start),
        "clock_n_form": forms.details["n_form"],
    }
    ref = routes["decreasing"]
    worst = max(abs(x - y) for v in routes.values() for x, y in zip(v, ref))
    return {
        "routes": routes,
        "agree": worst <= tol,
        "worst": worst,
        "f4": f4.passed,
        "strategy": T,
        "clock": clock,
    }


# ---------------------------------------------------------------------------
# processes along a strategy


def _verdict(residuals: list, tol: Number) -> tuple:
    worst_up = max((r for row in residuals for r in row), default=0)
    worst_abs = max((abs(r) for row in residuals for r in row), default=0)
    if worst_abs <= tol:
        return "martingale", worst_abs
    if worst_up <= tol:
        return "supermartingale", worst_abs
    return "violated", worst_up


def _strategy_residuals(seq: Sequence[Sequence[Number]], T: AllocationStrategy, lat: FiltrationLattice) -> list:
    out = []
    for t in range(len(seq) - 1):
        part = stopped_partition(T.point(t), lat)
        ce = cond_expect(seq[t + 1], part, lat.space)
        out.append(tuple(c - v for c, v in zip(ce, seq[t])))
    return out


def q_process(T: AllocationStrategy, field: Mapping, projects: Sequence[Project], lat: FiltrationLattice) -> tuple:
    """``Q(t) = beta^t F(T(t)) + sum_{u<t} beta^u h_{i(u)}(T_i(u)+1)`` for
    ``t = 0..L`` and its verdict on the stopped filtration."""
    beta = projects[0].rp.beta
    n = lat.space.n
    Q = []
    running = [0] * n
    for t in range(T.horizon + 1):
        pts = T.point(t)
        Q.append(tuple(beta**t * field[pts[a]][a] + running[a] for a in range(n)))
        if t < T.horizon:
            for a in range(n):
                i = T.choices[a][t]
                running[a] += beta**t * projects[i].rp.reward(pts[a][i] + 1)[a]
    verdict, worst = _verdict(_strategy_residuals(Q, T, lat), _tol(projects))
    return Q, CheckReport("q_process", verdict != "violated", worst, None, {"verdict": verdict})


def klw_processes(T: AllocationStrategy, clock: OperationalClock, lat: FiltrationLattice) -> dict:
    """``K``, ``Lambda`` and ``W = K - Lambda`` along ``T`` for ``t = 0..L``."""
    beta = clock.beta
    n = clock.n
    tol = default_tol(beta)
    s = clock.start
    U = [u_martingale(p.rp, p.filt, s[i]) for i, p in enumerate(clock.projects)]
    curves = [value_curves(p.rp, p.filt) for p in clock.projects]

    def Y(i, k, a):
        low = clock.lower(i, k)[a]
        return curves[i][k][a](low) - low

    L = T.horizon
    K = [(0,) * n]
    Lam = [(0,) * n]
    for u in range(L):
        pts = T.point(u)
        kn, ln = list(K[-1]), list(Lam[-1])
        for a in range(n):
            i = T.choices[a][u]
            k = pts[a][i]
            kn[a] += beta ** (u - k) * (U[i][k + 1 - s[i]][a] - U[i][k - s[i]][a])
            h = clock.projects[i].rp.reward(k + 1)[a]
            ln[a] += beta**u * (h - (1 - beta) * clock.lower(i, k)[a])
        K.append(tuple(kn))
        Lam.append(tuple(ln))
    W = [tuple(k - l for k, l in zip(x, y)) for x, y in zip(K, Lam)]
    k_verdict, k_worst = _verdict(_strategy_residuals(K, T, lat), tol)
    telescopes = True
    for t in range(1, L + 1):
        pts = T.point(t)
        for a in range(n):
            i = T.choices[a][t - 1]
            if abs(W[t][a] - beta**t * Y(i, pts[a][i], a)) > tol:
                telescopes = False
    start_part = lat(tuple(s))
    lam_ce = cond_expect(Lam[-1], start_part, lat.space)
    checks = {
        "K_martingale": k_verdict == "martingale",
        "W_telescopes": telescopes,
        "W_terminal_zero": all(abs(x) <= tol for x in W[-1]),
        "Lambda_mean_zero": all(abs(x) <= tol for x in lam_ce),
    }
    return {
        "K": K,
        "Lambda": Lam,
        "W": W,
        "checks": checks,
        "report": CheckReport("klw", all(checks.values()), k_worst, None, checks),
    }


__all__ = [
    "bellman_operator",
    "bellman_probe",
    "bellman_residual",
    "clock_integrals",
    "decreasing_value",
    "envelope_value",
    "general_value",
    "klw_processes",
    "product_integral",
    "q_process",
    "shared_bound",
    "surrogate_projects",
    "value_field",
    "whittle_value",
]
