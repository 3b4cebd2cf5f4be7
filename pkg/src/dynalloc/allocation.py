"""Allocation strategies on a lattice, the operational clock ``(tau, N)``
and the strategy-class predicates tied to synchronization."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

from .gittins import IndexSequence, index_sequence
from .prob_core import (
    INF,
    CheckReport,
    FiltrationLattice,
    Number,
    Point,
    RandomVariable,
    add_point,
    default_tol,
    derive_axis_filtrations,
    is_close,
    is_stopping_point,
    merge_close,
    midpoint,
    stopped_partition,
    unit,
)
from .stopping import (
    RewardsProcess,
    all_breakpoints,
    check_rewards,
    left_limit_point,
    sigma_opt,
    value_curves,
)


@dataclass(frozen=True)
class Project:
    """Rewards of one project with the filtration its indices are computed on."""

    rp: RewardsProcess
    filt: tuple

    @property
    def horizon(self) -> int:
        return self.rp.horizon


def lattice_projects(lat: FiltrationLattice, rps: Sequence[RewardsProcess], large: bool = False) -> list:
    """Attach to each project its axis filtration ``F_i`` (or ``F^i``)."""
    if len(rps) != lat.dim:
        raise ValueError(f"expected {lat.dim} projects, got {len(rps)}")
    out = []
    for i, rp in enumerate(rps):
        if rp.space != lat.space:
            raise ValueError(f"project {i} lives on a different sample space")
        if rp.horizon != lat.bounds[i]:
            raise ValueError(f"project {i} has horizon {rp.horizon}, lattice bound is {lat.bounds[i]}")
        small, big = derive_axis_filtrations(lat, i)
        filt = big if large else small
        rep = check_rewards(rp, filt)
        if not rep.passed and rep.name == "predictability":
            raise ValueError(f"project {i} rewards are not predictable: {rep.witness}")
        out.append(Project(rp, tuple(filt)))
    return out


# ---------------------------------------------------------------------------
# strategies


@dataclass(frozen=True)
class AllocationStrategy:
    """A strategy from ``start`` given by the engaged project on every atom
    at every calendar time until all projects are exhausted."""

    start: tuple
    choices: tuple
    label: str = ""

    @property
    def horizon(self) -> int:
        return len(self.choices[0]) if self.choices else 0

    @cached_property
    def paths(self) -> tuple:
        out = []
        d = len(self.start)
        for seq in self.choices:
            r = tuple(self.start)
            path = [r]
            for j in seq:
                r = add_point(r, unit(d, j))
                path.append(r)
            out.append(tuple(path))
        return tuple(out)

    def point(self, t: int) -> tuple:
        """``T(t)`` per atom; frozen after exhaustion."""
        t = min(t, self.horizon)
        return tuple(p[t] for p in self.paths)

    def count(self, i: int, t: int) -> tuple:
        return tuple(r[i] for r in self.point(t))

    def engaged(self, t: int) -> tuple:
        return tuple(seq[t] for seq in self.choices)

    def decision_table(self, lat: FiltrationLattice) -> list:
        """Rows ``(t, point, block index in F(point), project)``."""
        rows = set()
        for a, seq in enumerate(self.choices):
            for t, j in enumerate(seq):
                r = self.paths[a][t]
                blk = lat(r).block_of(a)
                rows.add((t, r, lat(r).blocks.index(blk), j))
        return sorted(rows)

    @classmethod
    def from_paths(cls, start: tuple, paths: Sequence[Sequence[Point]], label: str = "") -> "AllocationStrategy":
        choices = []
        for path in paths:
            seq = []
            for u, v in zip(path, path[1:]):
                diff = [b - a for a, b in zip(u, v)]
                if sorted(diff) != [0] * (len(diff) - 1) + [1]:
                    raise ValueError(f"non-unit step from {u} to {v}")
                seq.append(diff.index(1))
            choices.append(tuple(seq))
        return cls(tuple(start), tuple(choices), label)


def calendar_horizon(lat: FiltrationLattice, start: tuple) -> int:
    return sum(b - s for b, s in zip(lat.bounds, start))


def simulate_policy(
    lat: FiltrationLattice, start: tuple, chooser: Callable[[int, Point, int, int | None], int], label: str = ""
) -> AllocationStrategy:
    """Runs ``chooser(t, r, atom, previous)`` on each atom until exhaustion.

    The chooser must only look at the atom through its block of ``F(r)``;
    :func:`validate_strategy` confirms that."""
    L = calendar_horizon(lat, start)
    choices = []
    for a in range(lat.space.n):
        r = tuple(start)
        prev = None
        seq = []
        for t in range(L):
            j = chooser(t, r, a, prev)
            seq.append(j)
            r = add_point(r, unit(lat.dim, j))
            prev = j
        choices.append(tuple(seq))
    return AllocationStrategy(tuple(start), tuple(choices), label)


def available(lat: FiltrationLattice, r: Point) -> list:
    return [j for j in range(lat.dim) if r[j] < lat.bounds[j]]


def round_robin(lat: FiltrationLattice, start: tuple) -> AllocationStrategy:
    def choose(t, r, a, prev):
        avail = available(lat, r)
        for k in range(lat.dim):
            j = (t + k) % lat.dim
            if j in avail:
                return j
        raise AssertionError("no project left")

    return simulate_policy(lat, start, choose, "round-robin")


def fixed_order(lat: FiltrationLattice, start: tuple, order: Sequence[int]) -> AllocationStrategy:
    """Exhausts the projects one after the other in ``order``."""

    def choose(t, r, a, prev):
        avail = available(lat, r)
        return next(j for j in order if j in avail)

    return simulate_policy(lat, start, choose, "order " + ",".join(map(str, order)))


def _validation_fail(cond: str, **w) -> CheckReport:
    return CheckReport("strategy", False, witness=dict(w, condition=cond))


def validate_strategy(T: AllocationStrategy, lat: FiltrationLattice) -> CheckReport:
    """The three defining conditions plus the derived stopping-point facts."""
    n = lat.space.n
    d = lat.dim
    if len(T.start) != d or any(not 0 <= s <= b for s, b in zip(T.start, lat.bounds)):
        return _validation_fail("start", start=T.start)
    if len(T.choices) != n:
        return _validation_fail("shape", reason="one choice sequence per atom required")
    L = calendar_horizon(lat, T.start)
    for a, seq in enumerate(T.choices):
        if len(seq) != L:
            return _validation_fail("shape", atom=lat.space.atoms[a], reason=f"length {len(seq)} != {L}")
        r = T.start
        for t, j in enumerate(seq):
            if not (isinstance(j, int) and 0 <= j < d) or r[j] >= lat.bounds[j]:
                return _validation_fail("unit_step", atom=lat.space.atoms[a], t=t, project=j)
            r = add_point(r, unit(d, j))
    # non-anticipativity: each decision event is F(r)-measurable on {T(t) = r}
    for t in range(L):
        pts = T.point(t)
        by_point: dict = {}
        for a, r in enumerate(pts):
            by_point.setdefault(r, []).append(a)
        for r, atoms in sorted(by_point.items()):
            part = lat(r)
            for j in sorted({T.choices[a][t] for a in atoms}):
                event = [a for a in atoms if T.choices[a][t] == j]
                if not part.contains_event(event):
                    blk = next(part.block_of(a) for a in event if not set(part.block_of(a)) <= set(event))
                    bad = next(a for a in blk if a not in event)
                    return _validation_fail("non_anticipativity", t=t, point=r, atom=lat.space.atoms[bad], project=j)
    prev = None
    for t in range(L + 1):
        nu = T.point(t)
        if not is_stopping_point(nu, lat):
            return _validation_fail("stopping_point", t=t)
        cur = stopped_partition(nu, lat)
        if prev is not None and not cur.refines(prev):
            return _validation_fail("stopped_filtration", t=t)
        prev = cur
    for i in range(d):
        big = derive_axis_filtrations(lat, i)[1]
        for t in range(L + 1):
            cnt = T.count(i, t)
            for k in set(cnt):
                if not big[k].contains_event([a for a in range(n) if cnt[a] == k]):
                    return _validation_fail("count_stopping_time", project=i, t=t, value=k)
    return CheckReport("strategy", True)


# ---------------------------------------------------------------------------
# operational clock


def _smallest_positive(points: Sequence[Number]) -> Number | None:
    pos = [b for b in points if b > 0]
    return min(pos) if pos else None


@dataclass(eq=False)
class OperationalClock:
    """``tau(m; s)`` and ``N(t; s)`` for a family of projects, exact per atom.

    ``breakpoints`` holds every value where some ``sigma_i(s_i; .)`` may
    jump; both ``tau`` and ``N`` are step functions with jumps among them."""

    projects: list
    start: tuple
    breakpoints: list
    indices: list  # IndexSequence per project
    grid: list
    N: list = field(default_factory=list)
    report: CheckReport | None = None
    _sig: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.projects)

    @property
    def n(self) -> int:
        return self.projects[0].rp.space.n

    @property
    def horizon(self) -> int:
        return sum(p.horizon - s for p, s in zip(self.projects, self.start))

    @property
    def beta(self) -> Number:
        return self.projects[0].rp.beta

    def sigma(self, i: int, m: Number) -> tuple:
        key = (i, m)
        if key not in self._sig:
            p = self.projects[i]
            self._sig[key] = sigma_opt(p.rp, p.filt, self.start[i], m, default_tol(p.rp.beta))
        return self._sig[key]

    def left_point(self, m: Number) -> Number:
        return left_limit_point(m, self.breakpoints, default_tol(self.beta))

    def sigma_left(self, i: int, m: Number) -> tuple:
        if m == 0:
            return (INF,) * self.n
        return self.sigma(i, self.left_point(m))

    def zero_plus(self) -> Number:
        b = _smallest_positive(self.breakpoints)
        return 1 if b is None else midpoint(b, 0)

    def sigma_zero_plus(self, i: int) -> tuple:
        return self.sigma(i, self.zero_plus())

    def tau(self, m: Number) -> tuple:
        out = [0] * self.n
        for i in range(self.d):
            for a, v in enumerate(self.sigma(i, m)):
                out[a] = out[a] + (v - self.start[i])
        return tuple(out)

    def tau_left(self, m: Number) -> tuple:
        return self.tau(self.left_point(m)) if m > 0 else (INF,) * self.n

    def N_at(self, t: int) -> RandomVariable:
        return self.N[min(t, len(self.N) - 1)]

    def lower(self, i: int, theta: int) -> RandomVariable:
        return self.indices[i].lower(self.start[i], max(theta, self.start[i]))

    def envelope(self, point: Point) -> RandomVariable:
        """``max_i lower_i(s_i, r_i)`` at a deterministic point ``r``."""
        return tuple(max(self.lower(i, point[i])[a] for i in range(self.d)) for a in range(self.n))

    def jumps(self, a: int) -> list:
        """``[(t_{j-1}, t_j, m_j), ...]`` on atom ``a``; the last ``t_j`` is INF."""
        out = []
        vals = [self.N_at(t)[a] for t in range(self.horizon + 1)]
        t0 = 0
        for t in range(1, len(vals)):
            if vals[t] != vals[t - 1]:
                out.append((t0, t, vals[t - 1]))
                t0 = t
        out.append((t0, INF, vals[-1]))
        return out


def operational_clock(
    projects: Sequence[Project], start: Sequence[int], extra_grid: Sequence[Number] = ()
) -> OperationalClock:
    """Builds ``tau`` and ``N`` exactly and verifies their jump structure."""
    start = tuple(start)
    if len(start) != len(projects):
        raise ValueError("start point dimension does not match the number of projects")
    bps = set()
    for p, s in zip(projects, start):
        if not 0 <= s <= p.horizon:
            raise ValueError(f"start {s} outside 0..{p.horizon}")
        bps.update(b for b in all_breakpoints(p.rp, p.filt, s) if b > 0)
    bps = merge_close(bps, default_tol(projects[0].rp.beta))
    indices = [index_sequence(p.rp, p.filt) for p in projects]
    bound = max((p.rp.reward_bound for p in projects if p.rp.reward_bound is not None), default=None)
    top = max([0] + bps + ([bound] if bound is not None else [])) + 1
    grid = set(bps) | {top} | set(m for m in extra_grid if m > 0)
    edges = [0] + bps + [top]
    grid.update(midpoint(lo, hi) for lo, hi in zip(edges, edges[1:]))
    clock = OperationalClock(list(projects), start, bps, indices, sorted(grid))
    L = clock.horizon
    # intervals (0,b1), [b1,b2), ..., [bk, inf) with a representative each
    reps = [(0, clock.zero_plus())] + [(b, b) for b in bps]
    taus = [clock.tau(rep) for _, rep in reps]
    for t in range(L + 1):
        row = []
        for a in range(clock.n):
            row.append(next(left for (left, _), tv in zip(reps, taus) if tv[a] <= t))
        clock.N.append(tuple(row))
    clock.report = check_clock(clock)
    return clock


def check_clock(clock: OperationalClock) -> CheckReport:
    """``tau(m) > t <=> m < N(t)`` on the grid, ``N(t) = 0`` past the
    calendar horizon and ``N`` flat at each jump value of ``tau``."""
    L = clock.horizon
    for m in clock.grid:
        tv = clock.tau(m)
        for t in range(L + 1):
            for a in range(clock.n):
                if (tv[a] > t) != (m < clock.N_at(t)[a]):
                    return CheckReport("clock", False, witness={"kind": "equivalence", "m": m, "t": t, "atom": a})
    if any(x != 0 for x in clock.N_at(L)):
        return CheckReport("clock", False, witness={"kind": "terminal", "t": L})
    for m in clock.breakpoints:
        lo = clock.tau(m)
        hi = clock.tau_left(m)
        for a in range(clock.n):
            for t in range(lo[a], min(hi[a], L + 1)):
                if clock.N_at(t)[a] != m:
                    return CheckReport("clock", False, witness={"kind": "flat", "m": m, "t": t, "atom": a})
    return CheckReport("clock", True)


# ---------------------------------------------------------------------------
# the synchronization strategy


@dataclass(frozen=True)
class SyncStep:
    t: int
    N: Number
    y: tuple  # y_0..y_d, empty in the zero tail
    k: int | None
    point: Point


def sync_construction(clock: OperationalClock) -> list:
    """Per atom the list of :class:`SyncStep` for ``t = 0..L``.

    At ``t = tau(0+)`` every project sits at ``sigma_i(0+)``.  From then on
    the lowest-index project with capacity left is engaged, which keeps
    every identity for ``m > 0`` intact."""
    d = clock.d
    L = clock.horizon
    bounds = [p.horizon for p in clock.projects]
    out = []
    for a in range(clock.n):
        steps = [SyncStep(0, clock.N_at(0)[a], (), None, clock.start)]
        for t in range(1, L + 1):
            m = clock.N_at(t)[a]
            if m == 0 and steps[-1].N > 0:
                # t = tau(0+): every project sits at sigma_i(0+)
                pt = tuple(clock.sigma_zero_plus(i)[a] for i in range(d))
                steps.append(SyncStep(t, m, (), None, pt))
                continue
            if m == 0:
                prev = list(steps[-1].point)
                j = next(j for j in range(d) if prev[j] < bounds[j])
                prev[j] += 1
                steps.append(SyncStep(t, m, (), None, tuple(prev)))
                continue
            sig = [clock.sigma(i, m)[a] for i in range(d)]
            sigl = [clock.sigma_left(i, m)[a] for i in range(d)]
            y = [sum(sig[i] - clock.start[i] for i in range(d))]
            for i in range(d):
                y.append(y[-1] + sigl[i] - sig[i])
            k = next(k for k in range(1, d + 1) if y[k - 1] <= t < y[k])
            pt = []
            for i in range(d):
                if i < k - 1:
                    pt.append(sigl[i])
                elif i == k - 1:
                    pt.append(sig[i] + t - y[k - 1])
                else:
                    pt.append(sig[i])
            steps.append(SyncStep(t, m, tuple(y), k, tuple(pt)))
        out.append(steps)
    return out


def build_sync_strategy(clock: OperationalClock) -> AllocationStrategy:
    steps = sync_construction(clock)
    paths = [[s.point for s in row] for row in steps]
    return AllocationStrategy.from_paths(clock.start, paths, "sync")


def check_Y_zero(clock: OperationalClock, tol: Number = 0) -> CheckReport:
    """``Y_i(t) = V_i(T*_i(t); lower) - lower = 0`` on the windows
    ``{tau(N(u)), ..., y_{i-1}(u)}`` and ``{y_i(u), ..., tau(N(u)-)}``."""
    steps = sync_construction(clock)
    curves = [value_curves(p.rp, p.filt) for p in clock.projects]
    checked = 0
    for a, row in enumerate(steps):
        for s in row:
            if not s.y:
                continue
            windows = []
            for i in range(clock.d):
                windows.append((i, range(s.y[0], s.y[i] + 1)))
                windows.append((i, range(s.y[i + 1], s.y[-1] + 1)))
            for i, ts in windows:
                for t in ts:
                    if t > clock.horizon:
                        continue
                    Ti = row[t].point[i]
                    low = clock.lower(i, Ti)[a]
                    y = curves[i][Ti][a](low) - low
                    checked += 1
                    if abs(y) > tol:
                        return CheckReport("Y_zero", False, abs(y), {"atom": a, "project": i, "t": t})
    return CheckReport("Y_zero", True, details={"checked": checked})


# ---------------------------------------------------------------------------
# predicates


def satisfies_synchronization(T: AllocationStrategy, clock: OperationalClock, left: bool = False) -> bool:
    """The synchronization identity on every grid ``m > 0`` and every
    ``t <= L``; ``left`` uses the left limits ``sigma_i(m-)``, ``tau(m-)``."""
    d = clock.d
    for m in clock.grid:
        if m <= 0:
            continue
        sig = [clock.sigma_left(i, m) if left else clock.sigma(i, m) for i in range(d)]
        tv = clock.tau_left(m) if left else clock.tau(m)
        for t in range(clock.horizon + 1):
            pts = T.point(t)
            for a in range(clock.n):
                lhs = sum(min(pts[a][i] - clock.start[i], sig[i][a] - clock.start[i]) for i in range(d))
                if lhs != min(t, tv[a]):
                    return False
    return True


def _per_m_split(T, clock) -> bool:
    for m in clock.grid:
        if m <= 0:
            continue
        tv = clock.tau(m)
        for a in range(clock.n):
            pt = T.paths[a][tv[a]]
            if any(pt[i] != clock.sigma(i, m)[a] for i in range(clock.d)):
                return False
    return True


def _bracket(T, clock) -> bool:
    for t in range(clock.horizon + 1):
        N = clock.N_at(t)
        pts = T.point(t)
        for a in range(clock.n):
            m = N[a]
            for i in range(clock.d):
                if m > 0:
                    lo, hi = clock.sigma(i, m)[a], clock.sigma_left(i, m)[a]
                else:
                    lo, hi = clock.sigma_zero_plus(i)[a], INF
                if not lo <= pts[a][i] <= hi:
                    return False
    return True


def _envelope_at(T, clock, t) -> list:
    pts = T.point(t)
    return [max(clock.lower(i, pts[a][i])[a] for i in range(clock.d)) for a in range(clock.n)]


def classify_strategy(T: AllocationStrategy, clock: OperationalClock) -> dict:
    """Literal atomwise evaluation of each strategy property.

    ``meta_ok`` is False when the five synchronization-equivalent flags
    disagree, when an index-type strategy is not synchronized, or when a
    synchronized minimal-switching strategy is not of index type."""
    d = clock.d
    L = clock.horizon
    tol = default_tol(clock.beta)
    flags = {
        "sync": satisfies_synchronization(T, clock),
        "sync_left": satisfies_synchronization(T, clock, left=True),
        "per_m_split": _per_m_split(T, clock),
        "bracket": _bracket(T, clock),
    }
    dual = True
    dual_ineq = True
    for t in range(L + 1):
        env = _envelope_at(T, clock, t)
        N = clock.N_at(t)
        for a in range(clock.n):
            if not is_close(env[a], N[a], tol):
                dual = False
            if env[a] < N[a] - tol:
                dual_ineq = False
    flags["dual_opt"] = dual
    flags["dual_inequality"] = dual_ineq
    lower_index = True
    index_type = True
    for t in range(L):
        pts = T.point(t)
        eng = T.engaged(t)
        for a in range(clock.n):
            i = eng[a]
            lows = [clock.lower(j, pts[a][j])[a] for j in range(d)]
            if lows[i] < max(lows) - tol:
                lower_index = False
            Ms = [clock.indices[j].M[pts[a][j]][a] for j in range(d)]
            if Ms[i] < max(Ms) - tol:
                index_type = False
    flags["lower_index"] = lower_index
    flags["index_type"] = index_type
    minimal = True
    for t in range(L - 1):
        nxt = T.point(t + 1)
        for a in range(clock.n):
            i = T.choices[a][t]
            r = nxt[a]
            if r[i] >= clock.projects[i].horizon:
                continue  # an exhausted project cannot be engaged again
            lows = [clock.lower(j, r[j])[a] for j in range(d)]
            if lows[i] >= max(lows) - tol and T.choices[a][t + 1] != i:
                minimal = False
    flags["minimal_switching"] = minimal
    five = [flags[k] for k in ("sync", "per_m_split", "bracket", "dual_opt", "lower_index")]
    meta = len(set(five)) == 1 and flags["sync"] == flags["sync_left"] and dual_ineq
    if flags["index_type"] and not flags["sync"]:
        meta = False
    if flags["sync"] and flags["minimal_switching"] and not flags["index_type"]:
        meta = False
    flags["meta_ok"] = meta
    return flags


def index_policy(lat: FiltrationLattice, clock: OperationalClock, sticky: bool = False) -> AllocationStrategy:
    """Engages a project of maximal current index; ties go to the lowest
    index, or to the previously engaged project when ``sticky``."""

    def choose(t, r, a, prev):
        avail = available(lat, r)
        Ms = {j: clock.indices[j].M[r[j]][a] for j in avail}
        best = max(Ms.values()) - default_tol(clock.beta)
        if sticky and prev in Ms and Ms[prev] >= best:
            return prev
        return min(j for j in avail if Ms[j] >= best)

    return simulate_policy(lat, clock.start, choose, "index-sticky" if sticky else "index")


# ---------------------------------------------------------------------------
# rewards


def reward_of(T: AllocationStrategy, clock: OperationalClock, convention: str = "general") -> RandomVariable:
    """``R(T)``: engaging ``i`` at calendar ``t`` pays ``beta^t h_i(T_i(t)+1)``;
    the ``"decreasing"`` convention pays ``(1-beta) lower_i(s_i, T_i(t))``."""
    if convention not in ("general", "decreasing"):
        raise ValueError(f"unknown reward convention {convention!r}")
    beta = clock.beta
    out = []
    for a in range(clock.n):
        acc = 0
        for t, i in enumerate(T.choices[a]):
            k = T.paths[a][t][i]
            if convention == "general":
                v = clock.projects[i].rp.reward(k + 1)[a]
            else:
                v = (1 - beta) * clock.lower(i, k)[a]
            acc += beta**t * v
        out.append(acc)
    return tuple(out)


def surrogate_rewards(clock: OperationalClock) -> list:
    """Decreasing rewards ``h'_i(u+1) = (1-beta) lower_i(s_i, u)`` as
    :class:`RewardsProcess` objects.

    Entries before ``s_i`` are never paid; they hold ``(1-beta) M_i(u)``
    so that the sequence stays predictable."""
    out = []
    for i, p in enumerate(clock.projects):
        rp = p.rp
        s = clock.start[i]
        h = [
            tuple((1 - rp.beta) * x for x in (clock.lower(i, u) if u >= s else clock.indices[i].M[u]))
            for u in range(rp.horizon)
        ]
        out.append(RewardsProcess(rp.space, tuple(h), rp.beta, rp.reward_bound))
    return out


__all__ = [
    "AllocationStrategy",
    "IndexSequence",
    "OperationalClock",
    "Project",
    "SyncStep",
    "available",
    "build_sync_strategy",
    "calendar_horizon",
    "check_Y_zero",
    "check_clock",
    "classify_strategy",
    "fixed_order",
    "index_policy",
    "lattice_projects",
    "operational_clock",
    "reward_of",
    "round_robin",
    "satisfies_synchronization",
    "simulate_policy",
    "surrogate_rewards",
    "sync_construction",
    "validate_strategy",
]
