"""Gittins indices, their running minima and the identities tying them to
the stopping problem."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .oracle import DEFAULT_BUDGET, EnumerationBudget, forward_induction_index
from .prob_core import (
    INF,
    CheckReport,
    Number,
    Partition,
    RandomVariable,
    cond_expect,
    default_tol,
    is_close,
    martingale_residuals,
)
from .stopping import (
    RewardsProcess,
    _require,
    all_breakpoints,
    curve_roots,
    filt_at,
    sigma_left,
    sigma_opt,
    snell_value,
    value_curves,
)


def gittins_index(rp: RewardsProcess, filt: Sequence[Partition], t: int) -> RandomVariable:
    """``M(t) = sup{m: V(t;m) > m}`` per atom, read off the exact value curve."""
    if t >= rp.horizon:
        return rp.space.constant(0)
    return curve_roots(rp, filt)[t]


@dataclass(frozen=True)
class IndexSequence:
    M: tuple  # M(0..H)

    def lower(self, t: int, theta: int) -> RandomVariable:
        """``min_{t <= u <= theta} M(u)``; constant past the horizon."""
        H = len(self.M) - 1
        if theta < t:
            raise ValueError("lower(t, theta) needs t <= theta")
        us = range(min(t, H), min(theta, H) + 1)
        return tuple(min(self.M[u][a] for u in us) for a in range(len(self.M[0])))


def index_sequence(rp: RewardsProcess, filt: Sequence[Partition]) -> IndexSequence:
    return IndexSequence(tuple(gittins_index(rp, filt, t) for t in range(rp.horizon + 1)))


def lower_envelope(rp: RewardsProcess, filt: Sequence[Partition], t: int, theta: int) -> RandomVariable:
    return index_sequence(rp, filt).lower(t, theta)


def gittins_forward_induction(
    rp: RewardsProcess, filt: Sequence[Partition], t: int, budget: EnumerationBudget = DEFAULT_BUDGET
) -> RandomVariable:
    """``M(t)`` from the best reward rate over rules in ``S(t+1)``.

    Raises :class:`dynalloc.oracle.BudgetExceeded` past the cap."""
    _require(rp, filt, 0)
    return forward_induction_index(rp, filt, t, budget)


def check_right_inverse(
    rp: RewardsProcess,
    filt: Sequence[Partition],
    t: int,
    grid: Sequence[Number],
    lower: dict | None = None,
    tol: Number | None = None,
) -> CheckReport:
    """Checks that ``sigma(t;.)`` and the envelope ``lower(t,.)`` are right
    inverses, and that the envelope is flat across every jump of sigma.

    ``lower`` may override the envelope (``{theta: RandomVariable}``) to
    probe the check with a corrupted input."""
    tol = default_tol(rp.beta) if tol is None else tol
    H = rp.horizon
    n = rp.space.n
    seq = index_sequence(rp, filt)
    env = {th: seq.lower(t, th) for th in range(t, H + 1)}
    if lower:
        env.update(lower)
    worst = 0
    witness = None
    details = {"equivalence": True, "bracket": True, "jumps": True, "certified_jumps": []}

    def fail(kind, w):
        nonlocal witness
        details[kind] = False
        if witness is None:
            witness = dict(w, kind=kind)

    for m in grid:
        if m <= 0:
            continue  # sigma(t;0) is +inf by convention
        sig = sigma_opt(rp, filt, t, m, tol)
        for th in range(t, H + 1):
            for a in range(n):
                if abs(env[th][a] - m) <= tol:
                    continue  # undecidable within rounding; exact mode never skips
                if (sig[a] > th) != (env[th][a] > m):
                    fail("equivalence", {"m": m, "theta": th, "atom": rp.space.atoms[a]})
    for th in range(t, H + 1):
        for a in range(n):
            lv = env[th][a]
            if lv <= 0:
                continue  # both sides involve sigma(t;0) = +inf
            lo = sigma_opt(rp, filt, t, lv, tol)[a]
            hi = sigma_left(rp, filt, t, lv, tol)[a]
            if not (lo <= th < hi):
                fail("bracket", {"theta": th, "atom": rp.space.atoms[a], "sigma": lo, "sigma_left": hi})
    # along each jump the envelope equals the jump point on {sigma(m), ..., sigma(m-)-1}
    for m in all_breakpoints(rp, filt, t):
        if m <= 0:
            continue
        lo_s = sigma_opt(rp, filt, t, m, tol)
        hi_s = sigma_left(rp, filt, t, m, tol)
        for a in range(n):
            if lo_s[a] == hi_s[a]:
                continue
            top = min(hi_s[a], H + 1)
            for th in range(lo_s[a], top):
                gap = abs(env[min(th, H)][a] - m)
                worst = max(worst, gap)
                if gap > tol:
                    fail("jumps", {"m": m, "theta": th, "atom": rp.space.atoms[a]})
            details["certified_jumps"].append({"m": m, "atom": rp.space.atoms[a], "from": lo_s[a], "to": hi_s[a]})
    passed = details["equivalence"] and details["bracket"] and details["jumps"]
    return CheckReport("right_inverse", passed, worst, witness, details)


def restart_representation(rp: RewardsProcess, filt: Sequence[Partition], t: int, m: Number) -> tuple:
    """``(V(t;m), (1-beta) E[sum_{theta>=t} beta^(theta-t) max(m, lower(t,theta)) | F(t)])``.

    The sum is closed past the horizon, where the envelope is constant."""
    beta = rp.beta
    H = max(rp.horizon, t)
    seq = index_sequence(rp, filt)
    n = rp.space.n
    acc = [0] * n
    for th in range(t, H):
        low = seq.lower(t, th)
        for a in range(n):
            acc[a] += beta ** (th - t) * max(m, low[a])
    low = seq.lower(t, H)
    for a in range(n):
        acc[a] += max(m, low[a]) * beta ** (H - t) / (1 - beta)
    acc = [(1 - beta) * x for x in acc]
    rhs = cond_expect(acc, filt_at(filt, t), rp.space)
    return snell_value(rp, filt, t, m), rhs


def restart_at_zero(rp: RewardsProcess, filt: Sequence[Partition], t: int) -> tuple:
    """The ``m = 0`` form: ``V(t;0)``, the expected discounted rewards and
    the same with rewards replaced by ``(1-beta) lower(t,.)``."""
    beta = rp.beta
    seq = index_sequence(rp, filt)
    n = rp.space.n
    plain = [0] * n
    dec = [0] * n
    for th in range(t, rp.horizon):
        h = rp.reward(th + 1)
        low = seq.lower(t, th)
        for a in range(n):
            plain[a] += beta ** (th - t) * h[a]
            dec[a] += beta ** (th - t) * (1 - beta) * low[a]
    part = filt_at(filt, t)
    return (
        snell_value(rp, filt, t, 0),
        cond_expect(plain, part, rp.space),
        cond_expect(dec, part, rp.space),
    )


def u_martingale(rp: RewardsProcess, filt: Sequence[Partition], t: int) -> list:
    """``U(theta)`` for ``theta = t..H``; the process is constant afterwards."""
    if t > rp.horizon:
        raise ValueError("t must not exceed the horizon")
    beta = rp.beta
    seq = index_sequence(rp, filt)
    curves = value_curves(rp, filt)
    n = rp.space.n
    out = []
    running = [0] * n
    for th in range(t, rp.horizon + 1):
        low = seq.lower(t, th)
        gap = [beta**th * (curves[th][a](low[a]) - low[a]) for a in range(n)]
        out.append(tuple(gap[a] + running[a] for a in range(n)))
        h = rp.reward(th + 1)
        for a in range(n):
            running[a] += beta**th * (h[a] - (1 - beta) * low[a])
    return out


def check_u_martingale(rp: RewardsProcess, filt: Sequence[Partition], t: int, tol: Number | None = None) -> CheckReport:
    tol = default_tol(rp.beta) if tol is None else tol
    U = u_martingale(rp, filt, t)
    res = martingale_residuals(U, filt, rp.space, t)
    worst = max((abs(r) for step in res for r in step), default=0)
    start_zero = all(is_close(x, 0, tol) for x in U[0])
    passed = worst <= tol and start_zero
    return CheckReport("u_martingale", passed, worst, None if passed else {"start": U[0]}, {"U": U})


def check_index_agreement(
    rp: RewardsProcess, filt: Sequence[Partition], budget: EnumerationBudget = DEFAULT_BUDGET, tol: Number | None = None
) -> CheckReport:
    """Curve roots against forward induction for every ``t``."""
    tol = default_tol(rp.beta) if tol is None else tol
    worst = 0
    for t in range(rp.horizon + 1):
        a = gittins_index(rp, filt, t)
        b = gittins_forward_induction(rp, filt, t, budget)
        for k, (x, y) in enumerate(zip(a, b)):
            gap = abs(x - y)
            if gap > worst:
                worst = gap
            if gap > tol:
                return CheckReport("index_agreement", False, gap, {"t": t, "atom": rp.space.atoms[k], "root": x, "ratio": y})
    return CheckReport("index_agreement", True, worst)


def check_decreasing_identity(rp: RewardsProcess, filt: Sequence[Partition], tol: Number | None = None) -> CheckReport:
    """For atomwise nonincreasing rewards, ``(1-beta) lower(t,theta) = h(theta+1)``."""
    tol = default_tol(rp.beta) if tol is None else tol
    H = rp.horizon
    n = rp.space.n
    for th in range(1, H):
        if any(rp.reward(th + 1)[a] > rp.reward(th)[a] + tol for a in range(n)):
            return CheckReport("decreasing_identity", False, witness={"reason": "rewards not decreasing", "t": th + 1})
    seq = index_sequence(rp, filt)
    worst = 0
    for t in range(H):
        for th in range(t, H):
            low = seq.lower(t, th)
            h = rp.reward(th + 1)
            for a in range(n):
                gap = abs((1 - rp.beta) * low[a] - h[a])
                worst = max(worst, gap)
                if gap > tol:
                    return CheckReport(
                        "decreasing_identity", False, gap, {"t": t, "theta": th, "atom": rp.space.atoms[a]}
                    )
    return CheckReport("decreasing_identity", True, worst)


__all__ = [
    "INF",
    "IndexSequence",
    "check_decreasing_identity",
    "check_index_agreement",
    "check_right_inverse",
    "check_u_martingale",
    "gittins_forward_induction",
    "gittins_index",
    "index_sequence",
    "lower_envelope",
    "restart_at_zero",
    "restart_representation",
    "u_martingale",
]
