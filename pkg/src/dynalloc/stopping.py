"""One-parameter optimal stopping with an exit reward ``m``.

``V(t;m)`` is computed by backward recursion; the map ``m -> V(t;m)`` is
also built exactly as a continuous piecewise-linear function per atom,
which exposes its breakpoints (the Gittins indices) without bisection.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .prob_core import (
    INF,
    CheckReport,
    FiniteSpace,
    Number,
    Partition,
    RandomVariable,
    cond_expect,
    default_tol,
    discount,
    is_close,
    martingale_residuals,
    merge_close,
    midpoint,
)

Filtration = tuple  # tuple of Partition, index = time


@dataclass(frozen=True)
class RewardsProcess:
    """Predictable rewards ``h(1..H)`` on ``space``; ``h[k]`` holds ``h(k+1)``.

    Rewards past the horizon are zero.  ``reward_bound`` is the constant
    ``K`` with ``0 <= h <= K(1-beta)``; ``None`` skips the bound check."""

    space: FiniteSpace
    h: tuple
    beta: Number
    reward_bound: Number | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "h", tuple(tuple(x) for x in self.h))
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        for k, x in enumerate(self.h):
            if len(x) != self.space.n:
                raise ValueError(f"h({k + 1}) has {len(x)} entries, expected {self.space.n}")

    @property
    def horizon(self) -> int:
        return len(self.h)

    def reward(self, t: int) -> RandomVariable:
        """``h(t)``; zero outside ``1..H``."""
        if 1 <= t <= self.horizon:
            return self.h[t - 1]
        return self.space.constant(0)


def filt_at(filt: Sequence[Partition], t: int) -> Partition:
    return filt[min(t, len(filt) - 1)]


def check_rewards(rp: RewardsProcess, filt: Sequence[Partition], tol: Number = 0) -> CheckReport:
    """Predictability and the ``0 <= h <= K(1-beta)`` bound."""
    if len(filt) < 1:
        return CheckReport("rewards", False, witness={"reason": "empty filtration"})
    for t in range(1, rp.horizon + 1):
        if not filt_at(filt, t - 1).is_measurable(rp.reward(t), tol):
            return CheckReport("predictability", False, witness={"t": t})
        for a, v in enumerate(rp.reward(t)):
            if v < 0 - tol:
                return CheckReport("bound", False, witness={"t": t, "atom": rp.space.atoms[a], "value": v})
            if rp.reward_bound is not None and v > rp.reward_bound * (1 - rp.beta) + tol:
                return CheckReport(
                    "bound",
                    False,
                    witness={"t": t, "atom": rp.space.atoms[a], "value": v, "limit": rp.reward_bound * (1 - rp.beta)},
                )
    return CheckReport("rewards", True)


@lru_cache(maxsize=4096)
def _predictable(rp: RewardsProcess, filt: Filtration) -> bool:
    rep = check_rewards(rp, filt, tol=default_tol(rp.beta))
    return rep.passed or rep.name != "predictability"


def _require(rp: RewardsProcess, filt: Sequence[Partition], m: Number) -> None:
    if m < 0:
        raise ValueError("exit reward m must be non-negative")
    if not _predictable(rp, tuple(filt)):
        raise ValueError("rewards are not predictable with respect to the filtration")


# ---------------------------------------------------------------------------
# fixed-m recursion


@lru_cache(maxsize=8192)
def _table(rp: RewardsProcess, filt: Filtration, m: Number) -> tuple:
    """``V(theta;m)`` for ``theta = 0..H``."""
    H = rp.horizon
    space = rp.space
    V = [None] * (H + 1)
    V[H] = space.constant(m)
    for th in range(H - 1, -1, -1):
        ce = cond_expect(V[th + 1], filt_at(filt, th), space)
        h = rp.reward(th + 1)
        V[th] = tuple(max(m, h[a] + rp.beta * ce[a]) for a in range(space.n))
    return tuple(V)


def value_table(rp: RewardsProcess, filt: Sequence[Partition], m: Number) -> tuple:
    _require(rp, filt, m)
    return _table(rp, tuple(filt), m)


def snell_value(rp: RewardsProcess, filt: Sequence[Partition], t: int, m: Number) -> RandomVariable:
    """``V(t;m)``, the optimal expected discounted reward with exit reward m."""
    V = value_table(rp, filt, m)
    return V[min(t, rp.horizon)]


def sigma_opt(rp: RewardsProcess, filt: Sequence[Partition], t: int, m: Number, tol: Number = 0) -> tuple:
    """Least ``theta >= t`` with ``V(theta;m) = m``; ``INF`` when ``m = 0``."""
    if m == 0:
        _require(rp, filt, m)
        return (INF,) * rp.space.n
    V = value_table(rp, filt, m)
    H = rp.horizon
    out = []
    for a in range(rp.space.n):
        th = t
        while th < H and not is_close(V[th][a], m, tol):
            th += 1
        out.append(th)
    return tuple(out)


def right_derivative_V(rp: RewardsProcess, filt: Sequence[Partition], t: int, m: Number) -> RandomVariable:
    """``E[beta^(sigma(t;m)-t) | F(t)]``; at ``m = 0`` the right limit
    ``sigma(t;0+)`` is used, so this is the true right derivative."""
    if m == 0:
        pos = [b for b in all_breakpoints(rp, filt, 0) if b > 0]
        m = midpoint(min(pos), 0) if pos else 1
    sig = sigma_opt(rp, filt, t, m, default_tol(rp.beta))
    x = tuple(discount(rp.beta, s - t) if s != INF else 0 for s in sig)
    return cond_expect(x, filt_at(filt, t), rp.space)


def prefix_rewards(rp: RewardsProcess, upto: int) -> list:
    """``S[k][a] = sum_{u<k} beta^u h(u+1)(a)`` for ``k = 0..upto``."""
    n = rp.space.n
    S = [(0,) * n]
    for u in range(upto):
        h = rp.reward(u + 1)
        bu = rp.beta**u
        S.append(tuple(S[-1][a] + bu * h[a] for a in range(n)))
    return S


def z_process(rp: RewardsProcess, filt: Sequence[Partition], m: Number) -> list:
    """``Z(t;m) = sum_{u<t} beta^u h(u+1) + beta^t V(t;m)`` for ``t = 0..H``."""
    V = value_table(rp, filt, m)
    S = prefix_rewards(rp, rp.horizon)
    return [
        tuple(S[t][a] + rp.beta**t * V[t][a] for a in range(rp.space.n)) for t in range(rp.horizon + 1)
    ]


def stopped_z(rp: RewardsProcess, filt: Sequence[Partition], t: int, m: Number, z: Sequence | None = None) -> list:
    """``Z(theta ^ sigma(t;m); m)`` for ``theta = t..H``."""
    Z = list(z) if z is not None else z_process(rp, filt, m)
    sig = sigma_opt(rp, filt, t, m, default_tol(rp.beta))
    H = rp.horizon
    out = []
    for th in range(t, H + 1):
        out.append(tuple(Z[min(th, sig[a], H)][a] for a in range(rp.space.n)))
    return out


def check_stopped_martingale(
    rp: RewardsProcess,
    filt: Sequence[Partition],
    t: int,
    m: Number,
    tol: Number = 0,
    z: Sequence | None = None,
) -> CheckReport:
    """One-step residuals of the stopped ``Z`` process from time ``t``.

    ``z`` overrides the computed ``Z(0..H)`` (used to plant perturbations)."""
    seq = stopped_z(rp, filt, t, m, z)
    res = martingale_residuals(seq, filt, rp.space, start=t)
    worst = 0
    witness = None
    for j, r in enumerate(res):
        for a, v in enumerate(r):
            if abs(v) > worst:
                worst = abs(v)
            if abs(v) > tol and witness is None:
                witness = {"theta": t + j, "atom": rp.space.atoms[a], "residual": v}
    return CheckReport("stopped-martingale", witness is None, worst=worst, witness=witness)


# ---------------------------------------------------------------------------
# piecewise-linear value curves


class PiecewiseLinear:
    """Continuous piecewise-linear function on ``[0, inf)``.

    Piece ``k`` is ``a_k + b_k m`` on ``[xs[k], xs[k+1])``; the last piece
    extends to infinity.  ``xs[0] == 0``."""

    __slots__ = ("xs", "pieces")

    def __init__(self, xs: Sequence[Number], pieces: Sequence[tuple]):
        self.xs = tuple(xs)
        self.pieces = tuple(pieces)

    @classmethod
    def identity(cls) -> "PiecewiseLinear":
        return cls((0,), ((0, 1),))

    def __call__(self, m: Number) -> Number:
        a, b = self.pieces[bisect.bisect_right(self.xs, m) - 1]
        return a + b * m

    def slope(self, m: Number) -> Number:
        """Right derivative at ``m``."""
        return self.pieces[bisect.bisect_right(self.xs, m) - 1][1]

    def breakpoints(self) -> tuple:
        return self.xs[1:]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PiecewiseLinear) and self.xs == other.xs and self.pieces == other.pieces

    def __hash__(self) -> int:
        return hash((self.xs, self.pieces))

    @staticmethod
    def combine(terms: Sequence[tuple], const: Number = 0) -> "PiecewiseLinear":
        """``const + sum w * f`` over ``(w, f)`` pairs."""
        xs = sorted(set().union(*(f.xs for _, f in terms))) if terms else [0]
        pieces = []
        for x in xs:
            a_tot, b_tot = const, 0
            for w, f in terms:
                a, b = f.pieces[bisect.bisect_right(f.xs, x) - 1]
                a_tot += w * a
                b_tot += w * b
            pieces.append((a_tot, b_tot))
        return PiecewiseLinear(xs, pieces)

    def max_identity(self) -> tuple:
        """``max(m, g(m))`` for ``g`` with slopes below 1 and ``g(0) >= 0``.

        Returns the curve and the crossing point ``m*`` (``g(m) > m`` on
        ``[0, m*)``, ``g(m) <= m`` after)."""
        a0, _ = self.pieces[0]
        if a0 <= 0:
            return PiecewiseLinear.identity(), 0
        xs, pieces = [], []
        for k, (a, b) in enumerate(self.pieces):
            lo = self.xs[k]
            hi = self.xs[k + 1] if k + 1 < len(self.xs) else None
            root = a / (1 - b)
            if hi is None or root < hi:
                if root > lo:
                    xs.append(lo)
                    pieces.append((a, b))
                xs.append(root)
                pieces.append((0, 1))
                return PiecewiseLinear(xs, pieces), root
            xs.append(lo)
            pieces.append((a, b))
        raise AssertionError("unreachable: last piece always crosses")


@lru_cache(maxsize=2048)
def _curves(rp: RewardsProcess, filt: Filtration) -> tuple:
    H = rp.horizon
    space = rp.space
    n = space.n
    ident = PiecewiseLinear.identity()
    curves = [None] * (H + 1)
    roots = [None] * (H + 1)
    curves[H] = (ident,) * n
    roots[H] = (0,) * n
    for th in range(H - 1, -1, -1):
        fine = filt_at(filt, th + 1)
        cur = [None] * n
        rt = [None] * n
        h = rp.reward(th + 1)
        for blk in filt_at(filt, th).blocks:
            mass = space.prob_of(blk)
            terms = []
            for sub in fine.restrict(blk):
                w = space.prob_of(sub) / mass
                terms.append((rp.beta * w, curves[th + 1][sub[0]]))
            g = PiecewiseLinear.combine(terms, h[blk[0]])
            v, root = g.max_identity()
            for a in blk:
                cur[a] = v
                rt[a] = root
        curves[th] = tuple(cur)
        roots[th] = tuple(rt)
    return tuple(curves), tuple(roots)


def value_curves(rp: RewardsProcess, filt: Sequence[Partition]) -> tuple:
    """Per time ``theta = 0..H`` a tuple of per-atom curves ``m -> V(theta;m)``."""
    _require(rp, filt, 0)
    return _curves(rp, tuple(filt))[0]


def curve_roots(rp: RewardsProcess, filt: Sequence[Partition]) -> tuple:
    """Per time the root of ``V(theta;m) = m`` (``sup{m: V > m}``)."""
    _require(rp, filt, 0)
    return _curves(rp, tuple(filt))[1]


def all_breakpoints(rp: RewardsProcess, filt: Sequence[Partition], t: int = 0) -> list:
    """Sorted union of breakpoints of ``V(theta;.)`` over ``theta >= t``."""
    cs = value_curves(rp, filt)
    pts = set()
    for th in range(t, rp.horizon + 1):
        for c in cs[th]:
            pts.update(c.breakpoints())
    return merge_close(pts, default_tol(rp.beta))


def left_limit_point(m: Number, breakpoints: Sequence[Number], tol: Number = 0) -> Number:
    """A point in ``(b, m)`` where ``b`` is the largest breakpoint below ``m``
    (breakpoints within ``tol`` of ``m`` count as ``m`` itself)."""
    below = [b for b in breakpoints if b < m - tol]
    lo = max(below) if below else 0
    return midpoint(lo, m)


def sigma_left(rp: RewardsProcess, filt: Sequence[Partition], t: int, m: Number, tol: Number = 0) -> tuple:
    """Left limit ``sigma(t;m-)``; ``INF`` at ``m = 0``."""
    if m == 0:
        return (INF,) * rp.space.n
    return sigma_opt(rp, filt, t, left_limit_point(m, all_breakpoints(rp, filt, 0), tol), tol)


def m_grid(rp: RewardsProcess, filt: Sequence[Partition], t: int = 0, top: Number | None = None) -> list:
    """Breakpoints, midpoints between them, zero and one point above all."""
    bps = [0] + [b for b in all_breakpoints(rp, filt, t) if b > 0]
    bps = sorted(set(bps))
    hi = (top if top is not None else (bps[-1] if bps else 0)) + 1
    grid = set(bps)
    for lo, up in zip(bps, bps[1:] + [hi]):
        grid.add(midpoint(lo, up))
    grid.add(hi)
    return sorted(grid)


def check_right_derivative(
    rp: RewardsProcess, filt: Sequence[Partition], t: int, grid: Sequence[Number], tol: Number | None = None
) -> CheckReport:
    """Secant slopes of ``V(t;.)`` over steps shorter than the distance to
    the next breakpoint equal ``E[beta^(sigma(t;m)-t) | F(t)]``."""
    tol = default_tol(rp.beta) if tol is None else tol
    bps = all_breakpoints(rp, filt, 0)
    worst = 0
    for m in grid:
        above = [b for b in bps if b > m + tol]
        step = midpoint(min(above), m) - m if above else 1
        lo = snell_value(rp, filt, t, m)
        hi = snell_value(rp, filt, t, m + step)
        rd = right_derivative_V(rp, filt, t, m)
        for a in range(rp.space.n):
            gap = abs((hi[a] - lo[a]) / step - rd[a])
            worst = max(worst, gap)
            if gap > tol:
                return CheckReport("right_derivative", False, gap, {"t": t, "m": m, "atom": rp.space.atoms[a]})
    return CheckReport("right_derivative", True, worst)
