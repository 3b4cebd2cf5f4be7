"""Brute-force ground truth on tiny instances.

Stopping rules and allocation strategies are enumerated exhaustively and
lazily in canonical order (time, block, choice); values are literal
blockwise maxima of conditional expectations.  Nothing here uses the
backward recursions of the engine, so agreement is a genuine cross-check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

from .prob_core import INF, FiniteSpace, FiltrationLattice, Number, Partition, RandomVariable, add_point, unit
from .stopping import RewardsProcess, filt_at


class BudgetExceeded(RuntimeError):
    """Raised when an enumeration would exceed its budget."""


@dataclass(frozen=True)
class EnumerationBudget:
    max_rules: int = 200_000
    max_atoms: int = 64
    max_horizon: int = 8
    max_d: int = 3

    def admit(self, count: int, atoms: int = 0, horizon: int = 0, d: int = 1) -> None:
        if atoms > self.max_atoms or horizon > self.max_horizon or d > self.max_d:
            raise BudgetExceeded(f"instance caps exceeded (atoms={atoms}, horizon={horizon}, d={d})")
        if count > self.max_rules:
            raise BudgetExceeded(f"{count} objects exceed the budget of {self.max_rules}")


DEFAULT_BUDGET = EnumerationBudget()


@dataclass(frozen=True)
class StoppingRule:
    """A stopping rule from ``start``: ``times[a]`` is the stopping time on
    atom ``a`` (``INF`` for never, ``None`` outside the enumerated atoms)."""

    start: int
    times: tuple


# ---------------------------------------------------------------------------
# stopping rules


def _rule_count(filt: Sequence[Partition], th: int, atoms: tuple, horizon: int) -> int:
    if th >= horizon:
        return 2  # stop at the horizon or never
    cont = 1
    for sub in filt_at(filt, th + 1).restrict(atoms):
        cont *= _rule_count(filt, th + 1, sub, horizon)
    return 1 + cont


def count_stopping_rules(filt: Sequence[Partition], t: int, horizon: int, atoms: Sequence[int] | None = None) -> int:
    """Closed-form census: ``prod over blocks of F(t)`` of ``1 + prod(children)``."""
    atoms = tuple(range(filt[0].n)) if atoms is None else tuple(atoms)
    total = 1
    for blk in filt_at(filt, t).restrict(atoms):
        total *= _rule_count(filt, t, blk, horizon)
    return total


def _rules(filt: Sequence[Partition], th: int, atoms: tuple, horizon: int) -> Iterator[tuple]:
    """Assignments ``((atom, time), ...)`` on ``atoms``, all decided at ``th``."""
    yield tuple((a, th) for a in atoms)
    if th >= horizon:
        yield tuple((a, INF) for a in atoms)
        return
    children = [list(_rules(filt, th + 1, sub, horizon)) for sub in filt_at(filt, th + 1).restrict(atoms)]
    for combo in itertools.product(*children):
        yield tuple(itertools.chain.from_iterable(combo))


def enumerate_stopping_rules(
    filt: Sequence[Partition],
    t: int,
    horizon: int,
    atoms: Sequence[int] | None = None,
    budget: EnumerationBudget = DEFAULT_BUDGET,
) -> Iterator[StoppingRule]:
    """Every adapted rule with values in ``{t..horizon} u {INF}`` exactly once."""
    n = filt[0].n
    atoms = tuple(range(n)) if atoms is None else tuple(sorted(atoms))
    budget.admit(count_stopping_rules(filt, t, horizon, atoms), atoms=n, horizon=horizon)
    blocks = filt_at(filt, t).restrict(atoms)
    streams = [list(_rules(filt, t, blk, horizon)) for blk in blocks]
    for combo in itertools.product(*streams):
        times = [None] * n
        for a, th in itertools.chain.from_iterable(combo):
            times[a] = th
        yield StoppingRule(t, tuple(times))


def _payoff_terms(rp: RewardsProcess, t: int, a: int, tau) -> tuple:
    """``(sum_{u=t}^{tau-1} beta^(u-t) h(u+1), beta^(tau-t))`` on atom ``a``."""
    stop = rp.horizon if tau == INF else tau
    acc = 0
    for u in range(t, stop):
        acc += rp.beta ** (u - t) * rp.reward(u + 1)[a]
    return acc, (0 if tau == INF else rp.beta ** (tau - t))


@lru_cache(maxsize=1024)
def _affine_sets(rp: RewardsProcess, filt: tuple, t: int, budget: EnumerationBudget) -> tuple:
    """Per block of ``F(t)``: the set of ``(A, B)`` with ``E[Y(tau;m)|B] = A + B m``."""
    space = rp.space
    out = []
    for blk in filt_at(filt, t).blocks:
        mass = space.prob_of(blk)
        affs = set()
        for rule in enumerate_stopping_rules(filt, t, max(rp.horizon, t), blk, budget):
            A = 0
            B = 0
            for a in blk:
                x, y = _payoff_terms(rp, t, a, rule.times[a])
                A += space.prob[a] * x
                B += space.prob[a] * y
            affs.add((A / mass, B / mass))
        out.append((blk, tuple(sorted(affs))))
    return tuple(out)


def oracle_V(
    rp: RewardsProcess, filt: Sequence[Partition], t: int, m: Number, budget: EnumerationBudget = DEFAULT_BUDGET
) -> RandomVariable:
    """Blockwise maximum over all rules of ``E[Y(tau;m)|F(t)]``."""
    res = [None] * rp.space.n
    for blk, affs in _affine_sets(rp, tuple(filt), t, budget):
        v = max(A + B * m for A, B in affs)
        for a in blk:
            res[a] = v
    return tuple(res)


def forward_induction_index(
    rp: RewardsProcess, filt: Sequence[Partition], t: int, budget: EnumerationBudget = DEFAULT_BUDGET
) -> RandomVariable:
    """``M(t)`` as ``1/(1-beta)`` times the best reward rate over rules in
    ``S(t+1)``, each block of ``F(t)`` maximized separately."""
    space = rp.space
    beta = rp.beta
    res = [None] * space.n
    if t >= rp.horizon:
        return space.constant(0)
    for blk in filt_at(filt, t).blocks:
        best = None
        for rule in enumerate_stopping_rules(filt, t + 1, rp.horizon, blk, budget):
            num = 0
            den = 0
            for a in blk:
                tau = rule.times[a]
                stop = rp.horizon if tau == INF else tau
                p = space.prob[a]
                num += p * sum(beta**u * rp.reward(u + 1)[a] for u in range(t, stop))
                tail = 0 if tau == INF else beta**tau
                den += p * (beta**t - tail) / (1 - beta)
            ratio = num / den
            if best is None or ratio > best:
                best = ratio
        for a in blk:
            res[a] = best / (1 - beta)
    return tuple(res)


# ---------------------------------------------------------------------------
# allocation strategies


def _strategy_count(lat: FiltrationLattice, t: int, r: tuple, atoms: tuple, horizon: int, retire: bool) -> int:
    if t == horizon:
        return 2 if retire else 1
    total = 1 if retire else 0
    d = lat.dim
    for j in range(d):
        if r[j] >= lat.bounds[j]:
            continue
        nxt = add_point(r, unit(d, j))
        prod = 1
        for sub in lat(nxt).restrict(atoms):
            prod *= _strategy_count(lat, t + 1, nxt, sub, horizon, retire)
        total += prod
    return total


def calendar_horizon(lat: FiltrationLattice, start: tuple) -> int:
    return sum(b - s for b, s in zip(lat.bounds, start))


def count_strategies(lat: FiltrationLattice, start: tuple, atoms: Sequence[int] | None = None, retire: bool = False) -> int:
    """Closed-form census of adapted decision tables."""
    atoms = tuple(range(lat.space.n)) if atoms is None else tuple(atoms)
    L = calendar_horizon(lat, start)
    total = 1
    for blk in lat(start).restrict(atoms):
        total *= _strategy_count(lat, 0, tuple(start), blk, L, retire)
    return total


# An action is a project index, or RETIRE / NEVER at the decision point.
RETIRE = -1
NEVER = -2


def _strategies(lat: FiltrationLattice, t: int, r: tuple, atoms: tuple, horizon: int, retire: bool) -> Iterator[tuple]:
    """Assignments ``((atom, actions), ...)`` where ``actions`` lists the
    choices from calendar time ``t`` on."""
    if t == horizon:
        if retire:
            yield tuple((a, (RETIRE,)) for a in atoms)
            yield tuple((a, (NEVER,)) for a in atoms)
        else:
            yield tuple((a, ()) for a in atoms)
        return
    if retire:
        yield tuple((a, (RETIRE,)) for a in atoms)
    d = lat.dim
    for j in range(d):
        if r[j] >= lat.bounds[j]:
            continue
        nxt = add_point(r, unit(d, j))
        children = [list(_strategies(lat, t + 1, nxt, sub, horizon, retire)) for sub in lat(nxt).restrict(atoms)]
        for combo in itertools.product(*children):
            yield tuple((a, (j,) + acts) for a, acts in itertools.chain.from_iterable(combo))


def enumerate_action_tables(
    lat: FiltrationLattice,
    start: tuple,
    atoms: Sequence[int] | None = None,
    retire: bool = False,
    budget: EnumerationBudget = DEFAULT_BUDGET,
) -> Iterator[tuple]:
    """Per-atom action sequences (``None`` outside ``atoms``)."""
    n = lat.space.n
    atoms = tuple(range(n)) if atoms is None else tuple(sorted(atoms))
    budget.admit(
        count_strategies(lat, start, atoms, retire), atoms=n, horizon=calendar_horizon(lat, start), d=lat.dim
    )
    L = calendar_horizon(lat, start)
    streams = [list(_strategies(lat, 0, tuple(start), blk, L, retire)) for blk in lat(start).restrict(atoms)]
    for combo in itertools.product(*streams):
        acts = [None] * n
        for a, seq in itertools.chain.from_iterable(combo):
            acts[a] = seq
        yield tuple(acts)


def enumerate_strategies(
    lat: FiltrationLattice, start: tuple, budget: EnumerationBudget = DEFAULT_BUDGET
) -> Iterator:
    """Every allocation strategy from ``start`` up to exhaustion, each once."""
    from .allocation import AllocationStrategy

    for acts in enumerate_action_tables(lat, start, budget=budget):
        yield AllocationStrategy(tuple(start), acts)


def path_reward(rewards: Sequence[RewardsProcess], start: tuple, actions: Sequence[int], a: int, M: Number = 0) -> Number:
    """Discounted reward on atom ``a``: engaging ``j`` at calendar ``t``
    pays ``h_j(T_j(t)+1)``; retiring at ``t`` pays ``M beta^t``."""
    beta = rewards[0].beta
    r = list(start)
    total = 0
    for t, j in enumerate(actions):
        if j == RETIRE:
            return total + M * beta**t
        if j == NEVER:
            return total
        total += beta**t * rewards[j].reward(r[j] + 1)[a]
        r[j] += 1
    return total


def oracle_Phi(
    lat: FiltrationLattice,
    rewards: Sequence[RewardsProcess],
    start: tuple,
    M: Number = 0,
    budget: EnumerationBudget = DEFAULT_BUDGET,
) -> RandomVariable:
    """Blockwise maximum of ``E[R|F(start)]`` over enumerated strategies;
    with ``M > 0`` retirement actions are enumerated as well."""
    space = lat.space
    res = [None] * space.n
    retire = M > 0
    for blk in lat(tuple(start)).blocks:
        mass = space.prob_of(blk)
        best = None
        for acts in enumerate_action_tables(lat, start, blk, retire, budget):
            v = sum(space.prob[a] * path_reward(rewards, start, acts[a], a, M) for a in blk) / mass
            if best is None or v > best:
                best = v
        for a in blk:
            res[a] = best
    return tuple(res)


def oracle_Phi_argmax(
    lat: FiltrationLattice,
    rewards: Sequence[RewardsProcess],
    start: tuple,
    budget: EnumerationBudget = DEFAULT_BUDGET,
) -> tuple:
    """Value and the list of strategies attaining it, assuming ``F(start)``
    is trivial so that one strategy must be optimal on every block."""
    from .allocation import AllocationStrategy

    space = lat.space
    if len(lat(tuple(start))) != 1:
        raise ValueError("argmax enumeration needs a trivial partition at the start point")
    best = None
    winners: list = []
    for acts in enumerate_action_tables(lat, start, budget=budget):
        v = sum(space.prob[a] * path_reward(rewards, start, acts[a], a) for a in range(space.n))
        if best is None or v > best:
            best, winners = v, [AllocationStrategy(tuple(start), acts)]
        elif v == best:
            winners.append(AllocationStrategy(tuple(start), acts))
    return best, winners


def strategy_census(lat: FiltrationLattice, start: tuple) -> dict:
    """Enumerated count next to the closed-form product."""
    closed = count_strategies(lat, start)
    walked = sum(1 for _ in enumerate_action_tables(lat, start, budget=EnumerationBudget(max_rules=max(closed, 1))))
    return {"closed_form": closed, "enumerated": walked}


def product_space_size(spaces: Sequence[FiniteSpace]) -> int:
    return math.prod(sp.n for sp in spaces)
