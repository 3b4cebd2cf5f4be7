"""Finite probability spaces, partitions, conditional expectation and
multi-parameter filtration lattices.

Random variables are plain tuples holding one number per atom.  Numbers are
either :class:`fractions.Fraction` (exact mode) or ``float``; every checker
takes a ``tol`` argument and ``tol == 0`` means exact comparison.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Hashable, Iterable, Iterator, Mapping, Sequence, Union

Number = Union[Fraction, float, int]
RandomVariable = tuple
Point = tuple

# Symbolic +infinity for random times; discount(beta, INF) == 0.
INF = math.inf

FLOAT_TOL = 1e-9


def discount(beta: Number, k) -> Number:
    """``beta**k`` with ``beta**INF == 0``."""
    if k == INF:
        return 0
    return beta**k


def midpoint(a: Number, b: Number) -> Number:
    """Exact midpoint for rationals and integers."""
    s = a + b
    return Fraction(s, 2) if isinstance(s, (int, Fraction)) else s / 2


def default_tol(x: Number) -> Number:
    """0 for exact numbers, ``FLOAT_TOL`` for floats."""
    return 0 if isinstance(x, (Fraction, int)) else FLOAT_TOL


def merge_close(points, tol: Number = 0) -> list:
    """Sorted distinct points; within ``tol`` of the previous kept point counts as equal."""
    out = []
    for x in sorted(points):
        if not out or x - out[-1] > tol:
            out.append(x)
    return out


def is_close(a: Number, b: Number, tol: Number = 0) -> bool:
    if not tol:
        return a == b
    return abs(a - b) <= tol


def parse_number(value: Any, mode: str = "rational") -> Number:
    """Parse ``"3/4"``, ``"0.25"``, ints or floats into the requested mode."""
    if mode == "rational":
        if isinstance(value, float):
            return Fraction(value).limit_denominator(10**12)
        return Fraction(str(value)) if not isinstance(value, Fraction) else value
    if mode == "float":
        return float(Fraction(str(value))) if isinstance(value, str) else float(value)
    raise ValueError(f"unknown numeric mode {mode!r}")


def fmt_number(x: Number) -> Any:
    """JSON-friendly rendering: exact fractions become strings."""
    if x == INF:
        return "inf"
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, int):
        return x
    return float(x)


@dataclass
class CheckReport:
    """Outcome of a verification routine."""

    name: str
    passed: bool
    worst: Number = 0
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed


# ---------------------------------------------------------------------------
# spaces and partitions


@dataclass(frozen=True)
class FiniteSpace:
    atoms: tuple
    prob: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple(self.atoms))
        # ints become Fractions so that ratios of masses stay exact
        object.__setattr__(self, "prob", tuple(Fraction(p) if isinstance(p, int) else p for p in self.prob))
        if len(self.atoms) != len(self.prob):
            raise ValueError("atoms and prob differ in length")
        if len(set(self.atoms)) != len(self.atoms):
            raise ValueError("duplicate atom identifiers")
        if not self.atoms:
            raise ValueError("empty sample space")
        for a, p in zip(self.atoms, self.prob):
            if not p > 0:
                raise ValueError(f"atom {a!r} has non-positive probability {p}")
        total = sum(self.prob)
        exact = all(isinstance(p, (Fraction, int)) for p in self.prob)
        if (exact and total != 1) or (not exact and abs(total - 1) > 1e-12):
            raise ValueError(f"probabilities sum to {total}, not 1")

    @property
    def n(self) -> int:
        return len(self.atoms)

    @classmethod
    def uniform(cls, atoms: Sequence[Hashable]) -> "FiniteSpace":
        atoms = tuple(atoms)
        return cls(atoms, tuple(Fraction(1, len(atoms)) for _ in atoms))

    def constant(self, c: Number) -> RandomVariable:
        return (c,) * self.n

    def expect(self, x: Sequence[Number]) -> Number:
        return sum(p * v for p, v in zip(self.prob, x))

    def prob_of(self, event: Iterable[int]) -> Number:
        return sum(self.prob[a] for a in event)

    def to_float(self) -> "FiniteSpace":
        return FiniteSpace(self.atoms, tuple(float(p) for p in self.prob))


class Partition:
    """A partition of atom indices ``0..n-1``, canonicalized so that blocks
    are sorted tuples ordered by their least atom."""

    __slots__ = ("blocks", "label", "_hash")

    def __init__(self, blocks: Iterable[Iterable[int]]):
        bl = sorted((tuple(sorted(b)) for b in blocks if b), key=lambda b: b[0])
        n = sum(len(b) for b in bl)
        label = [-1] * n
        for k, b in enumerate(bl):
            for a in b:
                if a >= n or label[a] != -1:
                    raise ValueError("blocks do not partition the atom set")
                label[a] = k
        self.blocks: tuple = tuple(bl)
        self.label: tuple = tuple(label)
        self._hash = hash(self.blocks)

    @classmethod
    def from_labels(cls, labels: Sequence[Hashable]) -> "Partition":
        groups: dict = {}
        for a, key in enumerate(labels):
            groups.setdefault(key, []).append(a)
        return cls(groups.values())

    @classmethod
    def trivial(cls, n: int) -> "Partition":
        return cls([range(n)])

    @classmethod
    def discrete(cls, n: int) -> "Partition":
        return cls([a] for a in range(n))

    @property
    def n(self) -> int:
        return len(self.label)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Partition) and self.blocks == other.blocks

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Partition({list(self.blocks)})"

    def __len__(self) -> int:
        return len(self.blocks)

    def block_of(self, atom: int) -> tuple:
        return self.blocks[self.label[atom]]

    def refines(self, coarser: "Partition") -> bool:
        """True when every block of ``self`` sits inside a block of ``coarser``."""
        return all(len({coarser.label[a] for a in b}) == 1 for b in self.blocks)

    def join(self, other: "Partition") -> "Partition":
        """Common refinement (the sigma-algebra generated by both)."""
        return Partition.from_labels(list(zip(self.label, other.label)))

    def meet(self, other: "Partition") -> "Partition":
        """Finest common coarsening (intersection of the sigma-algebras)."""
        parent = list(range(self.n))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for part in (self, other):
            for b in part.blocks:
                r = find(b[0])
                for a in b[1:]:
                    ra = find(a)
                    if ra != r:
                        parent[ra] = r
        return Partition.from_labels([find(a) for a in range(self.n)])

    def restrict(self, atoms: Iterable[int]) -> list:
        """Blocks of the trace of this partition on ``atoms`` (a subset)."""
        keep = set(atoms)
        out = []
        for b in self.blocks:
            sub = tuple(a for a in b if a in keep)
            if sub:
                out.append(sub)
        return out

    def is_measurable(self, x: Sequence[Number], tol: Number = 0) -> bool:
        return all(all(is_close(x[a], x[b[0]], tol) for a in b) for b in self.blocks)

    def contains_event(self, event: Iterable[int]) -> bool:
        """Whether ``event`` is a union of blocks."""
        ev = set(event)
        return all(len(ev.intersection(b)) in (0, len(b)) for b in self.blocks)


def join_all(parts: Iterable[Partition]) -> Partition:
    parts = list(parts)
    labels = list(zip(*(p.label for p in parts)))
    return Partition.from_labels(labels)


def cond_expect(x: Sequence[Number], p: Partition, space: FiniteSpace) -> RandomVariable:
    """Blockwise probability-weighted mean of ``x`` on the blocks of ``p``."""
    out = [None] * space.n
    prob = space.prob
    for b in p.blocks:
        mass = 0
        acc = 0
        for a in b:
            mass += prob[a]
            acc += prob[a] * x[a]
        v = acc / mass
        for a in b:
            out[a] = v
    return tuple(out)


def martingale_residuals(
    seq: Sequence[Sequence[Number]], filt: Sequence[Partition], space: FiniteSpace, start: int = 0
) -> list:
    """One-step residuals ``E[X(k+1)|F(k)] - X(k)`` for ``k = start..``.

    ``seq[j]`` is the value at time ``start + j`` and ``filt`` is indexed by
    absolute time (clamped at its end)."""
    res = []
    for j in range(len(seq) - 1):
        f = filt[min(start + j, len(filt) - 1)]
        ce = cond_expect(seq[j + 1], f, space)
        res.append(tuple(c - v for c, v in zip(ce, seq[j])))
    return res


def is_filtration(parts: Sequence[Partition]) -> bool:
    return all(parts[k + 1].refines(parts[k]) for k in range(len(parts) - 1))


# ---------------------------------------------------------------------------
# lattices


def meet_point(s: Point, r: Point) -> Point:
    return tuple(min(a, b) for a, b in zip(s, r))


def leq(s: Point, r: Point) -> bool:
    return all(a <= b for a, b in zip(s, r))


def unit(d: int, i: int) -> Point:
    return tuple(1 if k == i else 0 for k in range(d))


def add_point(s: Point, r: Point) -> Point:
    return tuple(a + b for a, b in zip(s, r))


@dataclass(frozen=True, eq=False)
class FiltrationLattice:
    """Partitions ``F(s)`` for every lattice point ``0 <= s <= bounds``.

    ``kind`` records the generator ("product", "sheet" or "general") and
    ``meta`` carries generator data used for serialization."""

    space: FiniteSpace
    bounds: tuple
    cells: Mapping
    kind: str = "general"
    meta: Mapping = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def points(self) -> Iterator[Point]:
        return itertools.product(*(range(b + 1) for b in self.bounds))

    def clamp(self, r: Point) -> Point:
        return tuple(min(a, b) for a, b in zip(r, self.bounds))

    def __call__(self, r: Point) -> Partition:
        """Partition at ``r``; points past the bounds see the bound's partition."""
        return self.cells[self.clamp(r)]

    def check_complete(self) -> CheckReport:
        for r in self.points():
            if r not in self.cells:
                return CheckReport("complete", False, witness={"point": list(r)})
            if self.cells[r].n != self.space.n:
                return CheckReport("complete", False, witness={"point": list(r), "reason": "size"})
        return CheckReport("complete", True)

    def check_f1(self) -> CheckReport:
        for r in self.points():
            for i in range(self.dim):
                if r[i] < self.bounds[i]:
                    nxt = add_point(r, unit(self.dim, i))
                    if not self.cells[nxt].refines(self.cells[r]):
                        return CheckReport(
                            "F1", False, witness={"coarse": list(r), "fine": list(nxt)}
                        )
        return CheckReport("F1", True)


def check_F4(lat: FiltrationLattice, tol: Number = 0) -> CheckReport:
    """Conditional independence of ``F(s)`` and ``F(r)`` given ``F(s^r)``.

    Also checks commuting conditional expectations on atom indicators and
    the intersection identity ``F(s) cap F(r) = F(s^r)``."""
    space = lat.space
    prob = space.prob
    pts = list(lat.points())
    worst = 0
    witness = None
    commute_ok = True
    cap_ok = True
    indicators = [tuple(1 if a == k else 0 for a in range(space.n)) for k in range(space.n)]
    for s, r in itertools.combinations_with_replacement(pts, 2):
        q = meet_point(s, r)
        if q == s or q == r:
            continue  # comparable points are conditionally independent trivially
        ps, pr, pq = lat(s), lat(r), lat(q)
        for c in pq.blocks:
            pc = space.prob_of(c)
            a_blocks = ps.restrict(c)
            b_blocks = pr.restrict(c)
            for a_blk in a_blocks:
                pa = space.prob_of(a_blk) / pc
                aset = set(a_blk)
                for b_blk in b_blocks:
                    pb = space.prob_of(b_blk) / pc
                    pab = sum(prob[x] for x in b_blk if x in aset) / pc
                    v = abs(pab - pa * pb)
                    if v > worst:
                        worst = v
                    if v > tol and witness is None:
                        witness = {
                            "s": list(s),
                            "r": list(r),
                            "A": [space.atoms[x] for x in a_blk],
                            "B": [space.atoms[x] for x in b_blk],
                            "P(AB|.)": pab,
                            "P(A|.)P(B|.)": pa * pb,
                        }
        if ps.meet(pr) != pq:
            cap_ok = False
        for xi in indicators:
            lhs = cond_expect(cond_expect(xi, ps, space), pr, space)
            rhs = cond_expect(cond_expect(xi, pr, space), ps, space)
            mid = cond_expect(xi, pq, space)
            if not all(is_close(u, w, tol) and is_close(u, v, tol) for u, v, w in zip(lhs, rhs, mid)):
                commute_ok = False
                break
    passed = witness is None and commute_ok and cap_ok
    return CheckReport(
        "F4",
        passed,
        worst=worst,
        witness=witness,
        details={"conditional_independence": witness is None, "commutation": commute_ok, "intersection": cap_ok},
    )


def build_product_lattice(trees: Sequence[tuple]) -> FiltrationLattice:
    """Join of independent one-parameter filtrations.

    ``trees[i]`` is ``(FiniteSpace, [Partition at t=0..H_i])`` on its own
    coordinate space; the result lives on the product space."""
    for i, (sp, parts) in enumerate(trees):
        if not parts:
            raise ValueError(f"project {i} has no partitions")
        if any(p.n != sp.n for p in parts):
            raise ValueError(f"project {i}: partition size differs from its space")
        if not is_filtration(parts):
            raise ValueError(f"project {i}: partition sequence is not a filtration")
    spaces = [sp for sp, _ in trees]
    idx = list(itertools.product(*(range(sp.n) for sp in spaces)))
    atoms = tuple(tuple(sp.atoms[k] for sp, k in zip(spaces, tup)) for tup in idx)
    prob = tuple(math.prod((sp.prob[k] for sp, k in zip(spaces, tup)), start=1) for tup in idx)
    space = FiniteSpace(atoms, prob)
    bounds = tuple(len(parts) - 1 for _, parts in trees)
    cells = {}
    for r in itertools.product(*(range(b + 1) for b in bounds)):
        labels = [tuple(trees[i][1][r[i]].label[tup[i]] for i in range(len(trees))) for tup in idx]
        cells[r] = Partition.from_labels(labels)
    return FiltrationLattice(space, bounds, cells, kind="product", meta={"factors": len(trees)})


def _sheet_sites(dims: Sequence[int], axis_sites: bool) -> list:
    lo = 0 if axis_sites else 1
    return list(itertools.product(*(range(lo, b + 1) for b in dims)))


def build_sheet_lattice(
    dims: Sequence[int], increments: Sequence[tuple], axis_sites: bool = False
) -> FiltrationLattice:
    """Discrete white-noise sheet.

    Atoms assign one increment value to every site ``(a_1..a_d)`` with
    ``1 <= a_i <= dims[i]``; ``F(r)`` is generated by the sites inside the
    rectangle ``{1..r_1} x ... x {1..r_d}`` (empty rectangles give the
    trivial partition).  With ``axis_sites=True`` the sites start at 0, so
    rectangles ``{0..r_1} x ...`` are never empty."""
    support = [(v, p) for v, p in increments if p > 0]
    if len({v for v, _ in support}) < 2:
        raise ValueError("increment distribution must have at least two support points")
    dims = tuple(int(b) for b in dims)
    sites = _sheet_sites(dims, axis_sites)
    combos = list(itertools.product(range(len(support)), repeat=len(sites)))
    atoms = tuple(tuple(support[k][0] for k in combo) for combo in combos)
    prob = tuple(math.prod((support[k][1] for k in combo), start=1) for combo in combos)
    space = FiniteSpace(atoms, prob)
    cells = {}
    for r in itertools.product(*(range(b + 1) for b in dims)):
        inside = [j for j, site in enumerate(sites) if leq(site, r)]
        cells[r] = Partition.from_labels([tuple(c[j] for j in inside) for c in combos])
    meta = {"sites": [list(s) for s in sites], "axis_sites": axis_sites}
    return FiltrationLattice(space, dims, cells, kind="sheet", meta=meta)


def derive_axis_filtrations(lat: FiltrationLattice, i: int) -> tuple:
    """Small filtration ``F_i(t) = F(0,..,t,..,0)`` and large filtration
    ``F^i(t)``, the common refinement of ``F(r)`` over ``r_i <= t``."""
    if not 0 <= i < lat.dim:
        raise IndexError(f"project index {i} outside 0..{lat.dim - 1}")
    small = [lat(tuple(t if k == i else 0 for k in range(lat.dim))) for t in range(lat.bounds[i] + 1)]
    large = []
    pts = list(lat.points())
    for t in range(lat.bounds[i] + 1):
        large.append(join_all(lat.cells[r] for r in pts if r[i] <= t))
    return small, large


def check_enlargement(lat: FiltrationLattice, i: int, seq: Sequence[Sequence[Number]], tol: Number = 0) -> CheckReport:
    """An ``F_i``-martingale ``seq[0..H_i]`` must stay a martingale for ``F^i``."""
    small, large = derive_axis_filtrations(lat, i)
    base = martingale_residuals(seq, small, lat.space)
    if any(abs(v) > tol for row in base for v in row):
        raise ValueError("fixture is not a martingale for the small filtration")
    worst = 0
    witness = None
    for t, row in enumerate(martingale_residuals(seq, large, lat.space)):
        for a, v in enumerate(row):
            worst = max(worst, abs(v))
            if abs(v) > tol and witness is None:
                witness = {"axis": i, "t": t, "atom": lat.space.atoms[a], "residual": v}
    return CheckReport("enlargement", witness is None, worst, witness)


def check_product_structure(lat: FiltrationLattice) -> CheckReport:
    """Whether every ``F(s)`` is the join of the small axis filtrations."""
    smalls = [derive_axis_filtrations(lat, i)[0] for i in range(lat.dim)]
    for s in lat.points():
        joined = join_all(smalls[i][s[i]] for i in range(lat.dim))
        if joined != lat.cells[s]:
            return CheckReport("product", False, witness={"point": list(s)})
    return CheckReport("product", True)


# ---------------------------------------------------------------------------
# stopping points and field martingales


def is_stopping_point(nu: Sequence[Point], lat: FiltrationLattice) -> bool:
    """``nu[a]`` is the lattice point on atom ``a``."""
    events: dict = {}
    for a, r in enumerate(nu):
        events.setdefault(tuple(r), []).append(a)
    for r, ev in events.items():
        if not leq(r, lat.bounds):
            return False
        if not lat.cells[r].contains_event(ev):
            return False
    return True


def stopped_partition(nu: Sequence[Point], lat: FiltrationLattice) -> Partition:
    """Atoms of ``F(nu)``: blocks of ``F(r)`` inside ``{nu = r}``."""
    return Partition.from_labels([(tuple(r), lat(tuple(r)).label[a]) for a, r in enumerate(nu)])


def _field_super(x: Mapping, lat: FiltrationLattice, tol: Number, sign: int) -> dict:
    """Supermartingale verdicts (a), (b), (c) for ``sign * x``."""
    space = lat.space
    pts = list(lat.points())
    out = {"a": True, "b": True, "c": True}
    worst = {"a": 0, "b": 0, "c": 0}
    wit: dict = {}
    for s in pts:
        ps = lat(s)
        for r in pts:
            ce = cond_expect(x[r], ps, space)
            ref = x[meet_point(s, r)]
            for a in range(space.n):
                v = sign * (ce[a] - ref[a])
                if v > worst["b"]:
                    worst["b"] = v
                if v > tol:
                    if out["b"]:
                        wit["b"] = {"s": list(s), "r": list(r), "atom": space.atoms[a]}
                    out["b"] = False
                    if leq(s, r):
                        if out["a"]:
                            wit["a"] = wit["b"]
                        out["a"] = False
                    break
            if leq(s, r):
                for a in range(space.n):
                    v = sign * (ce[a] - x[s][a])
                    worst["a"] = max(worst["a"], v)
    larges = [derive_axis_filtrations(lat, i)[1] for i in range(lat.dim)]
    for s in pts:
        for i in range(lat.dim):
            if s[i] >= lat.bounds[i]:
                continue
            nxt = add_point(s, unit(lat.dim, i))
            ce = cond_expect(x[nxt], larges[i][s[i]], space)
            for a in range(space.n):
                v = sign * (ce[a] - x[s][a])
                worst["c"] = max(worst["c"], v)
                if v > tol and out["c"]:
                    out["c"] = False
                    wit["c"] = {"s": list(s), "axis": i, "atom": space.atoms[a]}
    return {"verdicts": out, "worst": worst, "witness": wit}


def check_field_supermartingale(x: Mapping, lat: FiltrationLattice, tol: Number = 0) -> CheckReport:
    """Supermartingale test for a random field in three equivalent forms.

    (a) ``E[x(r)|F(s)] <= x(s)`` for ``s <= r``; (b) ``E[x(r)|F(s)] <=
    x(s^r)`` for all pairs; (c) one-step axis form against ``F^i``.  The
    submartingale side is evaluated too so that martingales are
    recognized."""
    space = lat.space
    for s in lat.points():
        if not lat(s).is_measurable(x[s], tol):
            return CheckReport(
                "field-supermartingale",
                False,
                witness={"point": list(s)},
                details={"adapted": False},
            )
    sup = _field_super(x, lat, tol, 1)
    sub = _field_super(x, lat, tol, -1)
    sv, bv = sup["verdicts"], sub["verdicts"]
    consistent = len(set(sv.values())) == 1 and len(set(bv.values())) == 1
    details = {
        "adapted": True,
        "super": sv,
        "sub": bv,
        "martingale": all(sv.values()) and all(bv.values()),
        "forms_agree": consistent,
    }
    witness = sup["witness"].get("a") or sup["witness"].get("b") or sup["witness"].get("c")
    return CheckReport(
        "field-supermartingale",
        sv["a"],
        worst=max(sup["worst"].values()),
        witness=witness,
        details=details,
    )


def check_optional_sampling(
    x: Mapping,
    sigma: Sequence[Point],
    tau: Sequence[Point],
    lat: FiltrationLattice,
    tol: Number = 0,
    sigma_partition: Partition | None = None,
) -> CheckReport:
    """``E[x(tau)|F(sigma)] <= x(sigma)`` blockwise on ``F(sigma)``.

    Callers looping over many ``tau`` may pass the stopped partition of
    ``sigma`` to avoid rebuilding it."""
    space = lat.space
    for a in range(space.n):
        if not leq(sigma[a], tau[a]):
            raise ValueError(f"sigma <= tau fails on atom {space.atoms[a]!r}")
    xs = tuple(x[tuple(sigma[a])][a] for a in range(space.n))
    xt = tuple(x[tuple(tau[a])][a] for a in range(space.n))
    part = stopped_partition(sigma, lat) if sigma_partition is None else sigma_partition
    ce = cond_expect(xt, part, space)
    worst = 0
    witness = None
    equality = True
    for a in range(space.n):
        v = ce[a] - xs[a]
        worst = max(worst, v)
        if not is_close(ce[a], xs[a], tol):
            equality = False
        if v > tol and witness is None:
            witness = {"atom": space.atoms[a], "lhs": ce[a], "rhs": xs[a]}
    return CheckReport("optional-sampling", witness is None, worst=worst, witness=witness, details={"equality": equality})


def _integer_scale(values: Iterable[Number]) -> int | None:
    """Common denominator of exact values, or None if any is a float."""
    den = 1
    for v in values:
        if isinstance(v, float):
            return None
        den = math.lcm(den, Fraction(v).denominator)
    return den


def check_optional_sampling_pairs(
    x: Mapping,
    pairs: Iterable[tuple],
    lat: FiltrationLattice,
    tol: Number = 0,
    partitions: dict | None = None,
    ordered: bool = False,
) -> CheckReport:
    """``check_optional_sampling`` over many ``(sigma, tau)`` pairs at once.

    Exact inputs are rescaled to integers and block sums are compared
    without dividing.  ``details["equality"]`` is True when every pair holds
    with equality, as it must for martingales.  ``ordered=True`` skips the
    ``sigma <= tau`` validation for callers that built the pairs that way."""
    space = lat.space
    n = space.n
    pden = _integer_scale(space.prob)
    xden = _integer_scale(v for vals in x.values() for v in vals)
    if pden is None or xden is None:
        w, X = space.prob, x
    else:
        w = [int(p * pden) for p in space.prob]
        X = {r: [int(v * xden) for v in vals] for r, vals in x.items()}
        tol = tol * pden * xden
    parts = {} if partitions is None else partitions
    worst = 0
    equality = True
    count = 0
    for sigma, tau in pairs:
        count += 1
        if sigma not in parts:
            parts[sigma] = stopped_partition(sigma, lat).blocks
        if not ordered:
            for a in range(n):
                if not leq(sigma[a], tau[a]):
                    raise ValueError(f"sigma <= tau fails on atom {space.atoms[a]!r}")
        for blk in parts[sigma]:
            mass = sum(w[a] for a in blk)
            lhs = sum(w[a] * X[tau[a]][a] for a in blk)
            for a in blk:
                v = lhs - mass * X[sigma[a]][a]
                if v > tol * mass:
                    scale = mass if pden is None else mass * xden
                    witness = {"atom": space.atoms[a], "sigma": [list(p) for p in sigma], "tau": [list(p) for p in tau]}
                    return CheckReport("optional-sampling", False, worst=v / scale, witness=witness, details={"equality": False, "pairs": count})
                if abs(v) > tol * mass:
                    equality = False
                worst = max(worst, v / (mass if pden is None else mass * xden))
    return CheckReport("optional-sampling", True, worst=worst, details={"equality": equality, "pairs": count})


def enumerate_stopping_points(lat: FiltrationLattice, limit: int | None = None) -> Iterator[tuple]:
    """All stopping points of ``lat`` in canonical order (depth-first over
    atoms, points in lexicographic order)."""
    n = lat.space.n
    pts = list(lat.points())
    assign: list = [None] * n
    count = [0]

    def rec(a: int) -> Iterator[tuple]:
        while a < n and assign[a] is not None:
            a += 1
        if a == n:
            count[0] += 1
            if limit is not None and count[0] > limit:
                raise OverflowError("stopping-point enumeration exceeds limit")
            yield tuple(assign)
            return
        for r in pts:
            blk = lat.cells[r].block_of(a)
            if any(assign[b] is not None for b in blk):
                continue  # a is the least unassigned atom, so the whole block must be free
            for b in blk:
                assign[b] = r
            yield from rec(a + 1)
            for b in blk:
                assign[b] = None

    yield from rec(0)


def random_stopping_point(lat: FiltrationLattice, rng, floor: Sequence[Point] | None = None) -> tuple:
    """A random stopping point, atomwise at or above ``floor`` when given.

    Atoms are visited in order and each picks a uniformly random admissible
    point; the corner point is always admissible, so this never dead-ends."""
    n = lat.space.n
    pts = list(lat.points())
    assign: list = [None] * n
    for a in range(n):
        if assign[a] is not None:
            continue
        options = []
        for r in pts:
            blk = lat.cells[r].block_of(a)
            if any(assign[b] is not None for b in blk):
                continue
            if floor is not None and not all(leq(floor[b], r) for b in blk):
                continue
            options.append((r, blk))
        r, blk = rng.choice(options)
        for b in blk:
            assign[b] = r
    return tuple(assign)


def field_from_function(lat: FiltrationLattice, fn: Callable[[Point], Sequence[Number]]) -> dict:
    return {r: tuple(fn(r)) for r in lat.points()}
