"""Scenario documents: loading, serialization and random generation.

A scenario is a plain JSON-compatible dict.  Numbers are strings such as
``"3/5"`` so that rational mode stays exact; plain JSON numbers are also
accepted.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any

from .allocation import lattice_projects
from .prob_core import (
    FiniteSpace,
    FiltrationLattice,
    Number,
    Partition,
    build_product_lattice,
    build_sheet_lattice,
    fmt_number,
    parse_number,
)
from .stopping import RewardsProcess


class ScenarioError(ValueError):
    """The scenario document is malformed or inconsistent.

    ``check`` names a failed structural condition (such as ``"F1"``) when
    the document parses but describes an invalid object."""

    def __init__(self, message: str, check: str | None = None, witness: Any = None):
        super().__init__(message)
        self.check = check
        self.witness = witness


def atom_key(atom: Any) -> str:
    if isinstance(atom, tuple):
        return ",".join(atom_key(x) for x in atom)
    if isinstance(atom, Fraction):
        return str(atom)
    return str(atom)


@dataclass
class Instance:
    name: str
    lat: FiltrationLattice
    rps: list
    start: tuple
    retirement: Number = 0
    mode: str = "rational"
    doc: dict = field(default_factory=dict)

    @cached_property
    def projects(self) -> list:
        return lattice_projects(self.lat, self.rps)

    @property
    def beta(self) -> Number:
        return self.rps[0].beta


def _num(x: Any, mode: str, what: str) -> Number:
    try:
        return parse_number(x, mode)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise ScenarioError(f"{what}: cannot parse number {x!r}") from exc


def _partition(blocks: Any, names: dict, what: str) -> Partition:
    if not isinstance(blocks, list):
        raise ScenarioError(f"{what}: partition must be a list of blocks")
    try:
        idx = [[names[str(a)] for a in blk] for blk in blocks]
    except KeyError as exc:
        raise ScenarioError(f"{what}: unknown atom {exc.args[0]!r}") from exc
    flat = sorted(a for blk in idx for a in blk)
    if flat != list(range(len(names))):
        raise ScenarioError(f"{what}: blocks must cover every atom exactly once")
    return Partition(idx)


def _space(atoms: Any, prob: Any, mode: str, what: str) -> FiniteSpace:
    if not isinstance(atoms, list) or not isinstance(prob, list) or len(atoms) != len(prob):
        raise ScenarioError(f"{what}: atoms and prob must be lists of equal length")
    if len(set(map(str, atoms))) != len(atoms):
        raise ScenarioError(f"{what}: duplicate atom names")
    try:
        return FiniteSpace(tuple(str(a) for a in atoms), tuple(_num(p, mode, what) for p in prob))
    except ValueError as exc:
        raise ScenarioError(f"{what}: {exc}") from exc


def _build_lattice(lattice_doc: dict, mode: str) -> tuple:
    """``(lattice, reward resolver)``; the resolver maps a reward entry of
    project ``i`` to a random variable on the lattice space."""
    kind = lattice_doc.get("kind")
    if kind in ("product", "single"):
        factors = lattice_doc.get("factors")
        if kind == "single":
            factors = [{k: lattice_doc[k] for k in ("atoms", "prob", "filtration") if k in lattice_doc}]
        if not isinstance(factors, list) or not factors:
            raise ScenarioError("lattice.factors must be a non-empty list")
        trees = []
        for i, f in enumerate(factors):
            sp = _space(f.get("atoms"), f.get("prob"), mode, f"factor {i}")
            names = {a: k for k, a in enumerate(sp.atoms)}
            filt = f.get("filtration")
            if not isinstance(filt, list) or not filt:
                raise ScenarioError(f"factor {i}: filtration must be a non-empty list")
            parts = [_partition(b, names, f"factor {i} t={t}") for t, b in enumerate(filt)]
            for t in range(len(parts) - 1):
                if not parts[t + 1].refines(parts[t]):
                    raise ScenarioError(
                        f"factor {i}: partition at t={t + 1} does not refine t={t}",
                        check="F1",
                        witness={"factor": i, "t": t + 1},
                    )
            trees.append((sp, parts))
        try:
            lat = build_product_lattice(trees)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc

        def resolve(i: int, entry: Any, what: str):
            if isinstance(entry, dict):
                vals = entry.get("by_atom")
                if not isinstance(vals, dict):
                    raise ScenarioError(f"{what}: expected a 'by_atom' mapping")
                sp = trees[i][0]
                try:
                    per = [_num(vals[a], mode, what) for a in sp.atoms]
                except KeyError as exc:
                    raise ScenarioError(f"{what}: missing atom {exc.args[0]!r}") from exc
                pos = {a: k for k, a in enumerate(sp.atoms)}
                return tuple(per[pos[atom[i]]] for atom in lat.space.atoms)
            return lat.space.constant(_num(entry, mode, what))

        return lat, resolve
    if kind == "sheet":
        dims = lattice_doc.get("dims")
        incs = lattice_doc.get("increments")
        if not isinstance(dims, list) or not isinstance(incs, list):
            raise ScenarioError("sheet lattice needs 'dims' and 'increments'")
        incs = [(_num(v, mode, "increment"), _num(p, mode, "increment")) for v, p in incs]
        try:
            lat = build_sheet_lattice(dims, incs, bool(lattice_doc.get("axis_sites", False)))
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc
        sites = [tuple(s) for s in lat.meta["sites"]]
        keys = {atom_key(a): k for k, a in enumerate(lat.space.atoms)}

        def resolve(i: int, entry: Any, what: str):
            if isinstance(entry, dict) and "by_site" in entry:
                site = tuple(entry["by_site"])
                if site not in sites:
                    raise ScenarioError(f"{what}: unknown site {list(site)}")
                j = sites.index(site)
                table = {str(_num(k, mode, what)): _num(v, mode, what) for k, v in entry.get("values", {}).items()}
                try:
                    return tuple(table[str(atom[j])] for atom in lat.space.atoms)
                except KeyError as exc:
                    raise ScenarioError(f"{what}: no value for increment {exc.args[0]}") from exc
            if isinstance(entry, dict) and "by_atom" in entry:
                vals = entry["by_atom"]
                out = [None] * lat.space.n
                for k, v in vals.items():
                    if k not in keys:
                        raise ScenarioError(f"{what}: unknown atom {k!r}")
                    out[keys[k]] = _num(v, mode, what)
                if None in out:
                    raise ScenarioError(f"{what}: every atom needs a value")
                return tuple(out)
            return lat.space.constant(_num(entry, mode, what))

        return lat, resolve
    if kind == "general":
        sp = _space(lattice_doc.get("atoms"), lattice_doc.get("prob"), mode, "lattice")
        names = {a: k for k, a in enumerate(sp.atoms)}
        bounds = lattice_doc.get("bounds")
        cells_doc = lattice_doc.get("cells")
        if not isinstance(bounds, list) or not isinstance(cells_doc, dict):
            raise ScenarioError("general lattice needs 'bounds' and 'cells'")
        cells = {}
        for key, blocks in cells_doc.items():
            try:
                pt = tuple(int(x) for x in str(key).split(","))
            except ValueError as exc:
                raise ScenarioError(f"bad cell key {key!r}") from exc
            cells[pt] = _partition(blocks, names, f"cell {key}")
        lat = FiltrationLattice(sp, tuple(int(b) for b in bounds), cells, kind="general")
        rep = lat.check_complete()
        if not rep.passed:
            raise ScenarioError(f"lattice cells incomplete: {rep.witness}")

        def resolve(i: int, entry: Any, what: str):
            if isinstance(entry, dict):
                vals = entry.get("by_atom", {})
                try:
                    return tuple(_num(vals[a], mode, what) for a in sp.atoms)
                except KeyError as exc:
                    raise ScenarioError(f"{what}: missing atom {exc.args[0]!r}") from exc
            return sp.constant(_num(entry, mode, what))

        return lat, resolve
    raise ScenarioError(f"unknown lattice kind {kind!r}")


def load_scenario(doc: Any, mode: str = "rational") -> Instance:
    """Builds an :class:`Instance`; raises :class:`ScenarioError` on bad input."""
    if mode not in ("rational", "float"):
        raise ScenarioError(f"unknown mode {mode!r}")
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    for key in ("beta", "lattice", "rewards"):
        if key not in doc:
            raise ScenarioError(f"missing field {key!r}")
    beta = _num(doc["beta"], mode, "beta")
    if not 0 < beta < 1:
        raise ScenarioError("beta must lie in (0, 1)")
    K = _num(doc["reward_bound"], mode, "reward_bound") if doc.get("reward_bound") is not None else None
    if not isinstance(doc["lattice"], dict):
        raise ScenarioError("lattice must be an object")
    lat, resolve = _build_lattice(doc["lattice"], mode)
    rewards = doc["rewards"]
    if not isinstance(rewards, list) or len(rewards) != lat.dim:
        raise ScenarioError(f"rewards must list {lat.dim} projects")
    rps = []
    for i, seq in enumerate(rewards):
        if not isinstance(seq, list) or len(seq) != lat.bounds[i]:
            raise ScenarioError(f"project {i}: expected {lat.bounds[i]} reward entries")
        h = tuple(resolve(i, e, f"project {i} reward {t + 1}") for t, e in enumerate(seq))
        rps.append(RewardsProcess(lat.space, h, beta, K))
    start = doc.get("start", [0] * lat.dim)
    if not isinstance(start, list) or len(start) != lat.dim:
        raise ScenarioError("start must list one count per project")
    start = tuple(int(x) for x in start)
    if any(not 0 <= s <= b for s, b in zip(start, lat.bounds)):
        raise ScenarioError("start lies outside the lattice")
    M = _num(doc.get("retirement", 0), mode, "retirement")
    if M < 0:
        raise ScenarioError("retirement must be non-negative")
    return Instance(str(doc.get("name", "scenario")), lat, rps, start, M, mode, doc)


# ---------------------------------------------------------------------------
# random generation


def _rand_prob(rng: random.Random, n: int) -> list:
    w = [rng.randint(1, 4) for _ in range(n)]
    s = sum(w)
    return [str(Fraction(x, s)) for x in w]


def _coarsen(rng: random.Random, blocks: list) -> list:
    """Random coarsening: merge blocks by random labels."""
    k = rng.randint(1, len(blocks))
    groups: dict = {}
    for b in blocks:
        groups.setdefault(rng.randrange(k), []).extend(b)
    return [sorted(g) for g in groups.values()]


def random_filtration(rng: random.Random, atoms: list, H: int, trivial_start: bool = False) -> list:
    """Partitions at ``t = 0..H`` (as lists of atom-name blocks), refining in time."""
    top = [[a] for a in atoms] if rng.random() < 0.6 else _coarsen(rng, [[a] for a in atoms])
    parts = [top]
    for _ in range(H):
        parts.append(_coarsen(rng, parts[-1]))
    parts.reverse()
    if trivial_start:
        parts[0] = [sorted(atoms)]
    return parts


def _block_of(parts: list, a: str) -> tuple:
    return next(tuple(b) for b in parts if a in b)


def random_reward_entries(rng: random.Random, atoms: list, filt: list, H: int, cap: Fraction) -> list:
    """Predictable rewards: ``h(t)`` constant on blocks of ``F(t-1)``."""
    out = []
    for t in range(1, H + 1):
        vals = {}
        for blk in filt[t - 1]:
            v = cap * Fraction(rng.randint(0, 4), 4)
            for a in blk:
                vals[a] = str(v)
        if len(set(vals.values())) == 1:
            out.append(next(iter(vals.values())))
        else:
            out.append({"by_atom": vals})
    return out


BETAS = (Fraction(1, 4), Fraction(1, 2), Fraction(9, 10))


def random_single(rng: random.Random, max_atoms: int = 8, max_horizon: int = 3, betas=BETAS) -> dict:
    n = rng.randint(1, max_atoms)
    H = rng.randint(1, max_horizon)
    atoms = [f"w{k}" for k in range(n)]
    beta = rng.choice(betas)
    K = Fraction(2)
    filt = random_filtration(rng, atoms, H)
    return {
        "name": "random-single",
        "beta": str(beta),
        "reward_bound": str(K),
        "lattice": {"kind": "single", "atoms": atoms, "prob": _rand_prob(rng, n), "filtration": filt},
        "rewards": [random_reward_entries(rng, atoms, filt, H, K * (1 - beta))],
    }


def random_product(
    rng: random.Random,
    max_d: int = 2,
    max_atoms: int = 4,
    max_horizon: int = 2,
    betas=BETAS,
    trivial_start: bool = True,
    min_d: int = 1,
) -> dict:
    d = rng.randint(min_d, max_d)
    beta = rng.choice(betas)
    K = Fraction(2)
    factors = []
    rewards = []
    for i in range(d):
        n = rng.randint(1, max_atoms)
        H = rng.randint(1, max_horizon)
        atoms = [f"p{i}a{k}" for k in range(n)]
        filt = random_filtration(rng, atoms, H, trivial_start)
        factors.append({"atoms": atoms, "prob": _rand_prob(rng, n), "filtration": filt})
        rewards.append(random_reward_entries(rng, atoms, filt, H, K * (1 - beta)))
    return {
        "name": "random-product",
        "beta": str(beta),
        "reward_bound": str(K),
        "lattice": {"kind": "product", "factors": factors},
        "rewards": rewards,
    }


def random_sheet(rng: random.Random, betas=BETAS) -> dict:
    """A sheet instance with at most four sites.

    The standard sheet has trivial axis filtrations, so its rewards are
    deterministic; the variant with axis sites gets random predictable
    rewards driven by the sites on each axis."""
    beta = rng.choice(betas)
    K = Fraction(2)
    cap = K * (1 - beta)
    p = Fraction(rng.randint(1, 3), 4)
    incs = [["1", str(p)], ["-1", str(1 - p)]]

    def val():
        return str(cap * Fraction(rng.randint(0, 4), 4))

    if rng.random() < 0.5:
        dims = rng.choice([[1, 1], [2, 1], [1, 2], [2, 2]])
        rewards = [[val() for _ in range(b)] for b in dims]
        lattice = {"kind": "sheet", "dims": dims, "increments": incs, "axis_sites": False}
    else:
        dims = [1, 1]
        rewards = []
        for i in range(2):
            # h_i(1) must be F_i(0)-measurable, and F_i(0) is generated by site (0,0)
            if rng.random() < 0.5:
                rewards.append([{"by_site": [0, 0], "values": {"1": val(), "-1": val()}}])
            else:
                rewards.append([val()])
        lattice = {"kind": "sheet", "dims": dims, "increments": incs, "axis_sites": True}
    return {"name": "random-sheet", "beta": str(beta), "reward_bound": str(K), "lattice": lattice, "rewards": rewards}


def dump_number(x: Number) -> Any:
    v = fmt_number(x)
    return v if isinstance(v, str) else repr(v) if isinstance(v, float) else v


__all__ = [
    "BETAS",
    "Instance",
    "ScenarioError",
    "atom_key",
    "dump_number",
    "load_scenario",
    "random_filtration",
    "random_product",
    "random_reward_entries",
    "random_sheet",
    "random_single",
]
