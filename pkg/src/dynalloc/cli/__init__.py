"""Command line interface: ``validate``, ``value``, ``verify`` and ``random``.

Exit codes: 0 pass, 1 verification failure, 2 input error, 3 budget
exceeded.  Reports are JSON on stdout (or a plain text table with
``--format text``) and are byte-identical across runs in rational mode.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Sequence

from ..instances import (
    Instance,
    ScenarioError,
    load_scenario,
    random_product,
    random_sheet,
    random_single,
)
from ..oracle import BudgetExceeded, EnumerationBudget, count_strategies, oracle_Phi
from ..prob_core import check_F4, check_product_structure, cond_expect, parse_number
from ..stopping import check_rewards
from ..allocation import derive_axis_filtrations
from ..values import general_value, product_integral, whittle_value
from .report import dumps, render_text, rv
from .suites import SUITES, Context, run_suite

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3


class InputError(Exception):
    pass


def bundled_scenarios() -> list:
    root = resources.files("dynalloc") / "data"
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def read_document(path: str) -> tuple:
    """``(document, label)``; a bare name falls back to the bundled data."""
    p = Path(path)
    if p.is_file():
        text = p.read_text(encoding="utf-8")
    else:
        res = resources.files("dynalloc") / "data" / f"{path}.json"
        if not res.is_file():
            raise InputError(f"{path}: no such file or bundled scenario")
        text = res.read_text(encoding="utf-8")
    try:
        return json.loads(text), path
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def load(args, doc: dict) -> Instance:
    try:
        inst = load_scenario(doc, args.mode)
    except ScenarioError as exc:
        if exc.check:
            raise
        raise InputError(str(exc)) from exc
    if getattr(args, "start", None):
        try:
            start = tuple(int(x) for x in args.start.split(","))
        except ValueError as exc:
            raise InputError(f"--start: expected comma separated integers, got {args.start!r}") from exc
        if len(start) != inst.lat.dim or any(not 0 <= s <= b for s, b in zip(start, inst.lat.bounds)):
            raise InputError(f"--start {args.start} is not a lattice point")
        inst.start = start
    if getattr(args, "retirement", None) is not None:
        try:
            M = parse_number(args.retirement, args.mode)
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"--retirement: cannot parse {args.retirement!r}") from exc
        if M < 0:
            raise InputError("--retirement must be non-negative")
        inst.retirement = M
    return inst


def tolerance(args, inst_beta=None):
    if args.tol is not None:
        return parse_number(args.tol, "float" if args.mode == "float" else "rational")
    return 0 if args.mode == "rational" else 1e-9


def budget(args) -> EnumerationBudget:
    return EnumerationBudget(max_rules=args.budget) if args.budget else EnumerationBudget()


def verdict_of(checks: list) -> str:
    if any(c["passed"] is False for c in checks):
        return "fail"
    if any(c["passed"] is None for c in checks):
        return "skipped"
    return "pass"


EXIT_FOR = {"pass": EXIT_PASS, "fail": EXIT_FAIL, "skipped": EXIT_BUDGET}


# ---------------------------------------------------------------------------
# verbs


def cmd_validate(args) -> tuple:
    doc, label = read_document(args.path)
    report = {"command": "validate", "scenario": doc.get("name", label) if isinstance(doc, dict) else label}
    try:
        inst = load(args, doc)
    except ScenarioError as exc:
        report["checks"] = [{"name": exc.check, "passed": False, "worst": 0, "witness": exc.witness, "message": str(exc)}]
        report["verdict"] = "fail"
        return report, EXIT_FAIL
    tol = tolerance(args)
    lat = inst.lat
    checks = []
    for rep in (lat.check_complete(), lat.check_f1()):
        checks.append({"name": rep.name, "passed": rep.passed, "worst": 0, "witness": rep.witness})
    f1 = checks[-1]["passed"]
    if f1:
        # (F2): each axis filtration is a filtration by construction of F(s)
        checks.append({"name": "F2", "passed": True, "worst": 0, "witness": None})
        f4 = check_F4(lat, tol)
        checks.append({"name": "F4", "passed": f4.passed, "worst": f4.worst, "witness": f4.witness})
        prod = check_product_structure(lat)
        checks.append({"name": "product structure (reported only)", "passed": True, "worst": 0, "witness": None, "product": prod.passed})
        for i, rp in enumerate(inst.rps):
            small = derive_axis_filtrations(lat, i)[0]
            rep = check_rewards(rp, small, tol)
            checks.append({"name": f"project {i}: {rep.name}", "passed": rep.passed, "worst": 0, "witness": rep.witness})
    report["checks"] = checks
    report["verdict"] = verdict_of(checks)
    return report, EXIT_FOR[report["verdict"]]


def _valid_or_fail(inst: Instance, tol) -> list:
    bad = []
    for i, rp in enumerate(inst.rps):
        rep = check_rewards(rp, derive_axis_filtrations(inst.lat, i)[0], tol)
        if not rep.passed:
            bad.append({"name": f"project {i}: {rep.name}", "passed": False, "worst": 0, "witness": rep.witness})
    f1 = inst.lat.check_f1()
    if not f1.passed:
        bad.append({"name": "F1", "passed": False, "worst": 0, "witness": f1.witness})
    return bad


def cmd_value(args) -> tuple:
    doc, label = read_document(args.path)
    inst = load(args, doc)
    tol = tolerance(args)
    report = {"command": "value", "scenario": inst.name, "start": list(inst.start), "retirement": inst.retirement}
    bad = _valid_or_fail(inst, tol)
    if bad:
        report.update(checks=bad, verdict="fail")
        return report, EXIT_FAIL
    lat, M, start = inst.lat, inst.retirement, inst.start
    part = lat(start)
    routes = {}
    product = check_product_structure(lat).passed
    if M == 0:
        g = general_value(inst.projects, lat, start)
        routes.update(g["routes"])
        f4 = g["f4"]
    else:
        f4 = check_F4(lat, tol).passed
        routes["product_integral"] = cond_expect(product_integral(inst.projects, start, M), part, lat.space)
    if product:
        routes["whittle"] = whittle_value(inst.projects, start, M, lat)
    skipped = {}
    try:
        routes["oracle"] = oracle_Phi(lat, inst.rps, start, M, budget(args))
    except BudgetExceeded as exc:
        skipped["oracle"] = str(exc)
    ref = next(iter(routes.values()))
    worst = max(abs(x - y) for v in routes.values() for x, y in zip(v, ref))
    checks = [{"name": "routes agree", "passed": worst <= tol, "worst": worst, "witness": None}]
    if not f4:
        checks.append({"name": "F4 (formulas need it)", "passed": False, "worst": 0, "witness": None})
    report["values"] = {k: rv(inst, v) for k, v in routes.items()}
    if skipped:
        report["skipped"] = skipped
    report["checks"] = checks
    # a skipped oracle alone does not fail the command when the other routes agree
    report["verdict"] = verdict_of(checks)
    return report, EXIT_FOR[report["verdict"]]


def cmd_verify(args) -> tuple:
    doc, label = read_document(args.path)
    inst = load(args, doc)
    tol = tolerance(args)
    report = {"command": "verify", "scenario": inst.name, "suite": args.suite}
    bad = _valid_or_fail(inst, tol)
    if bad:
        report.update(checks=bad, verdict="fail")
        return report, EXIT_FAIL
    ctx = Context(budget(args), tol)
    checks = run_suite(args.suite, inst, ctx)
    report["checks"] = checks
    report["verdict"] = verdict_of(checks)
    return report, EXIT_FOR[report["verdict"]]


GENERATORS = ("single", "product", "sheet")


def generate(rng: random.Random, kind: str, args) -> dict:
    if kind == "single":
        return random_single(rng, max_atoms=args.max_atoms, max_horizon=args.max_horizon)
    if kind == "product":
        return random_product(rng, max_d=args.max_d, max_atoms=args.max_atoms, max_horizon=args.max_horizon)
    return random_sheet(rng)


def cmd_random(args) -> tuple:
    bud = budget(args)
    total_atoms = args.max_atoms ** (args.max_d if args.kind in ("product", "mixed") else 1)
    if args.count < 0:
        raise InputError("--count must be non-negative")
    try:
        bud.admit(args.max_strategies, total_atoms, args.max_horizon, args.max_d)
    except BudgetExceeded as exc:
        report = {"command": "random", "verdict": "rejected", "reason": f"caps exceed the oracle budget: {exc}"}
        return report, EXIT_BUDGET
    rng = random.Random(args.seed)
    ctx = Context(bud, tolerance(args))
    results = []
    rejected = 0
    stats = {"pass": 0, "fail": 0, "skipped": 0}
    while len(results) < args.count:
        kind = rng.choice(GENERATORS) if args.kind == "mixed" else args.kind
        doc = generate(rng, kind, args)
        inst = load_scenario(doc, args.mode)
        if count_strategies(inst.lat, inst.start) > args.max_strategies:
            rejected += 1
            continue
        checks = run_suite(args.suite, inst, ctx)
        v = verdict_of(checks)
        stats[v] += 1
        entry = {"index": len(results), "kind": kind, "verdict": v, "checks": len(checks)}
        failing = [c for c in checks if c["passed"] is False]
        skips = [c["name"] for c in checks if c["passed"] is None]
        if skips:
            entry["skipped"] = skips
        if failing:
            entry["failures"] = failing
            entry["scenario"] = doc
        results.append(entry)
    report = {
        "command": "random",
        "seed": args.seed,
        "count": args.count,
        "suite": args.suite,
        "rejected_over_budget": rejected,
        "stats": stats,
        "instances": results,
    }
    report["verdict"] = "fail" if stats["fail"] else ("skipped" if stats["skipped"] else "pass")
    return report, EXIT_FOR[report["verdict"]]


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynalloc", description="Exact dynamic allocation indices and their checks.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=("rational", "float"), default="rational")
    common.add_argument("--tol", default=None, help="comparison tolerance (default 0 rational, 1e-9 float)")
    common.add_argument("--budget", type=int, default=None, help="maximum number of enumerated rules or strategies")
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("--timing", action="store_true", help="add wall-clock seconds to the report")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a scenario file")
    p.add_argument("path")

    p = sub.add_parser("value", parents=[common], help="value by every applicable route")
    p.add_argument("path")
    p.add_argument("--start", help="starting point, e.g. 1,0")
    p.add_argument("--retirement", help="retirement reward M")

    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("path")
    p.add_argument("--suite", default="all", choices=sorted(SUITES) + ["all"])
    p.add_argument("--start")
    p.add_argument("--retirement")

    p = sub.add_parser("random", parents=[common], help="seeded random instances through a suite")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--suite", default="all", choices=sorted(SUITES) + ["all"])
    p.add_argument("--kind", choices=GENERATORS + ("mixed",), default="mixed")
    p.add_argument("--max-d", type=int, default=2)
    p.add_argument("--max-atoms", type=int, default=4, help="atoms per project")
    p.add_argument("--max-horizon", type=int, default=2)
    p.add_argument("--max-strategies", type=int, default=300, help="instances above this are redrawn")

    sub.add_parser("list", help="list bundled scenarios")
    return parser


COMMANDS = {"validate": cmd_validate, "value": cmd_value, "verify": cmd_verify, "random": cmd_random}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_PASS
    if args.verb == "list":
        sys.stdout.write("\n".join(bundled_scenarios()) + "\n")
        return EXIT_PASS
    t0 = time.perf_counter()
    try:
        report, code = COMMANDS[args.verb](args)
    except (InputError, ScenarioError) as exc:
        sys.stderr.write(f"dynalloc: error: {exc}\n")
        return EXIT_INPUT
    except BudgetExceeded as exc:
        sys.stderr.write(f"dynalloc: budget exceeded: {exc}\n")
        return EXIT_BUDGET
    if args.timing:
        report["timing_seconds"] = round(time.perf_counter() - t0, 3)
    sys.stdout.write(render_text(report) if args.format == "text" else dumps(report))
    return code
