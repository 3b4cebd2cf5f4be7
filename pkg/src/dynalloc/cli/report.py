"""JSON-safe encoding of results and the optional text table."""

from __future__ import annotations

import json
import math
from fractions import Fraction
from typing import Any

from ..allocation import AllocationStrategy
from ..instances import Instance, atom_key
from ..prob_core import CheckReport


def encode(x: Any) -> Any:
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else str(x)
    if isinstance(x, int):
        return x
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, CheckReport):
        return {
            "name": x.name,
            "passed": x.passed,
            "worst": encode(x.worst),
            "witness": encode(x.witness),
        }
    if isinstance(x, AllocationStrategy):
        return {"start": list(x.start), "label": x.label, "choices": [list(c) for c in x.choices]}
    if isinstance(x, dict):
        return {atom_key(k) if not isinstance(k, str) else k: encode(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [encode(v) for v in x]
    return str(x)


def rv(inst: Instance, x) -> dict:
    """A random variable as ``{atom key: value}`` in atom order."""
    return {atom_key(a): encode(v) for a, v in zip(inst.lat.space.atoms, x)}


def dumps(report: dict) -> str:
    return json.dumps(encode(report), indent=2, ensure_ascii=False) + "\n"


def render_text(report: dict) -> str:
    lines = [f"{report.get('command', '')}: {report.get('scenario', '')}  verdict={report.get('verdict')}"]
    for c in report.get("checks", []):
        state = "skip" if c.get("passed") is None else ("PASS" if c["passed"] else "FAIL")
        worst = encode(c.get("worst", 0))
        lines.append(f"  {state:4}  {c['name']:<40} worst={worst}")
    for name, val in report.get("values", {}).items():
        lines.append(f"  value {name}: {json.dumps(encode(val), ensure_ascii=False)}")
    for name, why in report.get("skipped", {}).items():
        lines.append(f"  skip  {name}: {why}")
    if "stats" in report:
        lines.append(f"  stats {json.dumps(report['stats'])}  rejected={report.get('rejected_over_budget', 0)}")
    return "\n".join(lines) + "\n"
