import json
from fractions import Fraction as F
from importlib import resources

import pytest

from dynalloc.instances import load_scenario


def bundled_doc(name):
    return json.loads((resources.files("dynalloc") / "data" / f"{name}.json").read_text())


def bundled(name, mode="rational"):
    return load_scenario(bundled_doc(name), mode)


@pytest.fixture
def scen():
    return bundled


@pytest.fixture
def a_proj():
    p = bundled("scenario_a").projects[0]
    return p.rp, p.filt


@pytest.fixture
def b_proj():
    p = bundled("scenario_b").projects[0]
    return p.rp, p.filt


half = F(1, 2)
