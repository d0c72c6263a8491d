"""Shared fixtures: the two reference models and config-file helpers."""

from __future__ import annotations

import json
from fractions import Fraction

import pytest

from brwdev.model import LatticePMF, Model, OffspringLaw, WeibullTail

# binary branching, lazy random walk on the unit lattice
B2L_OFF = {2: 1.0}
B2L_STEP = {-1: 0.25, 0: 0.5, 1: 0.25}

# offspring law with p0 + p1 strictly between 0 and 1, same step
SCH_OFF = {0: 0.25, 1: 0.25, 2: 0.5}

B2L_OFF_FRAC = {2: Fraction(1)}
B2L_STEP_FRAC = {-1: Fraction(1, 4), 0: Fraction(1, 2), 1: Fraction(1, 4)}
SCH_OFF_FRAC = {0: Fraction(1, 4), 1: Fraction(1, 4), 2: Fraction(1, 2)}


@pytest.fixture(scope="session")
def b2l():
    return Model.build(OffspringLaw(B2L_OFF), LatticePMF(1.0, B2L_STEP))


@pytest.fixture(scope="session")
def sch():
    return Model.build(OffspringLaw(SCH_OFF), LatticePMF(1.0, B2L_STEP))


@pytest.fixture(scope="session")
def weib():
    return Model.build(OffspringLaw(B2L_OFF), WeibullTail(2.0, 1.0))


def write_config(path, payload):
    path.write_text(json.dumps(payload, indent=2))
    return str(path)


B2L_CONFIG = {
    "offspring": {"2": 1.0},
    "step": {"kind": "lattice", "span": 1.0,
             "pmf": {"-1": 0.25, "0": 0.5, "1": 0.25}},
}

SCH_CONFIG = {
    "offspring": {"0": 0.25, "1": 0.25, "2": 0.5},
    "step": {"kind": "lattice", "span": 1.0,
             "pmf": {"-1": 0.25, "0": 0.5, "1": 0.25}},
}

WEIB_CONFIG = {
    "offspring": {"2": 1.0},
    "step": {"kind": "weibull", "alpha": 2.0, "lambda": 1.0},
}

SUBCRITICAL_CONFIG = {
    "offspring": {"1": 1.0},
    "step": {"kind": "lattice", "span": 1.0,
             "pmf": {"-1": 0.25, "0": 0.5, "1": 0.25}},
}


@pytest.fixture()
def b2l_config(tmp_path):
    return write_config(tmp_path / "b2l.json", B2L_CONFIG)


@pytest.fixture()
def sch_config(tmp_path):
    return write_config(tmp_path / "sch.json", SCH_CONFIG)


@pytest.fixture()
def weib_config(tmp_path):
    return write_config(tmp_path / "weib.json", WEIB_CONFIG)
