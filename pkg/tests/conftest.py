"""Shared fixtures: the pinned T1 two-asset case and desk-scale helpers."""

from __future__ import annotations

from pathlib import Path

import pytest

from csalloc.case import parse_case
from csalloc.generator import GenSpec, generate

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def t1():
    """Two-asset fixture: cash (v=10,000, c=1.0/d, m=6) vs a 5%-haircut
    bond (v=9,500, c=0.5/d, m=8); R_eff=50,000, B=10,000 hard cap, 20%
    cash cap, zero weights.  Brute-force optimum is (0, 6) with J=3.0."""
    return parse_case(DATA.joinpath("t1_case.json").read_bytes())


@pytest.fixture(scope="session")
def t1_doc(t1):
    import json

    return json.loads(DATA.joinpath("t1_case.json").read_text())


def desk_case(seed: int, **kwargs):
    defaults = dict(n_items=4 + seed % 5, seed=seed, cap_tightness=0.4)
    defaults.update(kwargs)
    return generate(GenSpec(**defaults))


@pytest.fixture(scope="session")
def d8():
    """Eight-asset cap-tight fixture used for the hybrid dominance checks."""
    return parse_case(DATA.joinpath("d8_case.json").read_bytes())
