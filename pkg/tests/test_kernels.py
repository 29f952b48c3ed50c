"""Compiled kernels versus the numpy fallback: identical semantics."""

from __future__ import annotations

import numpy as np
import pytest

from csalloc import _kernels
from csalloc._kernels import _fallback
from csalloc.requirement import case_arrays

from conftest import desk_case
from test_hubo import random_hubo

compiled = pytest.importorskip(
    "csalloc._kernels._core", reason="compiled kernel extension not built"
)


def _model_arrays(h):
    masks = np.zeros(len(h.terms), dtype=np.uint32)
    coeffs = np.zeros(len(h.terms), dtype=np.float64)
    for t, (key, coeff) in enumerate(h.terms.items()):
        m = 0
        for var in key:
            m |= 1 << var
        masks[t] = m
        coeffs[t] = coeff
    return masks, coeffs


def test_selected_implementation_is_compiled():
    assert _kernels.implementation_name() == "compiled"


@pytest.mark.parametrize("seed", range(4))
def test_energy_tables_agree(seed):
    h = random_hubo(10, seed)
    masks, coeffs = _model_arrays(h)
    a = compiled.hubo_energy_table(h.width, masks, coeffs, h.constant)
    b = _fallback.hubo_energy_table(h.width, masks, coeffs, h.constant)
    assert np.array_equal(a, b)  # same accumulation order, bit for bit


@pytest.mark.parametrize("seed", range(4))
def test_evolve_agrees(seed):
    h = random_hubo(8, seed + 10)
    masks, coeffs = _model_arrays(h)
    table = compiled.hubo_energy_table(h.width, masks, coeffs, h.constant)
    rng = np.random.default_rng(seed)
    gammas = rng.uniform(0, np.pi, 3)
    betas = rng.uniform(0, np.pi, 3)
    a = compiled.qaoa_evolve(table, gammas, betas)
    b = _fallback.qaoa_evolve(table, gammas, betas)
    assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5])
def test_enumerate_best_agrees(seed):
    case = desk_case(1700 + seed, cap_tightness=(seed % 3) * 0.4)
    arrays = case_arrays(case)
    args = (
        arrays.v, arrays.c, arrays.h, arrays.m, arrays.L, arrays.w, arrays.alpha,
        arrays.lam, arrays.mu, arrays.gam, arrays.r_eff, arrays.window_cap,
        arrays.cap_A, arrays.cap_b,
    )
    for mode in (0, 1):
        found_a, x_a, j_a, over_a = compiled.enumerate_best(*args, mode)
        found_b, x_b, j_b, over_b = _fallback.enumerate_best(*args, mode)
        assert found_a == found_b
        assert np.array_equal(x_a, x_b)
        assert j_a == pytest.approx(j_b, rel=1e-12, abs=1e-12)
        assert over_a == over_b


def test_enumerate_infeasible_case_agrees(t1_doc):
    import json

    from csalloc.case import canonical_json, parse_case

    doc = json.loads(json.dumps(t1_doc))
    doc["window"]["buffer"] = 5_000
    case = parse_case(canonical_json(doc))
    arrays = case_arrays(case)
    args = (
        arrays.v, arrays.c, arrays.h, arrays.m, arrays.L, arrays.w, arrays.alpha,
        arrays.lam, arrays.mu, arrays.gam, arrays.r_eff, arrays.window_cap,
        arrays.cap_A, arrays.cap_b,
    )
    found_a, *_ = compiled.enumerate_best(*args, 0)
    found_b, *_ = _fallback.enumerate_best(*args, 0)
    assert found_a == found_b == False  # noqa: E712
