"""Synthetic case generator: determinism, regime tiers, the pinned T1."""

from __future__ import annotations

from pathlib import Path

import pytest

from csalloc.case import parse_case
from csalloc.baselines import bl1_density_greedy
from csalloc.generator import GenSpec, case_bytes, generate
from csalloc.requirement import case_arrays, check_feasible

DATA = Path(__file__).parent / "data"


def test_same_spec_same_bytes():
    spec = GenSpec(n_items=6, seed=77, cap_tightness=0.5)
    assert case_bytes(spec) == case_bytes(spec)


def test_different_seeds_differ():
    assert case_bytes(GenSpec(seed=1)) != case_bytes(GenSpec(seed=2))


def test_m2_strictly_tighter_than_m1():
    case = generate(GenSpec(n_items=9, seed=5))
    cells = {}
    for (icad, bucket, regime), ppm in case.haircuts.entries:
        cells.setdefault((icad, bucket), {})[regime] = ppm
    assert cells
    for (icad, bucket), regimes in cells.items():
        assert regimes["m2"] > regimes["m1"]
        assert regimes["sp"] >= regimes["m1"]


def test_m2_regime_lowers_valuations():
    m1_case = generate(GenSpec(n_items=6, seed=9, regime="m1"))
    m2_case = generate(GenSpec(n_items=6, seed=9, regime="m2"))
    for i in range(m1_case.n_items):
        if m1_case.inventory[i].is_cash:
            continue
        assert (m2_case.v_cents[i] or 0) < (m1_case.v_cents[i] or 0)


def test_tiny_profile_reproduces_pinned_t1():
    assert case_bytes(GenSpec(profile="tiny", n_items=2)) == DATA.joinpath("t1_case.json").read_bytes()


def test_generated_cases_validate_and_are_window_feasible():
    for seed in range(12):
        spec = GenSpec(n_items=4 + seed % 5, seed=600 + seed,
                       cap_tightness=(seed % 3) * 0.4)
        case = generate(spec)  # parse_case inside validates
        probe = bl1_density_greedy(case)
        assert check_feasible(probe, case).feasible


def test_desk_space_enumerable():
    for seed in (0, 3, 8):
        case = generate(GenSpec(n_items=8, seed=seed, max_space=300_000))
        assert case_arrays(case).search_space() <= 10_000_000


def test_weight_profiles():
    practical = generate(GenSpec(n_items=4, seed=1))
    assert practical.weights.lam == pytest.approx(30.0)
    assert practical.weights.gamma == pytest.approx(1.39e-5, rel=0.01)
    tight = generate(GenSpec(n_items=4, seed=1, weight_profile="tight_liquidity"))
    assert tight.weights.lam == pytest.approx(28.57, rel=0.001)
    assert tight.weights.mu == pytest.approx(0.0025)
    assert tight.weights.gamma == pytest.approx(2.22e-5, rel=0.01)


def test_pinned_d8_matches_generator():
    spec = GenSpec(n_items=8, seed=2035, cap_tightness=1.0)
    assert case_bytes(spec) == DATA.joinpath("d8_case.json").read_bytes()


def test_d8_caps_bind_the_optimum(d8):
    from csalloc.case import canonical_json, case_to_dict
    from csalloc.certifier import brute_force

    capped, _ = brute_force(d8)
    doc = case_to_dict(d8)
    doc["caps"] = {}
    uncapped, _ = brute_force(parse_case(canonical_json(doc)))
    assert capped.lots != uncapped.lots
