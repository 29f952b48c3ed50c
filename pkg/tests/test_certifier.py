"""Branch-and-bound certification against the exhaustive oracle."""

from __future__ import annotations

import dataclasses
import json

import numpy as np
import pytest

from csalloc.case import canonical_json, parse_case
from csalloc.baselines import bl1_density_greedy, bl3_two_opt
from csalloc.certifier import (
    InfeasibleError,
    SearchSpaceError,
    brute_force,
    brute_force_min_overshoot,
    certify,
    ucap_precheck,
)
from csalloc.objective import evaluate
from csalloc.requirement import Allocation, check_feasible

from conftest import desk_case


class TestBruteForce:
    def test_t1_oracle(self, t1):
        alloc, j = brute_force(t1)
        assert alloc.lots == (0, 6)
        assert j == pytest.approx(3.0)

    def test_infeasible_reported(self, t1_doc):
        doc = json.loads(json.dumps(t1_doc))
        doc["exposure"]["amount"] = 10_000_000
        case = parse_case(canonical_json(doc))
        with pytest.raises(InfeasibleError):
            brute_force(case)

    def test_single_item_forced_count(self, t1_doc):
        doc = json.loads(json.dumps(t1_doc))
        doc["inventory"] = [doc["inventory"][1]]
        doc["costs"]["carry_per_lot_day"] = {"UST_5Y": 0.5}
        doc["scenarios"] = {"loss_matrix": [[0.0]], "weights": [1.0], "alpha": 0.9}
        doc["caps"] = {}
        doc["exposure"]["amount"] = 28_500  # = 3 * 9,500
        doc["csa"]["terms"]["ra"] = 9_500
        doc["window"]["buffer"] = 100_000
        case = parse_case(canonical_json(doc))
        alloc, _ = brute_force(case)
        assert alloc.lots == (3,)

    def test_search_space_refusal(self, t1_doc):
        doc = json.loads(json.dumps(t1_doc))
        doc["inventory"][0]["max_lots"] = 4000
        doc["inventory"][1]["max_lots"] = 4000
        case = parse_case(canonical_json(doc))
        with pytest.raises(SearchSpaceError, match=r"16\d{6}"):
            brute_force(case)

    def test_lexicographic_tie_break(self, t1_doc):
        # zero carries and weights: every feasible allocation has J = 0,
        # the lex-smallest feasible vector must win
        doc = json.loads(json.dumps(t1_doc))
        doc["costs"]["carry_per_lot_day"] = {"CASH_USD": 0.0, "UST_5Y": 0.0}
        case = parse_case(canonical_json(doc))
        alloc, j = brute_force(case)
        assert j == 0.0
        assert alloc.lots == (0, 6)  # first feasible in lex order


class TestCertify:
    def test_t1_optimal_with_slacks(self, t1):
        report = certify(t1, Allocation((0, 6)))
        assert report.status == "OPTIMAL"
        assert report.incumbent_j == pytest.approx(3.0)
        assert report.best_bound == report.incumbent_j
        assert report.gap == 0.0
        slacks = dict(report.slacks)
        assert slacks["coverage"] == pytest.approx(7_000.0)
        assert slacks["window"] == pytest.approx(3_000.0)
        assert slacks["cash_cap"] == pytest.approx(11_400.0)

    def test_t1_tight_window_infeasible_with_bstar(self, t1_doc):
        doc = json.loads(json.dumps(t1_doc))
        doc["window"]["buffer"] = 5_000
        case = parse_case(canonical_json(doc))
        report = certify(case, Allocation((0, 0)))
        assert report.status == "INFEASIBLE"
        assert report.incumbent is None and report.incumbent_j is None
        assert report.b_star is not None
        assert report.b_star.b_star_exact_cents == 700_000
        assert report.b_star.infeasible_u_cap

    def test_wall_zero_reports_feasible_with_gap(self, d8):
        incumbent = bl3_two_opt(d8, bl1_density_greedy(d8))
        limits = dataclasses.replace(d8.limits, wall_seconds=0.0)
        report = certify(d8, incumbent, limits)
        assert report.status == "FEASIBLE"
        assert report.gap is not None and report.gap > 0
        assert report.best_bound <= report.incumbent_j

    def test_improves_on_suboptimal_incumbent(self, t1):
        report = certify(t1, Allocation((1, 5)))
        assert report.status == "OPTIMAL"
        assert report.incumbent_j == pytest.approx(3.0)
        assert report.incumbent.lots == (0, 6)

    def test_lot_bound_violation_is_input_error(self, t1):
        with pytest.raises(ValueError, match="lot bounds"):
            certify(t1, Allocation((0, 9)))

    def test_mta_gated_noop_can_be_the_optimum(self, t1_doc):
        doc = json.loads(json.dumps(t1_doc))
        doc["csa"]["terms"]["mta"] = 100_000
        doc["window"]["buffer"] = 5_000  # standard window empty (B* = 7,000)
        doc["inventory"][1]["current_lots"] = 2
        case = parse_case(canonical_json(doc))
        alloc, j = brute_force(case)
        assert alloc.lots == (0, 2)  # the gated no-op
        report = certify(case, Allocation((0, 2)))
        assert report.status == "OPTIMAL"
        assert report.incumbent.lots == (0, 2)
        assert report.incumbent_j == pytest.approx(j)


class TestOracleEquivalence:
    def test_certify_matches_brute_force(self):
        for seed in range(30):
            case = desk_case(1100 + seed, cap_tightness=(seed % 4) * 0.3)
            alloc, j_star = brute_force(case)
            incumbent = bl3_two_opt(case, bl1_density_greedy(case))
            report = certify(case, incumbent)
            assert report.status == "OPTIMAL"
            assert report.incumbent_j == pytest.approx(j_star, rel=1e-9)

    def test_bound_validity_under_timeout(self):
        for seed in range(8):
            case = desk_case(1200 + seed, cap_tightness=0.5)
            _, j_star = brute_force(case)
            incumbent = bl3_two_opt(case, bl1_density_greedy(case))
            limits = dataclasses.replace(case.limits, wall_seconds=0.0)
            report = certify(case, incumbent, limits)
            assert report.best_bound <= j_star + 1e-9  # never prune the optimum

    def test_slack_consistency(self):
        case = desk_case(1300, cap_tightness=0.8)
        incumbent = bl3_two_opt(case, bl1_density_greedy(case))
        report = certify(case, incumbent)
        recomputed = check_feasible(report.incumbent, case).slacks
        assert report.slacks == recomputed

    def test_status_trichotomy(self, t1, t1_doc):
        assert certify(t1, Allocation((0, 6))).status == "OPTIMAL"
        doc = json.loads(json.dumps(t1_doc))
        doc["window"]["buffer"] = 5_000
        infeasible_case = parse_case(canonical_json(doc))
        assert certify(infeasible_case, Allocation((0, 0))).status == "INFEASIBLE"
        with pytest.raises(InfeasibleError):
            brute_force(infeasible_case)


class TestUcapPrecheck:
    def test_generous_buffer_not_flagged(self, t1):
        report = ucap_precheck(t1)
        assert not report.infeasible_u_cap
        assert report.b_star_exact_cents == 700_000

    def test_tight_buffer_flagged(self, t1_doc):
        doc = json.loads(json.dumps(t1_doc))
        doc["window"]["buffer"] = 5_000
        case = parse_case(canonical_json(doc))
        report = ucap_precheck(case)
        assert report.infeasible_u_cap
        assert report.b_star_exact_cents == 700_000

    def test_ra_aligned_cash_line_gives_zero(self, t1_doc):
        doc = json.loads(json.dumps(t1_doc))
        doc["caps"] = {}
        case = parse_case(canonical_json(doc))
        report = ucap_precheck(case)
        assert report.b_star_exact_cents == 0

    def test_exact_matches_enumeration_oracle(self):
        for seed in range(12):
            case = desk_case(1400 + seed, cap_tightness=0.7)
            report = ucap_precheck(case)
            assert report.b_star_exact_cents == brute_force_min_overshoot(case)
