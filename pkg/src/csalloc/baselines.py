"""Reference heuristics: density greedy, bucket-first fill, and 2-opt polish.

All three are deterministic given the case (fixed tie-breaking: density
ascending with exact fraction compare, then higher valuation, then item
id) and emit lot-bound-respecting allocations; coverage shortfalls are
left to the caller's feasibility check rather than raised.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .case import CaseInput
from .objective import evaluate
from .requirement import Allocation, case_arrays, check_feasible

__all__ = ["bl1_density_greedy", "bl2_bucket_first", "bl3_two_opt", "density_fill"]


def _density_order(case: CaseInput) -> list[int]:
    """Eligible item indices, cheapest carry per after-haircut dollar first."""
    arrays = case_arrays(case)
    idx = [i for i in range(case.n_items) if case.eligible[i]]
    return sorted(
        idx,
        key=lambda i: (
            Fraction(int(arrays.c[i]), int(arrays.v[i])),
            -int(arrays.v[i]),
            case.inventory[i].id,
        ),
    )


def _add_ok(lots: np.ndarray, i: int, arrays, use_window: bool) -> bool:
    """Would adding one lot of item i keep caps (and the hard window)?"""
    lots[i] += 1
    try:
        if use_window and arrays.window_cap >= 0 and int(lots @ arrays.v) > arrays.window_cap:
            return False
        if arrays.cap_A.size and np.any(arrays.cap_A @ lots > arrays.cap_b):
            return False
        return True
    finally:
        lots[i] -= 1


def density_fill(case: CaseInput, use_window: bool = True, start: np.ndarray | None = None) -> np.ndarray:
    """Greedy density fill until coverage, skipping cap-violating lots.

    Passes are repeated while progress is possible: a fraction-of-U cap
    that blocked an item can reopen after later additions raise U.
    """
    arrays = case_arrays(case)
    order = _density_order(case)
    lots = np.zeros(case.n_items, dtype=np.int64) if start is None else start.copy()
    while int(lots @ arrays.v) < arrays.r_eff:
        progressed = False
        for i in order:
            while lots[i] < arrays.m[i] and int(lots @ arrays.v) < arrays.r_eff:
                if not _add_ok(lots, i, arrays, use_window):
                    break
                lots[i] += 1
                progressed = True
        if not progressed:
            break
    return lots


def bl1_density_greedy(case: CaseInput) -> Allocation:
    """BL-1: rank by cost-to-valuation density and fill to the window
    under caps; may return a flagged coverage shortfall."""
    return Allocation.from_array(density_fill(case, use_window=True))


def bl2_bucket_first(case: CaseInput) -> Allocation:
    """BL-2: pro-rata fill per bucket (capacity-descending order) against
    cap budgets resolved at R_eff, then feasibility repair."""
    from .explorer import repair  # deferred: explorer seeds itself from baselines

    return repair(Allocation.from_array(bucket_fill(case)), case)


def bucket_fill(case: CaseInput) -> np.ndarray:
    """BL-2's pre-repair stage: cap-budgeted pro-rata fill per bucket."""
    arrays = case_arrays(case)
    r_eff = arrays.r_eff

    buckets: dict[str, list[int]] = {}
    for i in range(case.n_items):
        if case.eligible[i]:
            buckets.setdefault(case.inventory[i].bucket, []).append(i)
    capacity = {b: int(sum(arrays.v[i] * arrays.m[i] for i in idx)) for b, idx in buckets.items()}
    total_capacity = sum(capacity.values())
    ordered = sorted(buckets, key=lambda b: (-capacity[b], b))

    # cap budgets in cents, fraction caps resolved against R_eff since the
    # final U is unknown pre-repair
    budgets = {
        row.constraint_id: (
            row.bound if row.mode == "absolute" else (row.ppm * r_eff) // 1_000_000
        )
        for row in arrays.cap_rows
    }
    group_used = {row.constraint_id: 0 for row in arrays.cap_rows}

    lots = np.zeros(case.n_items, dtype=np.int64)
    if total_capacity > 0 and r_eff > 0:
        for b in ordered:
            target = (r_eff * capacity[b]) // total_capacity
            filled = 0
            for i in sorted(buckets[b], key=lambda i: (Fraction(int(arrays.c[i]), int(arrays.v[i])), case.inventory[i].id)):
                while lots[i] < arrays.m[i] and filled + int(arrays.v[i]) <= target:
                    over = False
                    for row in arrays.cap_rows:
                        if row.group_mask[i] and group_used[row.constraint_id] + int(arrays.v[i]) > budgets[row.constraint_id]:
                            over = True
                            break
                    if over:
                        break
                    lots[i] += 1
                    filled += int(arrays.v[i])
                    for row in arrays.cap_rows:
                        if row.group_mask[i]:
                            group_used[row.constraint_id] += int(arrays.v[i])
    return lots


def bl3_two_opt(case: CaseInput, seed: Allocation) -> Allocation:
    """BL-3: first-improvement single-lot removals and pairwise swaps that
    keep feasibility and strictly decrease J; scans in ascending item-id
    order and terminates at a 2-opt local optimum."""
    id_order = sorted(range(case.n_items), key=lambda i: case.inventory[i].id)
    lots = seed.array()
    best_j = evaluate(Allocation.from_array(lots), case)
    arrays = case_arrays(case)

    improved = True
    while improved:
        improved = False
        # removals first: they are the only exit from overshoot
        for i in id_order:
            if lots[i] <= 0:
                continue
            trial = lots.copy()
            trial[i] -= 1
            cand = Allocation.from_array(trial)
            if check_feasible(cand, case).feasible:
                j = evaluate(cand, case)
                if j < best_j:
                    lots, best_j, improved = trial, j, True
                    break
        if improved:
            continue
        for a in id_order:
            if lots[a] <= 0:
                continue
            for b in id_order:
                if a == b or lots[b] >= arrays.m[b]:
                    continue
                trial = lots.copy()
                trial[a] -= 1
                trial[b] += 1
                cand = Allocation.from_array(trial)
                if check_feasible(cand, case).feasible:
                    j = evaluate(cand, case)
                    if j < best_j:
                        lots, best_j, improved = trial, j, True
                        break
            if improved:
                break
    return Allocation.from_array(lots)
