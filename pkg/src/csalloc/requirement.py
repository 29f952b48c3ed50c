"""Effective requirement, coverage feasibility, and the minimal buffer B*.

All constraint arithmetic is exact: coverage and absolute caps compare
integer cents, fraction-of-U caps compare the integer numerator
``ppm * U - 1e6 * group_value`` (the spec's linearization with U moved to
the left-hand side), so "binding" means an exactly-zero slack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .case import PPM, CapSpec, CaseInput, CsaTerms, cents_to_dollars

__all__ = [
    "Allocation",
    "Violation",
    "FeasibilityReport",
    "BStarReport",
    "InfeasibleBaseError",
    "effective_requirement",
    "check_feasible",
    "min_buffer",
    "case_arrays",
    "CaseArrays",
]


class InfeasibleBaseError(Exception):
    """No feasible cover exists even without the coverage cap."""

    def __init__(self, constraint_id: str, detail: str):
        self.constraint_id = constraint_id
        super().__init__(f"infeasible_base: most-violated constraint {constraint_id} ({detail})")


@dataclass(frozen=True)
class Allocation:
    """Integer lot vector aligned to the case inventory."""

    lots: tuple[int, ...]

    @staticmethod
    def from_array(x) -> "Allocation":
        return Allocation(lots=tuple(int(v) for v in x))

    def array(self) -> np.ndarray:
        return np.asarray(self.lots, dtype=np.int64)

    def coverage_cents(self, case: CaseInput) -> int:
        return int(sum((case.v_cents[i] or 0) * self.lots[i] for i in range(len(self.lots))))


class Violation(NamedTuple):
    constraint_id: str
    lhs: float
    bound: float
    slack: float


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple[Violation, ...]
    binding: frozenset[str]
    slacks: tuple[tuple[str, float], ...]  # every evaluated constraint, in order
    flags: frozenset[str] = frozenset()


@dataclass(frozen=True)
class BStarReport:
    """Minimal feasible buffer: greedy upper bound and optional exact value."""

    b_star_greedy_cents: int
    b_star_exact_cents: Optional[int]
    b_star_bps: float
    infeasible_u_cap: bool
    flags: frozenset[str] = frozenset()

    @property
    def b_star_cents(self) -> int:
        return self.b_star_exact_cents if self.b_star_exact_cents is not None else self.b_star_greedy_cents


def effective_requirement(exposure_cents: int, terms: CsaTerms) -> int:
    """Smallest RA multiple covering the netted exposure.

    ceil(max(E - T - IA - IM, 0) / RA) * RA, exactly in cents.
    """
    need = exposure_cents - terms.threshold_cents - terms.ia_cents - terms.im_cents
    if need <= 0:
        return 0
    ra = terms.ra_cents
    return ((need + ra - 1) // ra) * ra


# ---------------------------------------------------------------------------
# constraint system in array form (shared with kernels and certifier)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CapRow:
    """One linearized cap: A . x <= b in exact integer units."""

    constraint_id: str
    coeffs: np.ndarray  # int64[n]
    bound: int
    mode: str  # "absolute" | "fraction_of_U"
    group_mask: np.ndarray  # bool[n]
    ppm: int  # fraction caps only


@dataclass(frozen=True)
class CaseArrays:
    """Numeric view of a case for the hot paths."""

    v: np.ndarray  # int64 cents, zero for ineligible
    c: np.ndarray  # int64 carry cents / lot / day
    h: np.ndarray  # int64 current lots
    m: np.ndarray  # int64 max lots, zero for ineligible
    eligible: np.ndarray  # bool
    L: np.ndarray  # float64 (S, n) dollars per lot
    w: np.ndarray  # float64 (S,)
    alpha: float
    lam: float
    mu: float
    gam: float
    r_eff: int
    window_cap: int  # r_eff + buffer when hard cap enabled, else -1
    cap_rows: tuple[CapRow, ...]
    cap_A: np.ndarray  # int64 (K, n)
    cap_b: np.ndarray  # int64 (K,)

    def search_space(self) -> int:
        return int(np.prod((self.m + 1).astype(object)))


def _cap_groups(case: CaseInput) -> list[tuple[str, CapSpec, np.ndarray]]:
    n = case.n_items
    groups: list[tuple[str, CapSpec, np.ndarray]] = []
    if case.caps.cash is not None:
        mask = np.array([it.is_cash for it in case.inventory], dtype=bool)
        groups.append(("cash_cap", case.caps.cash, mask))
    for name, spec in case.caps.issuer:
        mask = np.array([it.issuer == name for it in case.inventory], dtype=bool)
        groups.append((f"issuer_cap:{name}", spec, mask))
    for name, spec in case.caps.asset_class:
        mask = np.array([it.asset_class == name for it in case.inventory], dtype=bool)
        groups.append((f"class_cap:{name}", spec, mask))
    for name, spec in case.caps.currency:
        mask = np.array([it.currency == name for it in case.inventory], dtype=bool)
        groups.append((f"currency_cap:{name}", spec, mask))
    if case.caps.global_cap is not None:
        groups.append(("global_cap", case.caps.global_cap, np.ones(n, dtype=bool)))
    return groups


def case_arrays(case: CaseInput, window_override_cents: Optional[int] = None) -> CaseArrays:
    """Build (and cache) the array view; window_override replaces the
    buffer for B* bisection probes (pass None to use the case window)."""
    if window_override_cents is None:
        cached = getattr(case, "_arrays_cache", None)
        if cached is not None:
            return cached

    n = case.n_items
    v = np.array([case.v_cents[i] or 0 for i in range(n)], dtype=np.int64)
    c = np.array([it.carry_cost_cents for it in case.inventory], dtype=np.int64)
    h = np.array([it.current_lots for it in case.inventory], dtype=np.int64)
    eligible = np.array(case.eligible, dtype=bool)
    m = np.array(
        [it.max_lots if case.eligible[i] else 0 for i, it in enumerate(case.inventory)],
        dtype=np.int64,
    )
    if case.scenarios.n_scenarios:
        L = np.array(case.scenarios.loss, dtype=np.float64)
        w = np.array(case.scenarios.weights, dtype=np.float64)
    else:
        L = np.zeros((0, n), dtype=np.float64)
        w = np.zeros(0, dtype=np.float64)

    rows: list[CapRow] = []
    for cid, spec, mask in _cap_groups(case):
        if spec.mode == "absolute":
            coeffs = np.where(mask, v, 0).astype(np.int64)
            rows.append(CapRow(cid, coeffs, spec.value, "absolute", mask, 0))
        else:
            coeffs = (np.where(mask, v * PPM, 0) - spec.value * v).astype(np.int64)
            rows.append(CapRow(cid, coeffs, 0, "fraction_of_U", mask, spec.value))

    if window_override_cents is not None:
        window_cap = case.r_eff_cents + window_override_cents
    elif case.window.hard_cap_enabled:
        window_cap = case.r_eff_cents + case.window.buffer_cents
    else:
        window_cap = -1

    arrays = CaseArrays(
        v=v, c=c, h=h, m=m, eligible=eligible, L=L, w=w,
        alpha=case.scenarios.alpha,
        lam=case.weights.lam, mu=case.weights.mu, gam=case.weights.gamma,
        r_eff=case.r_eff_cents,
        window_cap=window_cap,
        cap_rows=tuple(rows),
        cap_A=np.array([r.coeffs for r in rows], dtype=np.int64).reshape(len(rows), n),
        cap_b=np.array([r.bound for r in rows], dtype=np.int64),
    )
    if window_override_cents is None:
        object.__setattr__(case, "_arrays_cache", arrays)
    return arrays


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------


def check_feasible(x: Allocation, case: CaseInput) -> FeasibilityReport:
    """Evaluate every constraint in canonical order with exact slacks.

    Order: lot bounds, eligibility, coverage (U >= R_eff), window
    (U <= R_eff + B when the hard cap is on), cash cap, issuer/class/
    currency/global caps, then the MTA no-transfer gate.  Slacks are
    reported in dollars; infeasibility is data, not an error.
    """
    arrays = case_arrays(case)
    lots = x.array()
    if lots.shape[0] != case.n_items:
        raise ValueError(f"allocation has {lots.shape[0]} entries, expected {case.n_items}")

    violations: list[Violation] = []
    binding: set[str] = set()
    slacks: list[tuple[str, float]] = []
    flags: set[str] = set()

    gate_ok = True  # lot bounds + eligibility + caps all satisfied
    for i, item in enumerate(case.inventory):
        xi = int(lots[i])
        if xi < 0:
            violations.append(Violation(f"lot_bounds:{item.id}", float(xi), 0.0, float(xi)))
            gate_ok = False
        elif xi > item.max_lots:
            violations.append(
                Violation(f"lot_bounds:{item.id}", float(xi), float(item.max_lots), float(item.max_lots - xi))
            )
            gate_ok = False
        if not case.eligible[i] and xi != 0:
            violations.append(Violation(f"eligibility:{item.id}", float(xi), 0.0, float(-xi)))
            gate_ok = False

    U = int(lots @ arrays.v)
    u_dollars = cents_to_dollars(U)

    cov_slack = U - arrays.r_eff
    slacks.append(("coverage", cents_to_dollars(cov_slack)))
    window_violated = False
    if cov_slack < 0:
        violations.append(
            Violation("coverage", u_dollars, cents_to_dollars(arrays.r_eff), cents_to_dollars(cov_slack))
        )
        window_violated = True
    elif cov_slack == 0:
        binding.add("coverage")

    if case.window.hard_cap_enabled:
        cap = case.r_eff_cents + case.window.buffer_cents
        win_slack = cap - U
        slacks.append(("window", cents_to_dollars(win_slack)))
        if win_slack < 0:
            violations.append(Violation("window", u_dollars, cents_to_dollars(cap), cents_to_dollars(win_slack)))
            window_violated = True
        elif win_slack == 0:
            binding.add("window")

    for row in arrays.cap_rows:
        lhs_cents = int(lots @ np.where(row.group_mask, arrays.v, 0))
        if row.mode == "absolute":
            slack_num = row.bound - lhs_cents
            slack_dollars = cents_to_dollars(slack_num)
            bound_dollars = cents_to_dollars(row.bound)
        else:
            slack_num = row.ppm * U - PPM * lhs_cents
            slack_dollars = slack_num / (100.0 * PPM)
            bound_dollars = (row.ppm * U) / (100.0 * PPM)
        slacks.append((row.constraint_id, slack_dollars))
        if slack_num < 0:
            violations.append(
                Violation(row.constraint_id, cents_to_dollars(lhs_cents), bound_dollars, slack_dollars)
            )
            gate_ok = False
        elif slack_num == 0:
            binding.add(row.constraint_id)

    feasible = not violations

    # MTA gate: the no-op allocation is admitted when holdings satisfy
    # everything except the coverage window and any transfer would be
    # gated (CSAs gate transfers, not holdings).
    if (
        not feasible
        and window_violated
        and gate_ok
        and case.terms.mta_cents > 0
        and all(int(lots[i]) == case.inventory[i].current_lots for i in range(case.n_items))
    ):
        non_window = [v for v in violations if v.constraint_id not in ("coverage", "window")]
        if not non_window:
            feasible = True
            violations = []
            flags.add("mta_no_transfer")

    return FeasibilityReport(
        feasible=feasible,
        violations=tuple(violations),
        binding=frozenset(binding),
        slacks=tuple(slacks),
        flags=frozenset(flags),
    )


def _caps_and_coverage_ok(lots: np.ndarray, arrays: CaseArrays) -> bool:
    """Window-free feasibility: coverage plus every cap, exact."""
    if int(lots @ arrays.v) < arrays.r_eff:
        return False
    if arrays.cap_A.size and np.any(arrays.cap_A @ lots > arrays.cap_b):
        return False
    return True


# ---------------------------------------------------------------------------
# minimal feasible buffer
# ---------------------------------------------------------------------------


def min_buffer(
    case: CaseInput,
    exact_check: Optional[Callable[[int], Optional[int]]] = None,
) -> BStarReport:
    """Two-phase greedy B* (cover without the U-cap, then shrink), with an
    optional exact bisection supplied by the certifier.

    ``exact_check(buffer_cents)`` must return the overshoot of some
    feasible allocation within that buffer (None when none exists); the
    bisection uses the achieved overshoot to tighten its upper end.
    """
    from .baselines import density_fill  # deferred: baselines imports this module

    arrays = case_arrays(case)
    flags: set[str] = set()

    lots = density_fill(case, use_window=False)
    if not _caps_and_coverage_ok(lots, arrays):
        worst = _most_violated(lots, arrays)
        if exact_check is None:
            raise InfeasibleBaseError(*worst)
        max_buffer = max(case.max_coverage_cents() - case.r_eff_cents, 0)
        achieved = exact_check(max_buffer)
        if achieved is None:
            raise InfeasibleBaseError(*worst)
        # greedy fill failed but a cover exists; fall back to the exact
        # bound for both figures
        flags.add("greedy_fill_failed")
        exact = _bisect_exact(exact_check, 0, achieved)
        return _report(case, exact, exact, flags)

    # phase 2: drop the single lot that most reduces U while coverage and
    # caps still hold; ties by lower carry, then item id
    while True:
        U = int(lots @ arrays.v)
        best = None
        for i in np.nonzero(lots > 0)[0]:
            trial = lots.copy()
            trial[i] -= 1
            if not _caps_and_coverage_ok(trial, arrays):
                continue
            key = (-int(arrays.v[i]), int(arrays.c[i]), case.inventory[i].id)
            if best is None or key < best[0]:
                best = (key, i)
        if best is None:
            break
        lots[best[1]] -= 1

    greedy = int(lots @ arrays.v) - arrays.r_eff
    exact = None
    if exact_check is not None:
        exact = _bisect_exact(exact_check, 0, greedy)
    return _report(case, greedy, exact, flags)


def _bisect_exact(exact_check: Callable[[int], Optional[int]], lo: int, hi: int) -> int:
    """Smallest buffer (cents) for which a feasible cover exists; ``hi``
    must already be feasible.  A feasible probe reports its achieved
    overshoot, which pulls the upper end down faster than the midpoint."""
    while lo < hi:
        mid = (lo + hi) // 2
        achieved = exact_check(mid)
        if achieved is None:
            lo = mid + 1
        else:
            hi = min(achieved, mid)
    return lo


def _most_violated(lots: np.ndarray, arrays: CaseArrays) -> tuple[str, str]:
    shortfall = arrays.r_eff - int(lots @ arrays.v)
    worst = ("coverage", float(max(shortfall, 0)) / 100.0)
    for row in arrays.cap_rows:
        excess = int(row.coeffs @ lots) - row.bound
        scale = 100.0 * (PPM if row.mode == "fraction_of_U" else 1)
        if excess / scale > worst[1]:
            worst = (row.constraint_id, excess / scale)
    return worst[0], f"violated by {worst[1]:.2f}"


def _report(case: CaseInput, greedy: int, exact: Optional[int], flags: set[str]) -> BStarReport:
    b_star = exact if exact is not None else greedy
    bps = (b_star / case.r_eff_cents) * 1e4 if case.r_eff_cents > 0 else 0.0
    infeasible = case.window.hard_cap_enabled and case.window.buffer_cents < b_star
    return BStarReport(
        b_star_greedy_cents=greedy,
        b_star_exact_cents=exact,
        b_star_bps=bps,
        infeasible_u_cap=infeasible,
        flags=frozenset(flags),
    )
