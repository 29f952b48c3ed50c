"""Exact certification: branch-and-bound over integer lots.

The search shares the incumbent's exact constraint system (integer-cents
coverage/window/caps, linearized fraction caps) and the exact objective
at its leaves; node lower bounds combine a convex piecewise-linear
carry+movement cover relaxation, a scenario-wise CVaR floor, and the
overshoot already locked in.  The independent oracle is a separate
exhaustive enumerator (kernel-backed) used by the tests and for B*.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .case import CaseInput, cents_to_dollars
from .objective import cvar_from_losses, evaluate
from .requirement import (
    Allocation,
    BStarReport,
    CaseArrays,
    case_arrays,
    check_feasible,
    min_buffer,
)

__all__ = [
    "CertificationReport",
    "InfeasibleError",
    "SearchSpaceError",
    "certify",
    "ucap_precheck",
    "brute_force",
    "brute_force_min_overshoot",
    "exact_buffer_check",
]

BRUTE_FORCE_LIMIT = 10_000_000


class InfeasibleError(Exception):
    """No feasible allocation exists."""


class SearchSpaceError(Exception):
    """Enumeration refused; carries the size estimate."""


@dataclass(frozen=True)
class CertificationReport:
    status: str  # OPTIMAL | FEASIBLE | INFEASIBLE
    incumbent: Optional[Allocation]
    incumbent_j: Optional[float]
    best_bound: Optional[float]
    gap: Optional[float]
    slacks: tuple[tuple[str, float], ...]
    b_star: Optional[BStarReport]
    nodes_explored: int
    wall_time: float

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "incumbent_lots": list(self.incumbent.lots) if self.incumbent else None,
            "incumbent_j": self.incumbent_j,
            "best_bound": self.best_bound,
            "gap": self.gap,
            "slacks": {cid: s for cid, s in self.slacks},
            "b_star": None if self.b_star is None else {
                "b_star_greedy": cents_to_dollars(self.b_star.b_star_greedy_cents),
                "b_star_exact": (
                    None if self.b_star.b_star_exact_cents is None
                    else cents_to_dollars(self.b_star.b_star_exact_cents)
                ),
                "b_star_bps": self.b_star.b_star_bps,
                "infeasible_u_cap": self.b_star.infeasible_u_cap,
            },
            "nodes_explored": self.nodes_explored,
            "wall_time_seconds": self.wall_time,
        }


# ---------------------------------------------------------------------------
# branch-and-bound core
# ---------------------------------------------------------------------------


class _Problem:
    """Permuted arrays and per-depth precomputations for one search."""

    def __init__(self, arrays: CaseArrays):
        self.arrays = arrays
        n = len(arrays.v)
        self.n = n
        # branch on the largest coverage impact first
        self.order = sorted(range(n), key=lambda i: (-int(arrays.v[i]), i))
        self.v = arrays.v[self.order]
        self.c = arrays.c[self.order]
        self.m = arrays.m[self.order]
        self.h = arrays.h[self.order]
        self.L = arrays.L[:, self.order] if arrays.L.size else arrays.L.reshape(0, n)
        self.capA = arrays.cap_A[:, self.order] if arrays.cap_A.size else arrays.cap_A.reshape(0, n)
        self.capb = arrays.cap_b
        self.abs_rows = np.array(
            [k for k, row in enumerate(arrays.cap_rows) if row.mode == "absolute"], dtype=int
        )
        self.S = self.L.shape[0]

        self.suffix_max_U = np.zeros(n + 1, dtype=np.int64)
        for d in range(n - 1, -1, -1):
            self.suffix_max_U[d] = self.suffix_max_U[d + 1] + self.v[d] * self.m[d]
        if self.S:
            self.suffix_min_loss = np.zeros((n + 1, self.S))
            for d in range(n - 1, -1, -1):
                self.suffix_min_loss[d] = self.suffix_min_loss[d + 1] + np.minimum(
                    self.L[:, d] * self.m[d], 0.0
                )
        else:
            self.suffix_min_loss = np.zeros((n + 1, 0))
        self.suffix_h = np.zeros(n + 1, dtype=np.int64)
        for d in range(n - 1, -1, -1):
            self.suffix_h[d] = self.suffix_h[d + 1] + self.h[d]

        # carry+movement segments for the cover relaxation: per item, lots
        # up to h cost (c - lam) each relative to the stay-put baseline,
        # lots beyond h cost (c + lam)
        lam = arrays.lam
        self.segments: list[list[tuple[float, float, float]]] = [[] for _ in range(n + 1)]
        for d in range(n - 1, -1, -1):
            segs = list(self.segments[d + 1])
            if self.v[d] > 0:
                c_dollars = float(self.c[d]) / 100.0
                v_cents = float(self.v[d])
                if self.h[d] > 0:
                    segs.append(((c_dollars - lam) / v_cents, v_cents * float(self.h[d]), c_dollars - lam))
                if self.m[d] > self.h[d]:
                    segs.append(((c_dollars + lam) / v_cents, v_cents * float(self.m[d] - self.h[d]), c_dollars + lam))
            segs.sort(key=lambda s: s[0])
            self.segments[d] = segs

        self.base_depth = n - min(2, n)
        base = self.order[self.base_depth:]
        grids = np.meshgrid(*[np.arange(self.m[self.base_depth + k] + 1, dtype=np.int64)
                              for k in range(len(base))], indexing="ij")
        self.base_X = np.stack([g.ravel() for g in grids], axis=1) if base else np.zeros((1, 0), dtype=np.int64)
        bs = slice(self.base_depth, n)
        self.base_U = self.base_X @ self.v[bs]
        self.base_carry = self.base_X @ self.c[bs]
        self.base_move = np.abs(self.base_X - self.h[bs][None, :]).sum(axis=1)
        self.base_cap = self.base_X @ self.capA[:, bs].T if self.capA.size else np.zeros((self.base_X.shape[0], 0), dtype=np.int64)
        self.base_loss = self.base_X @ self.L[:, bs].T if self.S else np.zeros((self.base_X.shape[0], 0))

    def bound(self, d: int, U: int, carry: int, movement: int, loss: np.ndarray) -> Optional[float]:
        """Valid lower bound on J over feasible completions; None when the
        suffix cannot reach coverage at all."""
        arrays = self.arrays
        if U + self.suffix_max_U[d] < arrays.r_eff:
            return None
        need = float(arrays.r_eff - U)
        cost = 0.0
        for density, capacity, _rate in self.segments[d]:
            if density < 0.0:
                cost += density * capacity
                need -= capacity
            elif need > 0.0:
                take = min(capacity, need)
                cost += density * take
                need -= take
            else:
                break
        fixed = carry / 100.0 + arrays.lam * movement
        suffix = arrays.lam * float(self.suffix_h[d]) + cost
        if self.S:
            cv = cvar_from_losses(loss + self.suffix_min_loss[d], arrays.w, arrays.alpha)
        else:
            cv = 0.0
        over = max(U - arrays.r_eff, 0) / 100.0
        return fixed + suffix + arrays.mu * cv + arrays.gam * over


@dataclass
class _SearchResult:
    x: Optional[np.ndarray]  # in original item order
    j: float
    bound: float
    nodes: int
    complete: bool


def _search(
    problem: _Problem,
    ub: float,
    deadline: Optional[float],
    window_cap: Optional[int] = None,
) -> _SearchResult:
    arrays = problem.arrays
    w_cap = arrays.window_cap if window_cap is None else window_cap
    n = problem.n
    base_depth = problem.base_depth
    best_x: Optional[np.ndarray] = None
    best_j = ub
    nodes = 0
    open_bounds: list[float] = []
    complete = True

    root_loss = np.zeros(problem.S)
    root_cap = np.zeros(len(problem.capb), dtype=np.int64)
    root_bound = problem.bound(0, 0, 0, 0, root_loss)
    if root_bound is None:
        return _SearchResult(None, np.inf, np.inf, 1, True)
    stack = [(0, (), 0, 0, 0, root_loss, root_cap, root_bound)]

    while stack:
        if deadline is not None and time.monotonic() >= deadline:
            open_bounds.extend(entry[7] for entry in stack)
            complete = False
            break
        d, prefix, U, carry, movement, loss, cap_lhs, bound = stack.pop()
        nodes += 1
        if bound >= best_j:
            continue

        if d == base_depth:
            U_vec = U + problem.base_U
            ok = U_vec >= arrays.r_eff
            if w_cap >= 0:
                ok &= U_vec <= w_cap
            if problem.base_cap.shape[1]:
                ok &= np.all(cap_lhs[None, :] + problem.base_cap <= problem.capb[None, :], axis=1)
            if not ok.any():
                continue
            sel = np.nonzero(ok)[0]
            base = (carry + problem.base_carry[sel]) / 100.0
            mov = movement + problem.base_move[sel]
            over = np.maximum(U_vec[sel] - arrays.r_eff, 0) / 100.0
            if problem.S:
                cv = _kernels.batch_cvar(loss[None, :] + problem.base_loss[sel], arrays.w, arrays.alpha)
            else:
                cv = np.zeros(sel.shape[0])
            J = base + arrays.lam * mov + arrays.mu * cv + arrays.gam * over
            g = int(np.argmin(J))
            if J[g] < best_j:
                best_j = float(J[g])
                best_x = np.zeros(n, dtype=np.int64)
                best_x[problem.order[:d]] = prefix
                best_x[problem.order[d:]] = problem.base_X[sel[g]]
            continue

        children = []
        for xd in range(int(problem.m[d]) + 1):
            U_c = U + int(problem.v[d]) * xd
            if w_cap >= 0 and U_c > w_cap:
                break  # larger xd only raises U
            cap_c = cap_lhs + problem.capA[:, d] * xd
            if problem.abs_rows.size and np.any(cap_c[problem.abs_rows] > problem.capb[problem.abs_rows]):
                break  # absolute-cap lhs is monotone in xd
            carry_c = carry + int(problem.c[d]) * xd
            move_c = movement + abs(xd - int(problem.h[d]))
            loss_c = loss + problem.L[:, d] * xd if problem.S else loss
            bound_c = problem.bound(d + 1, U_c, carry_c, move_c, loss_c)
            if bound_c is None:
                continue
            if bound_c >= best_j:
                continue
            children.append((d + 1, prefix + (xd,), U_c, carry_c, move_c, loss_c, cap_c, bound_c))
        stack.extend(reversed(children))

    # complete: proven that no standard-space point beats best_j (= ub when
    # nothing improved, +inf when infeasible); incomplete: open subtrees
    # can still hold anything down to their bounds
    final_bound = best_j if complete else min(open_bounds + [best_j])
    return _SearchResult(best_x, best_j, final_bound, nodes, complete)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _cached_problem(case: CaseInput) -> _Problem:
    problem = getattr(case, "_bb_problem", None)
    if problem is None:
        problem = _Problem(case_arrays(case))
        object.__setattr__(case, "_bb_problem", problem)
    return problem


def _search_min_overshoot(problem: _Problem) -> Optional[int]:
    """Exact minimal overshoot (cents) over coverage+cap-feasible vectors
    with no window; None when no cover exists at all."""
    arrays = problem.arrays
    base_depth = problem.base_depth
    best: Optional[int] = None
    stack = [(0, 0, np.zeros(len(problem.capb), dtype=np.int64))]
    while stack:
        d, U, cap_lhs = stack.pop()
        over_lb = max(U - arrays.r_eff, 0)
        if best is not None and over_lb >= best:
            continue
        if U + problem.suffix_max_U[d] < arrays.r_eff:
            continue
        if d == base_depth:
            U_vec = U + problem.base_U
            ok = U_vec >= arrays.r_eff
            if best is not None:
                ok &= U_vec - arrays.r_eff < best
            if problem.base_cap.shape[1]:
                ok &= np.all(cap_lhs[None, :] + problem.base_cap <= problem.capb[None, :], axis=1)
            if ok.any():
                cand = int((U_vec[ok] - arrays.r_eff).min())
                if best is None or cand < best:
                    best = cand
            continue
        children = []
        for xd in range(int(problem.m[d]) + 1):
            U_c = U + int(problem.v[d]) * xd
            if best is not None and U_c - arrays.r_eff >= best:
                break  # larger xd only raises the overshoot floor
            cap_c = cap_lhs + problem.capA[:, d] * xd
            if problem.abs_rows.size and np.any(cap_c[problem.abs_rows] > problem.capb[problem.abs_rows]):
                break
            if U_c + problem.suffix_max_U[d + 1] < arrays.r_eff:
                continue
            children.append((d + 1, U_c, cap_c))
        stack.extend(reversed(children))
    return best


def _exact_min_overshoot(case: CaseInput) -> Optional[int]:
    cached = getattr(case, "_min_overshoot_cache", False)
    if cached is not False:
        return cached
    value = _search_min_overshoot(_cached_problem(case))
    object.__setattr__(case, "_min_overshoot_cache", value)
    return value


def exact_buffer_check(case: CaseInput, buffer_cents: int) -> Optional[int]:
    """B* bisection probe: the overshoot of a feasible cover within
    U <= R_eff + buffer, or None when none exists.  Probes share one
    cached exact min-overshoot search; the MTA no-transfer gate is not a
    cover and is ignored."""
    over = _exact_min_overshoot(case)
    if over is None or over > buffer_cents:
        return None
    return over


def ucap_precheck(case: CaseInput) -> BStarReport:
    """B* with the exact bisection enabled; runs before certification
    whenever the hard coverage cap is on."""
    return min_buffer(case, exact_check=lambda b: exact_buffer_check(case, b))


def _gated_candidate(case: CaseInput) -> Optional[tuple[Allocation, float]]:
    holdings = Allocation(lots=tuple(it.current_lots for it in case.inventory))
    report = check_feasible(holdings, case)
    if report.feasible and "mta_no_transfer" in report.flags:
        return holdings, evaluate(holdings, case)
    return None


def certify(case: CaseInput, incumbent: Allocation, limits=None) -> CertificationReport:
    """Prove the incumbent's status under identical constraints.

    Runs the U-cap precheck when the hard window is on, seeds the search
    upper bound with the incumbent (and the MTA-gated no-op when
    admissible), and reports status, bound, gap and per-constraint slacks
    at the returned solution.
    """
    limits = limits if limits is not None else case.limits
    t0 = time.monotonic()
    deadline = t0 + limits.wall_seconds

    for i, item in enumerate(case.inventory):
        xi = incumbent.lots[i]
        if not (0 <= xi <= item.max_lots):
            raise ValueError(f"incumbent violates lot bounds at {item.id}: {xi}")

    b_star = ucap_precheck(case) if case.window.hard_cap_enabled else None

    candidates: list[tuple[float, tuple[int, ...], Allocation]] = []
    inc_report = check_feasible(incumbent, case)
    if inc_report.feasible:
        candidates.append((evaluate(incumbent, case), incumbent.lots, incumbent))
    gated = _gated_candidate(case)
    if gated is not None:
        candidates.append((gated[1], gated[0].lots, gated[0]))

    ub = min((c[0] for c in candidates), default=np.inf)
    problem = _cached_problem(case)
    result = _search(problem, ub, deadline)
    if result.x is not None:
        alloc = Allocation.from_array(result.x)
        candidates.append((result.j, alloc.lots, alloc))

    wall = time.monotonic() - t0
    if not candidates:
        if result.complete:
            return CertificationReport(
                status="INFEASIBLE", incumbent=None, incumbent_j=None,
                best_bound=None, gap=None, slacks=(), b_star=b_star,
                nodes_explored=result.nodes, wall_time=wall,
            )
        raise RuntimeError("certification inconclusive: wall limit reached with no feasible incumbent")

    best_j, _, best_alloc = min(candidates, key=lambda c: (c[0], c[1]))
    bound = min(result.bound, best_j)
    if result.complete:
        status = "OPTIMAL"
        bound = best_j
        gap = 0.0
    else:
        status = "FEASIBLE"
        gap = (best_j - bound) / max(abs(best_j), 1.0)
    slacks = check_feasible(best_alloc, case).slacks
    return CertificationReport(
        status=status,
        incumbent=best_alloc,
        incumbent_j=best_j,
        best_bound=bound,
        gap=gap,
        slacks=slacks,
        b_star=b_star,
        nodes_explored=result.nodes,
        wall_time=wall,
    )


def _space_guard(case: CaseInput) -> CaseArrays:
    arrays = case_arrays(case)
    space = arrays.search_space()
    if space > BRUTE_FORCE_LIMIT:
        raise SearchSpaceError(
            f"search space {space} exceeds the enumeration limit {BRUTE_FORCE_LIMIT}"
        )
    return arrays


def brute_force(case: CaseInput) -> tuple[Allocation, float]:
    """Exhaustive oracle: the feasible J-minimizer with lexicographic
    smallest lots on ties; refuses spaces beyond 10^7 vectors."""
    arrays = _space_guard(case)
    found, x, j, _ = _kernels.enumerate_best(
        arrays.v, arrays.c, arrays.h, arrays.m, arrays.L, arrays.w, arrays.alpha,
        arrays.lam, arrays.mu, arrays.gam, arrays.r_eff, arrays.window_cap,
        arrays.cap_A, arrays.cap_b, 0,
    )
    best: Optional[tuple[float, tuple[int, ...], Allocation]] = None
    if found:
        alloc = Allocation.from_array(x)
        best = (j, alloc.lots, alloc)
    gated = _gated_candidate(case)
    if gated is not None:
        cand = (gated[1], gated[0].lots, gated[0])
        if best is None or cand < best:
            best = cand
    if best is None:
        raise InfeasibleError("no feasible allocation")
    return best[2], best[0]


def brute_force_min_overshoot(case: CaseInput) -> int:
    """Exhaustive minimal overshoot (cents) over window-free feasible
    covers; the independent oracle for B*."""
    arrays = _space_guard(case)
    found, _, _, over = _kernels.enumerate_best(
        arrays.v, arrays.c, arrays.h, arrays.m, arrays.L, arrays.w, arrays.alpha,
        arrays.lam, arrays.mu, arrays.gam, arrays.r_eff, -1,
        arrays.cap_A, arrays.cap_b, 1,
    )
    if not found:
        raise InfeasibleError("no feasible cover exists")
    return int(over)
