"""Hybrid search: simulated annealing with repair plus micro quantum jumps.

The orchestrator interleaves Metropolis annealing over integer-lot
neighborhoods (add/remove/swap, every proposal repaired) with plateau
detection; on a plateau it builds an interaction graph around the
incumbent, spectrally selects a binding subset, and attempts one
higher-order-model jump (hubo + qaoa modules), accepted only on a strict
J decrease while feasible.  Everything is deterministic given
(case, limits, seed).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .case import PPM, CaseInput
from .objective import ObjectiveBreakdown, breakdown, evaluate
from .requirement import Allocation, BStarReport, case_arrays, check_feasible, min_buffer

__all__ = [
    "SaParams",
    "InteractionGraph",
    "TraceEvent",
    "HybridResult",
    "InfeasibleCaseError",
    "repair",
    "anneal",
    "build_interaction_graph",
    "spectral_select",
    "hybrid_optimize",
    "EDGE_EPS",
]

EDGE_EPS = 0.05  # interaction-graph pruning threshold


class InfeasibleCaseError(Exception):
    """The hybrid found no feasible allocation; carries B* diagnostics."""

    def __init__(self, message: str, b_star: Optional[BStarReport] = None):
        self.b_star = b_star
        super().__init__(message)


@dataclass(frozen=True)
class SaParams:
    """Annealing schedule; defaults follow the run manifest conventions:
    initial temperature 2*|J(seed)|*0.01, cooling 0.95 per 50 moves,
    neighborhood weights (0.4 add, 0.3 remove, 0.3 swap)."""

    initial_temp: float
    cooling_factor: float = 0.95
    moves_per_temp: int = 50
    move_weights: tuple[float, float, float] = (0.4, 0.3, 0.3)

    @staticmethod
    def for_seed_j(seed_j: float) -> "SaParams":
        return SaParams(initial_temp=2.0 * abs(seed_j) * 0.01)


@dataclass(frozen=True)
class InteractionGraph:
    """Unitless coupling graph over eligible items."""

    nodes: tuple[tuple[str, float], ...]  # (item id, score in [0, 1])
    edges: tuple[tuple[str, str, float], ...]  # weights clamped to [0, 1]


class TraceEvent(NamedTuple):
    iteration: int
    j: float
    event: str  # sa_accept | sa_reject | jump_accept | jump_reject | jump_skip | repair


@dataclass(frozen=True)
class HybridResult:
    best: Allocation
    best_breakdown: ObjectiveBreakdown
    trace: tuple[TraceEvent, ...]
    jump_manifests: tuple  # of hubo.QuboManifest
    seed_allocation: Allocation
    seed_j: float
    iterations: int
    wall_time: float


# ---------------------------------------------------------------------------
# repair
# ---------------------------------------------------------------------------


def _density_key(arrays, case: CaseInput, i: int) -> tuple:
    # worst first: highest carry per after-haircut dollar
    return (-arrays.c[i] / max(arrays.v[i], 1), case.inventory[i].id)


def repair(x: Allocation, case: CaseInput) -> Allocation:
    """Deterministic projection toward feasibility.

    (1) while a cap is violated, drop one lot of the violating group's
    worst-density member; (2) while coverage is short, add the best-density
    cap-respecting lot; (3) while over the hard window, drop the
    worst-density lot whose removal keeps coverage and caps.  Already
    feasible input is returned unchanged; if a phase cannot progress the
    current (least-violating) iterate is returned and flagged by
    check_feasible.
    """
    arrays = case_arrays(case)
    lots = np.clip(x.array(), 0, arrays.m)

    # (1) caps, in canonical row order
    while True:
        violated = None
        for row in arrays.cap_rows:
            if int(row.coeffs @ lots) > row.bound:
                violated = row
                break
        if violated is None:
            break
        members = [i for i in np.nonzero(violated.group_mask & (lots > 0))[0]]
        if not members:
            break  # cannot progress (defensive; a violated cap implies members)
        worst = max(members, key=lambda i: (arrays.c[i] / max(int(arrays.v[i]), 1), case.inventory[i].id))
        lots[worst] -= 1

    order = sorted(
        (i for i in range(case.n_items) if case.eligible[i]),
        key=lambda i: (arrays.c[i] / max(int(arrays.v[i]), 1), -int(arrays.v[i]), case.inventory[i].id),
    )

    # (2) coverage
    while int(lots @ arrays.v) < arrays.r_eff:
        added = False
        for i in order:
            if lots[i] >= arrays.m[i]:
                continue
            lots[i] += 1
            if arrays.cap_A.size and np.any(arrays.cap_A @ lots > arrays.cap_b):
                lots[i] -= 1
                continue
            added = True
            break
        if not added:
            break

    # (3) hard window
    if arrays.window_cap >= 0:
        while int(lots @ arrays.v) > arrays.window_cap:
            removed = False
            for i in reversed(order):  # worst density first
                if lots[i] <= 0:
                    continue
                if int(lots @ arrays.v) - int(arrays.v[i]) < arrays.r_eff:
                    continue
                lots[i] -= 1
                if arrays.cap_A.size and np.any(arrays.cap_A @ lots > arrays.cap_b):
                    lots[i] += 1
                    continue
                removed = True
                break
            if not removed:
                break

    return Allocation.from_array(lots)


# ---------------------------------------------------------------------------
# simulated annealing
# ---------------------------------------------------------------------------


def _fast_eval(lots: np.ndarray, arrays) -> tuple[bool, float]:
    """(feasible, J) on a raw lot vector; J uses the exact breakdown
    formula so trace values match objective.breakdown bit for bit."""
    from .objective import cvar_from_losses

    U = int(lots @ arrays.v)
    feasible = U >= arrays.r_eff
    if feasible and arrays.window_cap >= 0:
        feasible = U <= arrays.window_cap
    if feasible and arrays.cap_A.size:
        feasible = bool(np.all(arrays.cap_A @ lots <= arrays.cap_b))
    if feasible:
        feasible = bool(np.all((lots >= 0) & (lots <= arrays.m)))
    base = float(lots @ arrays.c) / 100.0
    movement = int(np.abs(lots - arrays.h).sum())
    over_cents = max(U - arrays.r_eff, 0)
    cv = cvar_from_losses(arrays.L @ lots, arrays.w, arrays.alpha) if arrays.L.size else 0.0
    j = base + arrays.lam * movement + arrays.mu * cv + arrays.gam * (over_cents / 100.0)
    return feasible, j


class _SaState:
    """One annealing run's mutable state; shared by anneal() and the hybrid."""

    def __init__(self, case: CaseInput, x0: Allocation, params: SaParams, rng: np.random.Generator):
        self.case = case
        self.arrays = case_arrays(case)
        self.params = params
        self.rng = rng
        self.trace: list[TraceEvent] = []
        self.iteration = 0
        self.temp = params.initial_temp

        start = repair(x0, case)
        feasible, j = _fast_eval(start.array(), self.arrays)
        if start.lots != x0.lots:
            self.trace.append(TraceEvent(0, j, "repair"))
        self.x = start
        self.j = j
        if feasible:
            self.best: Optional[Allocation] = start
            self.best_j = j
        else:
            self.best = None
            self.best_j = np.inf

    def _propose(self) -> Optional[np.ndarray]:
        lots = self.x.array()
        m = self.arrays.m
        kind = self.rng.choice(3, p=self.params.move_weights)
        addable = np.nonzero((lots < m) & self.arrays.eligible)[0]
        removable = np.nonzero(lots > 0)[0]
        if kind == 0:  # add
            if addable.size == 0:
                return None
            i = addable[self.rng.integers(addable.size)]
            lots[i] += 1
        elif kind == 1:  # remove
            if removable.size == 0:
                return None
            i = removable[self.rng.integers(removable.size)]
            lots[i] -= 1
        else:  # swap
            if removable.size == 0:
                return None
            a = removable[self.rng.integers(removable.size)]
            others = addable[addable != a]
            if others.size == 0:
                return None
            b = others[self.rng.integers(others.size)]
            lots[a] -= 1
            lots[b] += 1
        return lots

    def step(self) -> None:
        self.iteration += 1
        it = self.iteration
        proposal = self._propose()
        if proposal is None:
            self.trace.append(TraceEvent(it, self.j, "sa_reject"))
            self._cool()
            return
        cand = repair(Allocation.from_array(proposal), self.case)
        if cand.lots != tuple(int(v) for v in proposal):
            self.trace.append(TraceEvent(it, self.j, "repair"))
        feasible, j_new = _fast_eval(cand.array(), self.arrays)
        if not feasible:
            self.trace.append(TraceEvent(it, self.j, "sa_reject"))
            self._cool()
            return
        delta = j_new - self.j
        accept = delta <= 0 or (
            self.temp > 0 and self.rng.random() < np.exp(-delta / self.temp)
        )
        if accept:
            self.x, self.j = cand, j_new
            self.trace.append(TraceEvent(it, j_new, "sa_accept"))
            if j_new < self.best_j:
                self.best, self.best_j = cand, j_new
        else:
            self.trace.append(TraceEvent(it, self.j, "sa_reject"))
        self._cool()

    def _cool(self) -> None:
        if self.iteration % self.params.moves_per_temp == 0:
            self.temp *= self.params.cooling_factor


def anneal(
    case: CaseInput,
    x0: Allocation,
    params: SaParams,
    rng: np.random.Generator,
    iterations: Optional[int] = None,
) -> tuple[Allocation, tuple[TraceEvent, ...]]:
    """Metropolis annealing from x0; returns the best feasible allocation
    seen and the acceptance trace.  Zero iterations returns repair(x0)."""
    state = _SaState(case, x0, params, rng)
    n = case.limits.sa_iterations if iterations is None else iterations
    for _ in range(n):
        state.step()
    best = state.best if state.best is not None else state.x
    return best, tuple(state.trace)


# ---------------------------------------------------------------------------
# interaction graph and spectral subset selection
# ---------------------------------------------------------------------------


def build_interaction_graph(case: CaseInput, x: Allocation) -> InteractionGraph:
    """Score items by feasibility-directed unit-move |dJ| and couple pairs
    by shared near-binding constraints blended with |scenario-loss
    correlation|; edges below EDGE_EPS are pruned."""
    arrays = case_arrays(case)
    lots = x.array()
    idx = [i for i in range(case.n_items) if case.eligible[i]]
    j0 = _fast_eval(lots, arrays)[1]
    U = int(lots @ arrays.v)

    if U < arrays.r_eff:
        direction = 1
    elif arrays.window_cap >= 0 and U > arrays.window_cap:
        direction = -1
    else:
        direction = 0  # pick the larger |dJ| among admissible moves

    raw_scores = {}
    for i in idx:
        deltas = []
        for d in (1, -1):
            if direction and d != direction:
                continue
            xi = int(lots[i]) + d
            if not (0 <= xi <= arrays.m[i]):
                continue
            trial = lots.copy()
            trial[i] = xi
            deltas.append(abs(_fast_eval(trial, arrays)[1] - j0))
        raw_scores[i] = max(deltas) if deltas else 0.0
    top = max(raw_scores.values()) if raw_scores else 0.0
    scores = {i: (s / top if top > 0 else 0.0) for i, s in raw_scores.items()}

    # constraint couplings: clamp01(1 - slack/bound) per shared constraint
    couplings: list[tuple[np.ndarray, float]] = []
    all_mask = np.array(case.eligible, dtype=bool)
    if arrays.r_eff > 0:
        cov = 1.0 - (U - arrays.r_eff) / arrays.r_eff
        couplings.append((all_mask, min(max(cov, 0.0), 1.0)))
    if arrays.window_cap >= 0:
        buffer_cents = arrays.window_cap - arrays.r_eff
        slack = arrays.window_cap - U
        win = 1.0 if buffer_cents == 0 and slack <= 0 else (
            min(max(1.0 - slack / buffer_cents, 0.0), 1.0) if buffer_cents > 0 else 0.0
        )
        couplings.append((all_mask, win))
    for row in arrays.cap_rows:
        group_val = int(lots @ np.where(row.group_mask, arrays.v, 0))
        if row.mode == "absolute":
            bound, lhs = row.bound, group_val
        else:
            bound, lhs = row.ppm * U, PPM * group_val
        if bound <= 0:
            strength = 1.0 if lhs >= bound else 0.0
        else:
            strength = min(max(1.0 - (bound - lhs) / bound, 0.0), 1.0)
        couplings.append((row.group_mask, strength))

    if arrays.L.shape[0] >= 2:
        with np.errstate(invalid="ignore"):
            corr = np.corrcoef(arrays.L, rowvar=False)
        corr = np.nan_to_num(corr, nan=0.0)
    else:
        corr = np.zeros((case.n_items, case.n_items))

    edges = []
    for a_pos, a in enumerate(idx):
        for b in idx[a_pos + 1:]:
            shared = [s for mask, s in couplings if mask[a] and mask[b]]
            coupling = max(shared) if shared else 0.0
            rho = abs(float(corr[a, b]))
            w = min(max((coupling + rho) / 2.0, 0.0), 1.0)
            if w >= EDGE_EPS:
                edges.append((case.inventory[a].id, case.inventory[b].id, w))

    return InteractionGraph(
        nodes=tuple((case.inventory[i].id, scores[i]) for i in idx),
        edges=tuple(edges),
    )


def _kmeans2(points: np.ndarray, rng: np.random.Generator, iters: int = 64) -> np.ndarray:
    """Deterministic 2-means labels (seeding drawn from rng)."""
    n = points.shape[0]
    first = int(rng.integers(n))
    dist = np.linalg.norm(points - points[first], axis=1)
    second = int(np.argmax(dist))
    if second == first:
        second = (first + 1) % n
    centers = points[[first, second]].astype(float)
    labels = np.zeros(n, dtype=int)
    for _ in range(iters):
        d0 = np.linalg.norm(points - centers[0], axis=1)
        d1 = np.linalg.norm(points - centers[1], axis=1)
        new_labels = (d1 < d0).astype(int)
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for k in (0, 1):
            sel = points[labels == k]
            if len(sel):
                centers[k] = sel.mean(axis=0)
    return labels


def spectral_select(
    graph: InteractionGraph,
    n_max: int,
    rng: Optional[np.random.Generator] = None,
) -> tuple[str, ...]:
    """Pick the binding cluster: embed nodes with the two smallest
    non-trivial eigenvectors of the normalized Laplacian, 2-means them,
    and keep the cluster holding the top-score node (capped at n_max by
    score, padded toward 4 nodes when smaller)."""
    if not graph.nodes:
        raise ValueError("spectral_select requires a non-empty graph")
    rng = rng if rng is not None else np.random.default_rng(0)
    ids = [nid for nid, _ in graph.nodes]
    score = {nid: s for nid, s in graph.nodes}
    pos = {nid: k for k, nid in enumerate(ids)}
    n = len(ids)

    by_score = sorted(ids, key=lambda nid: (-score[nid], nid))
    if not graph.edges or n == 1:
        subset = by_score[:n_max]
    else:
        W = np.zeros((n, n))
        for a, b, w in graph.edges:
            W[pos[a], pos[b]] = W[pos[b], pos[a]] = w
        top_connected = next((nid for nid in by_score if W[pos[nid]].sum() > 0), None)
        if top_connected is None:
            subset = by_score[:n_max]
        else:
            # restrict to the top node's connected component (the zero
            # eigenspace of a disconnected Laplacian has no canonical
            # basis), then embed with the two smallest non-trivial
            # eigenvectors and 2-means the component
            comp = {pos[top_connected]}
            frontier = [pos[top_connected]]
            while frontier:
                k = frontier.pop()
                for j in np.nonzero(W[k] > 0)[0]:
                    if int(j) not in comp:
                        comp.add(int(j))
                        frontier.append(int(j))
            sub = np.array(sorted(comp))
            Wc = W[np.ix_(sub, sub)]
            dinv = 1.0 / np.sqrt(Wc.sum(axis=1))
            lap = np.eye(len(sub)) - (dinv[:, None] * Wc * dinv[None, :])
            vals, vecs = np.linalg.eigh(lap)
            # a tied spectrum (complete uniform component) has no canonical
            # embedding basis; treat the whole component as one cluster
            tied = len(sub) <= 2 or (vals[min(len(sub) - 1, 2)] - vals[1]) <= 1e-9
            if tied:
                cluster = [ids[int(g)] for g in sub]
            else:
                cols = list(range(1, min(3, len(sub))))
                emb = vecs[:, cols]
                labels = _kmeans2(emb, rng)
                where = {int(g): k for k, g in enumerate(sub)}
                top_label = labels[where[pos[top_connected]]]
                cluster = [ids[int(g)] for k, g in enumerate(sub) if labels[k] == top_label]
            cluster.sort(key=lambda nid: (-score[nid], nid))
            subset = cluster[:n_max]

    target = min(4, n_max, 8, n)
    if len(subset) < target:
        chosen = set(subset)
        for nid in by_score:
            if len(subset) >= target:
                break
            if nid not in chosen:
                subset.append(nid)
                chosen.add(nid)
    return tuple(sorted(subset))


# ---------------------------------------------------------------------------
# hybrid orchestrator
# ---------------------------------------------------------------------------


def hybrid_optimize(case: CaseInput, limits=None, jumps: bool = True) -> HybridResult:
    """Explore: BL-3(BL-1) seed, SA with repair, plateau-gated micro jumps.

    A jump fires after `plateau_window` SA steps with relative best-J
    improvement below `plateau_eps` (must-jump: exactly one attempt per
    plateau).  Jump flow: interaction graph -> spectral subset -> bounded
    higher-order model -> width gate -> angle search -> sample -> decode
    -> repair -> accept only on strict J decrease while feasible.
    ``jumps=False`` is the pure-SA ablation.
    """
    from . import hubo as hubo_mod
    from . import qaoa as qaoa_mod
    from .baselines import bl1_density_greedy, bl3_two_opt

    limits = limits if limits is not None else case.limits
    t0 = time.monotonic()
    rng = np.random.default_rng(limits.seed)

    seed_alloc = bl3_two_opt(case, bl1_density_greedy(case))
    seed_j = evaluate(seed_alloc, case)

    state = _SaState(case, seed_alloc, SaParams.for_seed_j(seed_j), rng)
    manifests: list = []
    last_angles = None

    window_start_j = state.best_j
    steps_in_window = 0

    def wall_exceeded() -> bool:
        return time.monotonic() - t0 >= limits.wall_seconds

    def attempt_jump() -> None:
        nonlocal last_angles
        it = state.iteration
        if state.best is None:
            state.trace.append(TraceEvent(it, state.best_j, "jump_skip"))
            return
        graph = build_interaction_graph(case, state.best)
        if not graph.nodes:
            state.trace.append(TraceEvent(it, state.best_j, "jump_skip"))
            return
        subset = spectral_select(graph, limits.n_max, rng)
        try:
            model = hubo_mod.build_hubo(case, state.best, subset, limits)
        except hubo_mod.EmptyModelError:
            state.trace.append(TraceEvent(it, state.best_j, "jump_skip"))
            manifests.append(hubo_mod.QuboManifest(
                subset_ids=subset, n=len(subset), width=0, k=0, p=limits.depth_p,
                term_count_by_order={}, penalty_weights={}, accepted=False,
                reason="empty_model",
            ))
            return
        width = hubo_mod.ancilla_width(model)
        base = dict(
            subset_ids=subset, n=len(subset), width=width, k=model.max_order,
            p=limits.depth_p, term_count_by_order=model.term_count_by_order(),
            penalty_weights=dict(model.penalty_weights),
        )
        if width > limits.n_max:
            state.trace.append(TraceEvent(it, state.best_j, "jump_skip"))
            manifests.append(hubo_mod.QuboManifest(
                accepted=False, reason=f"ancilla_width {width} exceeds n_max {limits.n_max}", **base,
            ))
            return
        warm = last_angles if (last_angles is not None and len(last_angles.gammas) == limits.depth_p) else None
        angles = qaoa_mod.optimize_angles(model, limits.depth_p, limits.angle_budget, rng, warm_start=warm)
        state_vec = qaoa_mod.evolve(model, angles)
        samples = qaoa_mod.sample(state_vec, limits.shots, rng)
        table = hubo_mod.energy_table(model)
        z_best = int(samples[np.lexsort((samples, table[samples]))[0]])
        decoded = hubo_mod.map_lots(z_best, model, state.best)
        repaired = repair(decoded, case)
        feasible, j_new = _fast_eval(repaired.array(), state.arrays)
        if feasible and j_new < state.best_j:
            state.best, state.best_j = repaired, j_new
            state.x, state.j = repaired, j_new
            last_angles = angles
            state.trace.append(TraceEvent(it, j_new, "jump_accept"))
            manifests.append(hubo_mod.QuboManifest(accepted=True, reason="accepted", **base))
        else:
            reason = "no_improvement" if feasible else "repair_infeasible"
            state.trace.append(TraceEvent(it, state.best_j, "jump_reject"))
            manifests.append(hubo_mod.QuboManifest(accepted=False, reason=reason, **base))

    while state.iteration < limits.sa_iterations and not wall_exceeded():
        state.step()
        steps_in_window += 1
        if steps_in_window >= limits.plateau_window:
            reference = max(abs(window_start_j), 1e-12)
            improvement = (window_start_j - state.best_j) / reference
            if jumps and improvement < limits.plateau_eps:
                attempt_jump()  # must-jump: one attempt per plateau window
            window_start_j = state.best_j
            steps_in_window = 0

    if state.best is None:
        try:
            from .certifier import exact_buffer_check

            b_star = min_buffer(case, exact_check=lambda b: exact_buffer_check(case, b))
        except Exception:
            b_star = None
        raise InfeasibleCaseError("no feasible allocation found", b_star=b_star)

    return HybridResult(
        best=state.best,
        best_breakdown=breakdown(state.best, case),
        trace=tuple(state.trace),
        jump_manifests=tuple(manifests),
        seed_allocation=seed_alloc,
        seed_j=seed_j,
        iterations=state.iteration,
        wall_time=time.monotonic() - t0,
    )
