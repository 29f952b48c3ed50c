"""Bounded higher-order pseudo-Boolean sub-models around an incumbent.

Each selected item gets trust-radius offset bits (plus-weights covering
[0, r] and one minus-r bit, so all-zero decodes to "no change") and one
touch ancilla for the movement term.  Penalties encode the coverage
window, near-binding caps and touch consistency; the interaction order
grows with k_max (pair consistency at 3, exact OR completion and the
per-item window-touch term at 4).  Terms are converted to the +/-1 spin
convention and normalized to max |coefficient| = 1 for the simulator.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional

import numpy as np

from . import _kernels
from .case import PPM, CaseInput
from .requirement import Allocation, case_arrays

__all__ = [
    "Hubo",
    "QuboManifest",
    "EmptyModelError",
    "build_hubo",
    "ancilla_width",
    "map_lots",
    "evaluate_hubo",
    "energy_table",
    "reduce_to_order",
    "binary_to_spin",
]


class EmptyModelError(Exception):
    """Every subset item is frozen at its lot bounds (zero trust range)."""


@dataclass(frozen=True)
class _ItemCoding:
    item_id: str
    item_index: int
    bit_vars: tuple[int, ...]
    bit_weights: tuple[int, ...]
    touch_var: int
    x_inc: int
    max_lots: int


@dataclass(frozen=True)
class Hubo:
    """Spin polynomial over lot bits and ancillas (immutable after build)."""

    variables: tuple[tuple[str, str, int], ...]  # (kind, item id, index)
    terms: dict  # sorted variable-index tuple -> coefficient (normalized)
    constant: float
    width: int
    max_order: int
    penalty_weights: tuple[tuple[str, float], ...]
    energy_scale: float
    codings: tuple[_ItemCoding, ...]
    subset_ids: tuple[str, ...]

    def term_count_by_order(self) -> dict[int, int]:
        counts: Counter = Counter(len(k) for k in self.terms)
        return {order: counts[order] for order in sorted(counts)}


@dataclass(frozen=True)
class QuboManifest:
    """Per-jump audit record: what was compiled and whether it was taken."""

    subset_ids: tuple[str, ...]
    n: int
    width: int
    k: int
    p: int
    term_count_by_order: dict
    penalty_weights: dict
    accepted: bool
    reason: str

    def as_dict(self) -> dict:
        return {
            "subset_ids": list(self.subset_ids),
            "n": self.n,
            "width": self.width,
            "k": self.k,
            "p": self.p,
            "term_count_by_order": {str(k): v for k, v in sorted(self.term_count_by_order.items())},
            "penalty_weights": dict(sorted(self.penalty_weights.items())),
            "accepted": self.accepted,
            "reason": self.reason,
        }


def _bit_weights(r: int) -> tuple[int, ...]:
    """Plus-weights 1,2,4,... covering [0, r], then a single -r bit."""
    weights = []
    remaining = r
    power = 1
    while remaining > 0:
        w = min(power, remaining)
        weights.append(w)
        remaining -= w
        power <<= 1
    weights.append(-r)
    return tuple(weights)


class _BinaryPoly:
    """Pseudo-Boolean polynomial accumulator over {0,1} variables."""

    def __init__(self):
        self.terms: dict[frozenset[int], float] = {}
        self.constant = 0.0

    def add(self, variables: Iterable[int], coeff: float) -> None:
        if coeff == 0.0:
            return
        key = frozenset(variables)
        if not key:
            self.constant += coeff
            return
        self.terms[key] = self.terms.get(key, 0.0) + coeff

    def add_square(self, lin: dict[int, float], target: float, weight: float) -> None:
        """weight * (sum_i lin_i b_i - target)^2, expanded with b^2 = b."""
        self.constant += weight * target * target
        items = sorted(lin.items())
        for b, e in items:
            self.add((b,), weight * (e * e - 2.0 * target * e))
        for (b1, e1), (b2, e2) in combinations(items, 2):
            self.add((b1, b2), weight * 2.0 * e1 * e2)


def reduce_to_order(
    terms: dict[frozenset[int], float],
    k_max: int,
    next_var: int,
) -> tuple[dict[frozenset[int], float], int]:
    """Rosenberg pair substitution until no binary term exceeds k_max.

    Each round replaces the most frequent pair among oversized terms with
    a fresh quad ancilla u, adding the exactness penalty
    M (ab - 2au - 2bu + 3u); returns the reduced terms and the number of
    ancillas added.
    """
    terms = dict(terms)
    added = 0
    while True:
        oversized = [k for k in terms if len(k) > k_max]
        if not oversized:
            return terms, added
        pair_counts: Counter = Counter()
        for key in oversized:
            for pair in combinations(sorted(key), 2):
                pair_counts[pair] += 1
        pair = min(pair_counts, key=lambda p: (-pair_counts[p], p))
        a, b = pair
        u = next_var + added
        added += 1
        penalty = 2.0 * (1.0 + sum(abs(c) for c in terms.values()))
        replaced: dict[frozenset[int], float] = {}
        for key, coeff in terms.items():
            if len(key) > k_max and a in key and b in key:
                key = frozenset(key - {a, b} | {u})
            replaced[key] = replaced.get(key, 0.0) + coeff
        terms = replaced
        pair_key = frozenset((a, b))
        terms[pair_key] = terms.get(pair_key, 0.0) + penalty
        for key, coeff in (
            (frozenset((a, u)), -2.0 * penalty),
            (frozenset((b, u)), -2.0 * penalty),
            (frozenset((u,)), 3.0 * penalty),
        ):
            terms[key] = terms.get(key, 0.0) + coeff


def binary_to_spin(
    terms: dict[frozenset[int], float], constant: float
) -> tuple[dict[tuple[int, ...], float], float]:
    """Substitute b = (1 - s)/2 and expand; spin keys are sorted tuples."""
    spin: dict[tuple[int, ...], float] = {}
    const = constant
    for key, coeff in terms.items():
        vars_sorted = tuple(sorted(key))
        k = len(vars_sorted)
        scale = coeff / (2.0 ** k)
        for rsize in range(k + 1):
            for subset in combinations(vars_sorted, rsize):
                c = scale * ((-1.0) ** rsize)
                if not subset:
                    const += c
                else:
                    spin[subset] = spin.get(subset, 0.0) + c
    spin = {k: v for k, v in spin.items() if abs(v) > 1e-12}
    return spin, const


def build_hubo(
    case: CaseInput,
    x_inc: Allocation,
    subset: Iterable[str],
    limits=None,
) -> Hubo:
    """Compile the trust-region sub-model around x_inc on the given items.

    Penalty weight defaults: A_w = 10 * max|c_i| * r on the window,
    A_c = A_w per near-binding cap, A_x = A_w/10 on the window-touch
    cross term, A_4 = A_w/20 on the order-4 refinement.
    """
    limits = limits if limits is not None else case.limits
    arrays = case_arrays(case)
    r = limits.trust_radius
    k_max = limits.k_max
    lots = x_inc.array()

    subset_ids = tuple(sorted(set(subset)))
    indices = [case.item_index(s) for s in subset_ids]

    movable = []
    for item_id, i in zip(subset_ids, indices):
        lo = max(-r, -int(lots[i]))
        hi = min(r, int(arrays.m[i]) - int(lots[i]))
        if (lo, hi) != (0, 0):
            movable.append((item_id, i))
    if not movable or r == 0:
        raise EmptyModelError("empty_model: no subset item can move within the trust radius")

    weights = _bit_weights(r)
    bits_per_item = len(weights)
    codings = []
    var_list: list[tuple[str, str, int]] = []
    for pos, (item_id, i) in enumerate(movable):
        bit_vars = tuple(range(pos * bits_per_item, (pos + 1) * bits_per_item))
        for b_idx in range(bits_per_item):
            var_list.append(("lot_bit", item_id, b_idx))
        codings.append((item_id, i, bit_vars))
    touch_base = len(movable) * bits_per_item
    final_codings = []
    for pos, (item_id, i, bit_vars) in enumerate(codings):
        touch = touch_base + pos
        var_list.append(("touch_ancilla", item_id, 0))
        final_codings.append(
            _ItemCoding(
                item_id=item_id,
                item_index=i,
                bit_vars=bit_vars,
                bit_weights=weights,
                touch_var=touch,
                x_inc=int(lots[i]),
                max_lots=int(arrays.m[i]),
            )
        )

    lam = arrays.lam
    max_c = max(float(arrays.c[c.item_index]) / 100.0 for c in final_codings)
    a_w = 10.0 * max(max_c, 1e-6) * r
    a_c = a_w
    a_x = a_w / 10.0
    a_4 = a_w / 20.0
    a_t = 2.0 * lam + a_w / 10.0

    poly = _BinaryPoly()

    # carry cost (order 1) and movement via touch ancillas
    for c in final_codings:
        daily = float(arrays.c[c.item_index]) / 100.0
        for b, w in zip(c.bit_vars, c.bit_weights):
            poly.add((b,), daily * w)
        poly.add((c.touch_var,), lam)

    # touch consistency: an active bit forces t=1 (order 2), pairwise
    # reinforcement at k>=3, exact OR completion at k=4
    for c in final_codings:
        t = c.touch_var
        for b in c.bit_vars:
            poly.add((b,), a_t)
            poly.add((b, t), -a_t)
        if k_max >= 3:
            for b1, b2 in combinations(c.bit_vars, 2):
                poly.add((b1, b2), a_t)
                poly.add((b1, b2, t), -a_t)
        if k_max >= 4:
            # t * prod(1 - b) expanded
            for rsize in range(len(c.bit_vars) + 1):
                for sub in combinations(c.bit_vars, rsize):
                    poly.add((t,) + sub, a_t * ((-1.0) ** rsize))

    # window recentering: (sum v_i delta_i - g)^2 with g the coverage move
    # to mid-window
    u_inc = int(lots @ arrays.v)
    buffer_cents = arrays.window_cap - arrays.r_eff if arrays.window_cap >= 0 else case.window.buffer_cents
    g = (arrays.r_eff + buffer_cents / 2.0 - u_inc) / 100.0
    window_lin: dict[int, float] = {}
    for c in final_codings:
        v_dollars = float(arrays.v[c.item_index]) / 100.0
        for b, w in zip(c.bit_vars, c.bit_weights):
            window_lin[b] = v_dollars * w
    poly.add_square(window_lin, g, a_w)

    # near-binding caps: (sum a_i delta_i - slack)^2, included when the
    # slack is reachable within the trust region
    caps_included = []
    for row in arrays.cap_rows:
        coeff_by_bit: dict[int, float] = {}
        max_a = 0.0
        for c in final_codings:
            i = c.item_index
            if row.mode == "absolute":
                a_i = float(arrays.v[i]) / 100.0 if row.group_mask[i] else 0.0
            else:
                member = PPM if row.group_mask[i] else 0
                a_i = (member - row.ppm) * float(arrays.v[i]) / (100.0 * PPM)
            if a_i == 0.0:
                continue
            max_a = max(max_a, abs(a_i))
            for b, w in zip(c.bit_vars, c.bit_weights):
                coeff_by_bit[b] = a_i * w
        if not coeff_by_bit:
            continue
        lhs = int(lots @ np.where(row.group_mask, arrays.v, 0))
        if row.mode == "absolute":
            slack = (row.bound - lhs) / 100.0
        else:
            slack = (row.ppm * u_inc - PPM * lhs) / (100.0 * PPM)
        if slack <= r * max_a:
            poly.add_square(coeff_by_bit, slack, a_c)
            caps_included.append(row.constraint_id)

    # window-touch cross term at k>=3
    if k_max >= 3:
        for c in final_codings:
            t = c.touch_var
            poly.add((t,), -a_x * g)
            for b, e in window_lin.items():
                poly.add(tuple(sorted({b, t})), a_x * e)

    # order-4 refinement: per-item window residual gated by its touch bit
    if k_max >= 4:
        g_i = g / len(final_codings)
        for c in final_codings:
            t = c.touch_var
            lin = {b: window_lin[b] for b in c.bit_vars}
            poly.add((t,), a_4 * g_i * g_i)
            items = sorted(lin.items())
            for b, e in items:
                poly.add((t, b), a_4 * (e * e - 2.0 * g_i * e))
            for (b1, e1), (b2, e2) in combinations(items, 2):
                poly.add((t, b1, b2), a_4 * 2.0 * e1 * e2)

    terms, n_quad = reduce_to_order(poly.terms, k_max, len(var_list))
    for q in range(n_quad):
        var_list.append(("quad_ancilla", "", q))

    spin, const = binary_to_spin(terms, poly.constant)
    scale = max((abs(v) for v in spin.values()), default=1.0)
    spin = {k: v / scale for k, v in spin.items()}
    const = const / scale
    max_order = max((len(k) for k in spin), default=0)
    if max_order > k_max:
        raise AssertionError(f"term order {max_order} exceeds k_max {k_max}")

    return Hubo(
        variables=tuple(var_list),
        terms=spin,
        constant=const,
        width=len(var_list),
        max_order=max_order,
        penalty_weights=(
            ("A_w", a_w), ("A_c", a_c), ("A_x", a_x), ("A_4", a_4), ("A_t", a_t),
            ("scale", scale),
        ),
        energy_scale=scale,
        codings=tuple(final_codings),
        subset_ids=subset_ids,
    )


def ancilla_width(h: Hubo) -> int:
    """Total qubit count including touch and quadratization ancillas; the
    explorer gates jumps on this against n_max."""
    return h.width


def map_lots(bits: int, h: Hubo, x_inc: Allocation) -> Allocation:
    """Decode sampled bits to lots: per-item offset added to the incumbent
    and clamped to [0, max]; ancilla bits are ignored."""
    lots = list(x_inc.lots)
    for c in h.codings:
        delta = sum(w for b, w in zip(c.bit_vars, c.bit_weights) if (bits >> b) & 1)
        lots[c.item_index] = min(max(c.x_inc + delta, 0), c.max_lots)
    return Allocation(lots=tuple(lots))


def evaluate_hubo(h: Hubo, bits: int) -> float:
    """Energy of one basis state: constant + sum coeff * prod spins, with
    spin s_j = +1 for bit 0 and -1 for bit 1."""
    total = h.constant
    for key, coeff in h.terms.items():
        sign = 1.0
        for var in key:
            if (bits >> var) & 1:
                sign = -sign
        total += coeff * sign
    return total


def ground_state_diagnosis(h: Hubo, case: CaseInput, x_inc: Allocation) -> dict:
    """Exhaustive fidelity check of a built model (width <= 16).

    Decodes the minimal-energy basis state, repairs it, and compares J
    against the incumbent; when the surrogate's best move does not improve
    J the model is flagged ``penalty_weights_too_weak`` rather than
    failing silently.
    """
    from .explorer import repair
    from .objective import evaluate
    from .requirement import check_feasible

    table = energy_table(h)
    z = int(np.argmin(table))
    decoded = map_lots(z, h, x_inc)
    repaired = repair(decoded, case)
    j_inc = evaluate(x_inc, case)
    j_new = evaluate(repaired, case)
    feasible = check_feasible(repaired, case).feasible
    improves = feasible and j_new <= j_inc + 1e-12
    return {
        "ground_state": z,
        "decoded_lots": repaired.lots,
        "j_incumbent": j_inc,
        "j_decoded": j_new,
        "improves": improves,
        "flag": None if improves else "penalty_weights_too_weak",
    }


def energy_table(h: Hubo) -> np.ndarray:
    """Energies of all 2^width basis states (cached on the model)."""
    cached = getattr(h, "_energy_table", None)
    if cached is not None:
        return cached
    masks = np.zeros(len(h.terms), dtype=np.uint32)
    coeffs = np.zeros(len(h.terms), dtype=np.float64)
    for t, (key, coeff) in enumerate(h.terms.items()):
        mask = 0
        for var in key:
            mask |= 1 << var
        masks[t] = mask
        coeffs[t] = coeff
    table = _kernels.hubo_energy_table(h.width, masks, coeffs, h.constant)
    object.__setattr__(h, "_energy_table", table)
    return table
