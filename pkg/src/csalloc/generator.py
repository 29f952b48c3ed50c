"""Deterministic synthetic cases: a cash line plus a government-style
bond ladder with tiered haircuts (sp/m1/m2, m2 strictly tighter than m1),
factor-model scenario losses and operationally calibrated weights.

Desk profiles keep the lot space enumerable so the exhaustive oracle
applies; the "tiny" profile pins the two-asset T1 fixture used across
the test suite.  Everything is a pure function of the GenSpec (cases are
emitted through the canonical serializer and re-parsed, so generated
cases always pass validation).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .case import CaseInput, canonical_json, parse_case

__all__ = ["GenSpec", "generate", "case_bytes"]

# (class, bucket, m1 haircut); sp = m1 + 0.005, m2 = m1 + 0.015
LADDER = (
    ("Govt", "UST_6M", 0.005),
    ("Govt", "UST_2Y", 0.010),
    ("Govt", "UST_5Y", 0.020),
    ("Govt", "UST_10Y", 0.030),
    ("Govt", "UST_20Y", 0.045),
    ("TIPS", "TIPS_10Y", 0.025),
    ("Agency", "AGY_5Y", 0.040),
    ("MBS", "MBS_30Y", 0.060),
    ("Corp", "CORP_IG_5Y", 0.080),
)

_TS = "2009-06-15T00:00:00Z"


@dataclass(frozen=True)
class GenSpec:
    n_items: int = 8
    exposure_scale: float = 0.6
    regime: str = "m1"
    buffer_bps: Optional[int] = None  # None: sized to 1.5 lots of headroom
    cash_cap: float = 0.20
    cap_tightness: float = 0.0  # 0 loose .. 1 binding class caps
    scenario_count: int = 4
    seed: int = 0
    profile: str = "desk"  # "desk" | "tiny"
    mta: float = 0.0
    max_space: int = 300_000
    max_lots: int = 6
    weight_profile: str = "practical"  # "practical" | "tight_liquidity"
    loss_scale: float = 1.0

    def validate(self) -> None:
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")
        if self.profile not in ("desk", "tiny"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.profile == "tiny" and self.n_items != 2:
            raise ValueError("the tiny profile is the pinned 2-asset fixture")
        if self.weight_profile not in ("practical", "tight_liquidity"):
            raise ValueError(f"unknown weight profile {self.weight_profile!r}")


def _tiny_doc() -> dict:
    """The T1 fixture: RA-aligned cash versus a 5%-haircut bond."""
    return {
        "csa": {
            "meta": {"governing_law": "NY", "bilateral": True},
            "terms": {"threshold": 0, "ia": 0, "im": 0, "mta": 0, "ra": 10000,
                      "base_currency": "USD"},
            "regime": {"default": "m1", "overrides": {}},
        },
        "haircuts": {"matrix": {
            "Govt|UST_5Y|sp": 0.04, "Govt|UST_5Y|m1": 0.05, "Govt|UST_5Y|m2": 0.08,
        }},
        "eligibility": {"scheduleA": [["Cash", "CASH"], ["Govt", "UST_5Y"]]},
        "caps": {"cash_cap": {"mode": "fraction_of_U", "value": 0.2}},
        "window": {"buffer": 10000, "hard_cap_enabled": True},
        "exposure": {"amount": 50000, "timestamp": _TS},
        "scenarios": {"loss_matrix": [[0.0, 0.0]], "weights": [1.0], "alpha": 0.9},
        "inventory": [
            {"id": "CASH_USD", "class": "Cash", "issuer": "TREASURY", "bucket": "CASH",
             "currency": "USD", "price": 1.0, "unit": 10000, "current_lots": 0,
             "max_lots": 6, "is_cash": True, "eligible": True, "icad": "Cash"},
            {"id": "UST_5Y", "class": "Govt", "issuer": "UST", "bucket": "UST_5Y",
             "currency": "USD", "price": 1.0, "unit": 10000, "current_lots": 0,
             "max_lots": 8, "is_cash": False, "eligible": True, "icad": "Govt"},
        ],
        "costs": {"carry_per_lot_day": {"CASH_USD": 1.0, "UST_5Y": 0.5}},
        "weights": {"lambda": 0.0, "mu": 0.0, "gamma": 0.0},
        "audit": {"flags": ["valuation_audit", "qubo_manifests", "certifier_trace"],
                  "span_citations": []},
        "solver": {"limits": {}},
    }


def _round2(x: float) -> float:
    return round(float(x), 2)


def _desk_doc(spec: GenSpec, rng: np.random.Generator, relax: int) -> dict:
    """One candidate desk case; `relax` loosens caps/buffer/exposure when a
    previous candidate failed the feasibility probe."""
    n = spec.n_items
    ra = 10_000

    classes: list[str] = []
    buckets: list[str] = []
    m1_hc: list[float] = []
    items = []
    carry: dict[str, float] = {}
    for i in range(n):
        if i == 0:
            item_id, cls, bucket, is_cash = "CASH_USD", "Cash", "CASH", True
            price = 1.0
            hc = None
            c = _round2(rng.uniform(0.8, 1.5))
        else:
            cls, bucket, hc = LADDER[(i - 1) % len(LADDER)]
            copy = (i - 1) // len(LADDER)
            item_id = f"{bucket}_{copy}" if copy else bucket
            is_cash = False
            price = round(float(rng.uniform(0.96, 1.04)), 4)
            c = _round2(rng.uniform(0.2, 1.2))
        m = int(rng.integers(2, spec.max_lots + 1))
        h = int(rng.integers(0, m // 2 + 1))
        items.append({
            "id": item_id, "class": cls, "issuer": "TREASURY" if is_cash else f"ISS_{item_id}",
            "bucket": bucket, "currency": "USD", "price": price, "unit": ra,
            "current_lots": h, "max_lots": m, "is_cash": is_cash,
            "eligible": True, "icad": cls,
        })
        carry[item_id] = c
        classes.append(cls)
        buckets.append(bucket)
        if hc is not None:
            m1_hc.append(hc)

    # keep the lot space enumerable for the exhaustive oracle
    while int(np.prod([it["max_lots"] + 1 for it in items])) > spec.max_space:
        worst = max(range(n), key=lambda k: items[k]["max_lots"])
        items[worst]["max_lots"] -= 1
        items[worst]["current_lots"] = min(items[worst]["current_lots"], items[worst]["max_lots"])

    matrix = {}
    for cls, bucket, hc in LADDER:
        matrix[f"{cls}|{bucket}|sp"] = round(hc + 0.005, 6)
        matrix[f"{cls}|{bucket}|m1"] = round(hc, 6)
        matrix[f"{cls}|{bucket}|m2"] = round(hc + 0.015, 6)

    def lot_value(it) -> float:
        if it["is_cash"]:
            return it["unit"] * it["price"]
        hc = matrix[f"{it['class']}|{it['bucket']}|{spec.regime}"]
        return it["unit"] * it["price"] * (1 - hc)

    capacity = sum(lot_value(it) * it["max_lots"] for it in items)
    scale = spec.exposure_scale * (0.9 ** relax)
    exposure = max(int(capacity * scale / 1000) * 1000, ra)

    r_eff = ((exposure * 100 + ra * 100 - 1) // (ra * 100)) * ra  # dollars, RA-rounded up
    max_v = max(lot_value(it) for it in items)
    if spec.buffer_bps is not None:
        buffer = f"{spec.buffer_bps}bps"
    else:
        bps = int(np.ceil((1.5 + 0.5 * relax) * max_v / r_eff * 1e4))
        buffer = f"{bps}bps"

    caps: dict = {"cash_cap": {
        "mode": "fraction_of_U",
        "value": round(min(max(spec.cash_cap * (1.0 - 0.45 * spec.cap_tightness) + 0.05 * relax, 0.05), 1.0), 4),
    }}
    if spec.cap_tightness > 0:
        class_caps = {}
        bond_classes = sorted({it["class"] for it in items if not it["is_cash"]})
        total_bond = sum(lot_value(it) * it["max_lots"] for it in items if not it["is_cash"])
        for cls in bond_classes:
            share = sum(lot_value(it) * it["max_lots"] for it in items if it["class"] == cls) / max(total_bond, 1.0)
            frac = share * (1.6 - 0.8 * spec.cap_tightness) + 0.1 * relax
            class_caps[cls] = {"mode": "fraction_of_U", "value": round(min(max(frac, 0.15), 1.0), 4)}
        caps["class_cap"] = class_caps
        # absolute issuer caps on the cheapest-carry lines: binding corners
        # that force diversification without structural infeasibility
        bonds = [it for it in items if not it["is_cash"]]
        bonds.sort(key=lambda it: carry[it["id"]] / lot_value(it))
        n_capped = min(len(bonds), 1 + int(spec.cap_tightness > 0.6))
        issuer_caps = {}
        for it in bonds[:n_capped]:
            full = lot_value(it) * it["max_lots"]
            frac_keep = min(1.0 - 0.45 * spec.cap_tightness + 0.15 * relax, 1.0)
            value = max(int(full * frac_keep / 100) * 100, int(lot_value(it) / 100) * 100 + 100)
            issuer_caps[it["issuer"]] = {"mode": "absolute", "value": value}
        caps["issuer_cap"] = issuer_caps

    s_count = spec.scenario_count
    if s_count > 0:
        f1 = rng.normal(0, 1, s_count)
        f2 = rng.normal(0, 1, s_count)
        eps = rng.normal(0, 1, (s_count, n))
        loss = []
        for s in range(s_count):
            row = []
            for i, it in enumerate(items):
                dur = 0.1 if it["is_cash"] else 0.5 + 7.5 * ((i * 37) % 16) / 16.0
                lv = lot_value(it) * spec.loss_scale
                row.append(_round2(lv * (0.004 * dur * f1[s] + 0.002 * f2[s] + 0.003 * eps[s, i])))
            loss.append(row)
        parts = rng.integers(1, 10, s_count)
        ppm = [int(1_000_000 * p / parts.sum()) for p in parts]
        ppm[0] += 1_000_000 - sum(ppm)
        weights = [p / 1e6 for p in ppm]
        scenarios = {"loss_matrix": loss, "weights": weights, "alpha": 0.9}
    else:
        scenarios = {"loss_matrix": [], "weights": [], "alpha": 0.9}

    return {
        "csa": {
            "meta": {"governing_law": "NY", "bilateral": True},
            "terms": {"threshold": 0, "ia": 0, "im": 0, "mta": spec.mta, "ra": ra,
                      "base_currency": "USD"},
            "regime": {"default": spec.regime, "overrides": {}},
        },
        "haircuts": {"matrix": matrix},
        "eligibility": {"scheduleA": [list(p) for p in sorted({(it["class"], it["bucket"]) for it in items})]},
        "caps": caps,
        "window": {"buffer": buffer, "hard_cap_enabled": True},
        "exposure": {"amount": exposure, "timestamp": _TS},
        "scenarios": scenarios,
        "inventory": items,
        "costs": {"carry_per_lot_day": carry},
        "weights_provenance": (
            {"ops_move_cost": 900, "horizon_days": 30, "cvar_price_per_mm_day": 1000,
             "funding_bps_annual": 50, "day_count": 360, "timestamp": _TS}
            if spec.weight_profile == "practical"
            else {"ops_move_cost": 2000, "horizon_days": 70, "cvar_price_per_mm_day": 2500,
                  "funding_bps_annual": 80, "day_count": 360, "timestamp": _TS}
        ),
        "audit": {"flags": ["valuation_audit", "qubo_manifests", "certifier_trace"],
                  "span_citations": []},
        "solver": {"limits": {"seed": spec.seed}},
    }


def generate(spec: GenSpec) -> CaseInput:
    """Emit a valid, window-feasible case for the spec (deterministic)."""
    spec.validate()
    if spec.profile == "tiny":
        return parse_case(canonical_json(_tiny_doc()))

    from .baselines import bl1_density_greedy
    from .requirement import check_feasible

    last_error = None
    for relax in range(8):
        rng = np.random.default_rng(spec.seed)
        doc = _desk_doc(spec, rng, relax)
        case = parse_case(canonical_json(doc))
        try:
            probe = bl1_density_greedy(case)
        except Exception as exc:  # pragma: no cover - defensive
            last_error = exc
            continue
        if check_feasible(probe, case).feasible:
            return case
        last_error = None
    raise RuntimeError(f"could not generate a feasible case for {spec} ({last_error})")


def case_bytes(spec: GenSpec) -> bytes:
    """Canonical bytes of the generated case (what `gen` writes to disk)."""
    from .case import case_to_dict

    return canonical_json(case_to_dict(generate(spec)))
