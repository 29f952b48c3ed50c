"""Scalarized objective: J = BaseCost + lambda*Movement + mu*CVaR + gamma*Overshoot.

BaseCost is $/day, Movement is lots, CVaR and Overshoot are $; gamma is
1/day so j_total is reported in $/day equivalents.  CVaR uses the exact
closed form (the optimal tau sits at a scenario-loss quantile), which the
tests cross-check against a dense tau grid.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass

import numpy as np

from .case import CaseInput, CaseValidationError, ScenarioSet, Weights, WeightsProvenance
from .requirement import Allocation, case_arrays

__all__ = [
    "ObjectiveBreakdown",
    "cvar",
    "cvar_from_losses",
    "breakdown",
    "evaluate",
    "calibrate_weights",
]


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Component view of J for one allocation."""

    base_cost: float  # $/day
    movement: int  # lots
    cvar_value: float  # $
    overshoot: float  # $
    lam: float
    mu: float
    gamma: float

    @property
    def component_products(self) -> tuple[float, float, float]:
        return (self.lam * self.movement, self.mu * self.cvar_value, self.gamma * self.overshoot)

    @property
    def j_total(self) -> float:
        return self.base_cost + self.lam * self.movement + self.mu * self.cvar_value + self.gamma * self.overshoot

    def as_dict(self) -> dict:
        prod = self.component_products
        return {
            "base_cost_per_day": self.base_cost,
            "movement_lots": self.movement,
            "cvar": self.cvar_value,
            "overshoot": self.overshoot,
            "lambda_movement": prod[0],
            "mu_cvar": prod[1],
            "gamma_overshoot": prod[2],
            "j_total": self.j_total,
        }


def cvar_from_losses(losses, weights, alpha: float) -> float:
    """Closed-form CVaR_alpha of a weighted scenario-loss distribution.

    Returns min over tau of ``tau + E[(loss - tau)+] / (1 - alpha)``; the
    minimizer is the smallest loss whose cumulative weight reaches alpha.
    Losses may be negative (gains); no flooring.
    """
    n = len(losses)
    if n == 0:
        _warnings.warn("no_scenarios: CVaR of an empty scenario set is 0", stacklevel=2)
        return 0.0
    pairs = sorted(zip([float(x) for x in losses], [float(x) for x in weights]),
                   key=lambda p: p[0])
    cum = 0.0
    tau = pairs[-1][0]
    for loss, wt in pairs:
        cum += wt
        if cum >= alpha - 1e-12:
            tau = loss
            break
    excess = 0.0
    for loss, wt in pairs:
        d = loss - tau
        if d > 0.0:
            excess += d * wt
    return tau + excess / (1.0 - alpha)


def cvar(x: Allocation, scenarios: ScenarioSet) -> float:
    """CVaR of the allocation's scenario losses (loss_s = sum_i L[s,i] x_i)."""
    if scenarios.n_scenarios == 0:
        _warnings.warn("no_scenarios: CVaR of an empty scenario set is 0", stacklevel=2)
        return 0.0
    L = np.array(scenarios.loss, dtype=np.float64)
    w = np.array(scenarios.weights, dtype=np.float64)
    losses = L @ x.array()
    return cvar_from_losses(losses, w, scenarios.alpha)


def breakdown(x: Allocation, case: CaseInput) -> ObjectiveBreakdown:
    """Exact component evaluation; deterministic and feasibility-blind."""
    arrays = case_arrays(case)
    lots = x.array()
    base = float(lots @ arrays.c) / 100.0
    movement = int(np.abs(lots - arrays.h).sum())
    over_cents = max(int(lots @ arrays.v) - arrays.r_eff, 0)
    if arrays.L.size:
        cv = cvar_from_losses(arrays.L @ lots, arrays.w, arrays.alpha)
    else:
        cv = 0.0
    return ObjectiveBreakdown(
        base_cost=base,
        movement=movement,
        cvar_value=cv,
        overshoot=over_cents / 100.0,
        lam=arrays.lam,
        mu=arrays.mu,
        gamma=arrays.gam,
    )


def evaluate(x: Allocation, case: CaseInput) -> float:
    """J of an allocation (shorthand for breakdown(...).j_total)."""
    return breakdown(x, case).j_total


def calibrate_weights(prov: WeightsProvenance) -> Weights:
    """Operational calibration.

    lambda = ops move cost / horizon days ($/lot), mu = daily price of
    $1MM CVaR / 1e6 (dimensionless), gamma = funding bps / 1e4 / day
    count (1/day).  The provenance hash is recomputed over the inputs.
    """
    if prov.horizon_days <= 0:
        raise CaseValidationError("weights_provenance.horizon_days: must be > 0")
    if prov.day_count <= 0:
        raise CaseValidationError("weights_provenance.day_count: must be > 0")
    lam = (prov.ops_move_cost_cents / 100.0) / prov.horizon_days
    mu = (prov.cvar_price_per_mm_day_cents / 100.0) / 1_000_000.0
    gamma = prov.funding_bps_annual / 10_000.0 / prov.day_count
    stamped = WeightsProvenance(
        ops_move_cost_cents=prov.ops_move_cost_cents,
        horizon_days=prov.horizon_days,
        cvar_price_per_mm_day_cents=prov.cvar_price_per_mm_day_cents,
        funding_bps_annual=prov.funding_bps_annual,
        day_count=prov.day_count,
        content_hash=prov.compute_hash(),
        timestamp=prov.timestamp,
    )
    return Weights(lam=lam, mu=mu, gamma=gamma, provenance=stamped)
