"""Exact statevector simulation of depth-p higher-order QAOA (width <= 16).

The phase Hamiltonian is diagonal, so each layer multiplies amplitudes by
exp(-i*gamma*E(z)) from the model's energy table and then applies the
standard X-mixer as per-qubit rotations.  Angle search is a coarse
layerwise grid over [0, pi)^2 followed by Nelder-Mead refinement within
an evaluation budget; everything is deterministic given the rng seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .hubo import Hubo, energy_table

__all__ = [
    "Angles",
    "StateVector",
    "WidthLimitError",
    "MAX_WIDTH",
    "evolve",
    "expected_energy",
    "optimize_angles",
    "sample",
]

MAX_WIDTH = 16
GRID_POINTS = 5  # per angle, coarse grid over [0, pi)
NM_MAX_EVALS = 50  # Nelder-Mead refinement cap within the overall budget


class WidthLimitError(Exception):
    """Model too wide to simulate; callers must gate via ancilla_width."""


@dataclass(frozen=True)
class Angles:
    gammas: tuple[float, ...]
    betas: tuple[float, ...]

    def __post_init__(self):
        if len(self.gammas) != len(self.betas) or not self.gammas:
            raise ValueError("gammas and betas must be equal-length and non-empty")
        if not all(np.isfinite(self.gammas)) or not all(np.isfinite(self.betas)):
            raise ValueError("angles must be finite")

    @property
    def p(self) -> int:
        return len(self.gammas)

    def flat(self) -> np.ndarray:
        return np.array(list(self.gammas) + list(self.betas), dtype=np.float64)

    @staticmethod
    def from_flat(x: np.ndarray) -> "Angles":
        p = len(x) // 2
        return Angles(gammas=tuple(float(v) for v in x[:p]), betas=tuple(float(v) for v in x[p:]))


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray  # complex128, 2^width

    @property
    def width(self) -> int:
        return int(self.amplitudes.shape[0]).bit_length() - 1

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sqrt(self.probabilities().sum()))


def _check_width(h: Hubo) -> None:
    if h.width > MAX_WIDTH:
        raise WidthLimitError(f"width {h.width} exceeds the simulator limit {MAX_WIDTH}")


def evolve(h: Hubo, angles: Angles) -> StateVector:
    """Apply p layers of (diagonal phase, X-mixer) to |+>^n."""
    _check_width(h)
    table = energy_table(h)
    amps = _kernels.qaoa_evolve(
        table,
        np.asarray(angles.gammas, dtype=np.float64),
        np.asarray(angles.betas, dtype=np.float64),
    )
    return StateVector(amplitudes=amps)


def expected_energy(h: Hubo, angles: Angles) -> float:
    """<E> = sum_z |amp_z|^2 E(z), exact."""
    state = evolve(h, angles)
    return float(state.probabilities() @ energy_table(h))


def _ramp_init(p: int) -> Angles:
    """Mixer-ramp initialization: betas linearly decreasing across layers."""
    gammas = tuple(0.15 * np.pi * (ell + 1) / p for ell in range(p))
    betas = tuple(0.25 * np.pi * (1.0 - ell / p) for ell in range(p))
    return Angles(gammas=gammas, betas=betas)


def optimize_angles(
    h: Hubo,
    p: int,
    budget: int,
    rng: np.random.Generator,
    warm_start: Optional[Angles] = None,
) -> Angles:
    """Best-found angles by expected energy within an evaluation budget.

    Layerwise greedy grid (earlier layers frozen as later ones are
    scanned), then Nelder-Mead over all 2p parameters; a warm start joins
    the initial simplex.  With budget <= 1 the warm start (or the ramp
    init) is returned unevaluated.
    """
    _check_width(h)
    if budget <= 1:
        return warm_start if warm_start is not None else _ramp_init(p)

    table = energy_table(h)
    evals = 0
    best: Optional[tuple[float, tuple[float, ...]]] = None  # full-depth only

    def energy_at(gammas: list[float], betas: list[float], full_depth: bool) -> Optional[float]:
        nonlocal evals, best
        if evals >= budget:
            return None
        evals += 1
        amps = _kernels.qaoa_evolve(
            table, np.asarray(gammas, dtype=np.float64), np.asarray(betas, dtype=np.float64)
        )
        e = float((np.abs(amps) ** 2) @ table)
        if full_depth:
            key = tuple(gammas) + tuple(betas)
            if best is None or (e, key) < best:
                best = (e, key)
        return e

    init = _ramp_init(p)
    grid = [np.pi * k / GRID_POINTS for k in range(GRID_POINTS)]

    chosen_g: list[float] = []
    chosen_b: list[float] = []
    for layer in range(p):
        layer_best: Optional[tuple[float, float, float]] = None
        for g in grid:
            for b in grid:
                e = energy_at(chosen_g + [g], chosen_b + [b], full_depth=(layer == p - 1))
                if e is None:
                    break
                if layer_best is None or e < layer_best[0]:
                    layer_best = (e, g, b)
            else:
                continue
            break
        if layer_best is None:
            chosen_g.append(init.gammas[layer])
            chosen_b.append(init.betas[layer])
        else:
            chosen_g.append(layer_best[1])
            chosen_b.append(layer_best[2])

    x0 = np.array(chosen_g + chosen_b, dtype=np.float64)
    energy_at(chosen_g, chosen_b, full_depth=True)

    if warm_start is not None and warm_start.p == p:
        energy_at(list(warm_start.gammas), list(warm_start.betas), full_depth=True)

    remaining = min(budget - evals, NM_MAX_EVALS)
    if remaining > 2 * p + 1:
        def objective(x: np.ndarray) -> float:
            e = energy_at(list(x[:p]), list(x[p:]), full_depth=True)
            return e if e is not None else np.inf

        simplex = [x0]
        for d in range(2 * p):
            vertex = x0.copy()
            vertex[d] += 0.05 * np.pi * (1.0 + 0.1 * rng.random())
            simplex.append(vertex)
        if warm_start is not None and warm_start.p == p:
            simplex[-1] = warm_start.flat()
        minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "maxfev": remaining,
                "initial_simplex": np.array(simplex),
                "xatol": 1e-3,
                "fatol": 1e-9,
            },
        )

    assert best is not None
    return Angles.from_flat(np.array(best[1]))


def sample(state: StateVector, shots: int, rng: np.random.Generator) -> np.ndarray:
    """shots i.i.d. basis-state draws from |amp|^2, as integer bitstrings."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = state.probabilities()
    probs = probs / probs.sum()
    return rng.choice(len(probs), size=shots, p=probs)
