"""Statevector simulator: exactness, unitarity, angle search, sampling."""

from __future__ import annotations

import time

import numpy as np
import pytest
from scipy.linalg import expm

from csalloc.hubo import Hubo, energy_table
from csalloc.qaoa import (
    Angles,
    StateVector,
    WidthLimitError,
    evolve,
    expected_energy,
    optimize_angles,
    sample,
)

from test_hubo import random_hubo


def dense_reference(h: Hubo, angles: Angles) -> np.ndarray:
    """Independent oracle: full 2^n x 2^n operators via scipy expm."""
    n = h.width
    dim = 1 << n
    table = energy_table(h)
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    mixer_h = np.zeros((dim, dim))
    for q in range(n):
        op = np.eye(1)
        for j in range(n - 1, -1, -1):  # bit j varies fastest
            op = np.kron(op, X if j == q else np.eye(2))
        mixer_h += op
    state = np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)
    for gamma, beta in zip(angles.gammas, angles.betas):
        state = np.exp(-1j * gamma * table) * state
        state = expm(-1j * beta * mixer_h) @ state
    return state


class TestEvolve:
    def test_zero_angles_is_uniform(self):
        h = random_hubo(5, 1)
        state = evolve(h, Angles(gammas=(0.0,), betas=(0.0,)))
        assert np.allclose(state.probabilities(), 1 / 32, atol=1e-15)

    def test_single_qubit_closed_form(self):
        # H = a Z, p = 1: hand-derived 2x2 product
        a = 0.7
        h = Hubo(variables=(("lot_bit", "x", 0),), terms={(0,): a}, constant=0.0,
                 width=1, max_order=1, penalty_weights=(), energy_scale=1.0,
                 codings=(), subset_ids=())
        gamma, beta = 0.8, 0.3
        state = evolve(h, Angles(gammas=(gamma,), betas=(beta,)))
        phase0 = np.exp(-1j * gamma * a) / np.sqrt(2)      # z=0, spin +1
        phase1 = np.exp(+1j * gamma * a) / np.sqrt(2)      # z=1, spin -1
        c, s = np.cos(beta), np.sin(beta)
        expected0 = c * phase0 - 1j * s * phase1
        expected1 = c * phase1 - 1j * s * phase0
        assert state.amplitudes[0] == pytest.approx(expected0, abs=1e-12)
        assert state.amplitudes[1] == pytest.approx(expected1, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_norm_preserved_to_1e10(self, seed):
        rng = np.random.default_rng(seed)
        h = random_hubo(int(rng.integers(2, 11)), seed + 40)
        p = int(rng.integers(1, 5))
        angles = Angles(gammas=tuple(rng.uniform(0, np.pi, p)),
                        betas=tuple(rng.uniform(0, np.pi, p)))
        state = evolve(h, angles)
        assert abs(state.norm() - 1.0) < 1e-10

    def test_beta_zero_is_pure_phase(self):
        h = random_hubo(6, 9)
        state = evolve(h, Angles(gammas=(0.9, 0.4), betas=(0.0, 0.0)))
        assert np.allclose(state.probabilities(), 1 / 64, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("width", [2, 4, 6])
    def test_matches_dense_matrix_simulation(self, width):
        h = random_hubo(width, width + 17)
        angles = Angles(gammas=(0.37, 1.11), betas=(0.52, 0.21))
        state = evolve(h, angles)
        ref = dense_reference(h, angles)
        assert np.max(np.abs(state.amplitudes - ref)) < 1e-9

    def test_width_sixteen_under_two_seconds(self):
        h = random_hubo(16, 5)
        t0 = time.monotonic()
        state = evolve(h, Angles(gammas=(0.3, 0.7), betas=(0.4, 0.2)))
        elapsed = time.monotonic() - t0
        assert abs(state.norm() - 1.0) < 1e-10
        assert elapsed < 2.0

    def test_width_over_sixteen_refused(self):
        h = random_hubo(17, 0)
        with pytest.raises(WidthLimitError):
            evolve(h, Angles(gammas=(0.1,), betas=(0.1,)))


class TestExpectedEnergy:
    def test_uniform_average_at_zero_angles(self):
        h = random_hubo(7, 21)
        table = energy_table(h)
        assert expected_energy(h, Angles(gammas=(0.0,), betas=(0.0,))) == pytest.approx(
            float(table.mean()), abs=1e-10)

    def test_agrees_with_shot_estimate_within_3_sigma(self):
        h = random_hubo(8, 33)
        angles = Angles(gammas=(0.5, 0.9), betas=(0.3, 0.6))
        exact = expected_energy(h, angles)
        state = evolve(h, angles)
        table = energy_table(h)
        rng = np.random.default_rng(0)
        shots = sample(state, 10_000, rng)
        values = table[shots]
        sigma = values.std(ddof=1) / np.sqrt(len(values))
        assert abs(values.mean() - exact) <= 3 * max(sigma, 1e-12)


class TestOptimizeAngles:
    def test_budget_one_returns_warm_start(self):
        h = random_hubo(4, 2)
        warm = Angles(gammas=(0.11, 0.22), betas=(0.33, 0.44))
        out = optimize_angles(h, 2, 1, np.random.default_rng(0), warm_start=warm)
        assert out == warm

    def test_single_qubit_near_dense_grid_optimum(self):
        h = Hubo(variables=(("lot_bit", "x", 0),), terms={(0,): 1.0}, constant=0.0,
                 width=1, max_order=1, penalty_weights=(), energy_scale=1.0,
                 codings=(), subset_ids=())
        found = optimize_angles(h, 1, 200, np.random.default_rng(1))
        e_found = expected_energy(h, found)
        # dense-grid oracle over [0, pi)^2
        grid = np.linspace(0, np.pi, 120, endpoint=False)
        best = min(
            expected_energy(h, Angles(gammas=(g,), betas=(b,)))
            for g in grid for b in grid
        )
        assert e_found <= best + 0.01 * abs(best)

    def test_depth_two_no_worse_than_embedded_depth_one(self):
        for seed in (3, 4, 5):
            h = random_hubo(6, seed)
            rng = np.random.default_rng(seed)
            a1 = optimize_angles(h, 1, 100, rng)
            warm = Angles(gammas=a1.gammas + (0.0,), betas=a1.betas + (0.0,))
            a2 = optimize_angles(h, 2, 100, rng, warm_start=warm)
            assert expected_energy(h, a2) <= expected_energy(h, a1) + 1e-9

    def test_deterministic_given_seed(self):
        h = random_hubo(5, 8)
        a = optimize_angles(h, 2, 80, np.random.default_rng(42))
        b = optimize_angles(h, 2, 80, np.random.default_rng(42))
        assert a == b

    def test_ground_state_amplification_p2(self):
        wins = 0
        for seed in range(10):
            width = 6 + seed % 5  # widths 6..10
            h = random_hubo(width, 100 + seed)
            rng = np.random.default_rng(seed)
            angles = optimize_angles(h, 2, 150, rng)
            state = evolve(h, angles)
            table = energy_table(h)
            p_ground = float(state.probabilities()[int(np.argmin(table))])
            if p_ground > 2.0 ** (-width):
                wins += 1
        assert wins >= 8


class TestSample:
    def test_basis_state_always_identical(self):
        amps = np.zeros(8, dtype=complex)
        amps[5] = 1.0
        out = sample(StateVector(amplitudes=amps), 64, np.random.default_rng(0))
        assert np.all(out == 5)

    def test_uniform_frequencies_within_5_sigma(self):
        width = 4
        amps = np.full(16, 0.25, dtype=complex)
        out = sample(StateVector(amplitudes=amps), 1 << 16, np.random.default_rng(1))
        counts = np.bincount(out, minlength=16)
        n = 1 << 16
        p = 1 / 16
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= 5 * sigma)

    def test_single_shot(self):
        amps = np.full(4, 0.5, dtype=complex)
        out = sample(StateVector(amplitudes=amps), 1, np.random.default_rng(2))
        assert out.shape == (1,)

    def test_deterministic_given_seed(self):
        amps = np.full(16, 0.25, dtype=complex)
        a = sample(StateVector(amplitudes=amps), 100, np.random.default_rng(9))
        b = sample(StateVector(amplitudes=amps), 100, np.random.default_rng(9))
        assert np.array_equal(a, b)
