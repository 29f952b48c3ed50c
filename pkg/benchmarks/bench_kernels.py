"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs the three hot kernels on representative workloads, checks that both
paths agree, and prints a timing table:

    python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent / "tests"))

from csalloc._kernels import _fallback  # noqa: E402

try:
    from csalloc._kernels import _core
except ImportError:
    _core = None

from csalloc.generator import GenSpec, generate  # noqa: E402
from csalloc.requirement import case_arrays  # noqa: E402
from test_hubo import random_hubo  # noqa: E402


def _model_arrays(h):
    masks = np.zeros(len(h.terms), dtype=np.uint32)
    coeffs = np.zeros(len(h.terms), dtype=np.float64)
    for t, (key, coeff) in enumerate(h.terms.items()):
        m = 0
        for var in key:
            m |= 1 << var
        masks[t] = m
        coeffs[t] = coeff
    return masks, coeffs


def timeit(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    if _core is None:
        print("compiled extension not available; nothing to compare")
        return 1

    rows = []

    h16 = random_hubo(16, 7)
    masks, coeffs = _model_arrays(h16)
    table_c = _core.hubo_energy_table(16, masks, coeffs, h16.constant)
    table_f = _fallback.hubo_energy_table(16, masks, coeffs, h16.constant)
    assert np.array_equal(table_c, table_f)
    rows.append((
        f"energy table (width 16, {len(coeffs)} terms)",
        timeit(lambda: _core.hubo_energy_table(16, masks, coeffs, h16.constant), 5),
        timeit(lambda: _fallback.hubo_energy_table(16, masks, coeffs, h16.constant), 5),
    ))

    gammas = np.array([0.37, 0.81])
    betas = np.array([0.52, 0.11])
    amps_c = _core.qaoa_evolve(table_c, gammas, betas)
    amps_f = _fallback.qaoa_evolve(table_f, gammas, betas)
    assert np.max(np.abs(amps_c - amps_f)) < 1e-12
    rows.append((
        "qaoa evolve (width 16, p=2)",
        timeit(lambda: _core.qaoa_evolve(table_c, gammas, betas), 5),
        timeit(lambda: _fallback.qaoa_evolve(table_f, gammas, betas), 5),
    ))

    case = generate(GenSpec(n_items=8, seed=17, cap_tightness=0.6, max_space=300_000))
    a = case_arrays(case)
    args = (a.v, a.c, a.h, a.m, a.L, a.w, a.alpha, a.lam, a.mu, a.gam,
            a.r_eff, a.window_cap, a.cap_A, a.cap_b, 0)
    out_c = _core.enumerate_best(*args)
    out_f = _fallback.enumerate_best(*args)
    assert np.array_equal(out_c[1], out_f[1])
    rows.append((
        f"brute force ({a.search_space():,} lot vectors)",
        timeit(lambda: _core.enumerate_best(*args), 3),
        timeit(lambda: _fallback.enumerate_best(*args), 3),
    ))

    width = max(len(rows[0][0]), *(len(r[0]) for r in rows)) + 2
    print(f"{'kernel':<{width}} {'compiled':>12} {'fallback':>12} {'speedup':>9}")
    for name, tc, tf in rows:
        print(f"{name:<{width}} {tc * 1e3:>10.2f}ms {tf * 1e3:>10.2f}ms {tf / tc:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
