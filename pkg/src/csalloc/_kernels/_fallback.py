"""Pure-numpy implementations of the hot kernels.

Selected at import time by :mod:`csalloc._kernels` when the compiled
Cython extension is unavailable (or disabled via ``CSALLOC_NO_EXT=1``).
Semantics match ``_core.pyx`` term for term; floating-point results may
differ in the last ulp because numpy reduces in a different order.
"""

from __future__ import annotations

import numpy as np

IMPL = "fallback"


def _parity_table() -> np.ndarray:
    x = np.arange(1 << 16, dtype=np.uint32)
    x ^= x >> 8
    x ^= x >> 4
    x ^= x >> 2
    x ^= x >> 1
    return (x & 1).astype(np.uint8)


_PARITY16 = _parity_table()


def hubo_energy_table(width: int, masks: np.ndarray, coeffs: np.ndarray, constant: float) -> np.ndarray:
    """Energy of every basis state of a spin polynomial.

    State z encodes bit j as ``(z >> j) & 1``; spin s_j = +1 for bit 0,
    -1 for bit 1.  A term (mask, c) contributes ``c * prod(s_j, j in mask)``
    = ``c * (1 - 2 * parity(z & mask))``.
    """
    n = 1 << width
    z = np.arange(n, dtype=np.uint32)
    table = np.full(n, float(constant), dtype=np.float64)
    for mask, coeff in zip(masks, coeffs):
        sign = 1.0 - 2.0 * _PARITY16[z & np.uint32(mask)]
        table += coeff * sign
    return table


def qaoa_evolve(table: np.ndarray, gammas: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Depth-p evolution: diagonal phase by the energy table, then an
    X-rotation on every qubit, starting from the uniform superposition."""
    n = table.shape[0]
    width = int(n).bit_length() - 1
    amps = np.full(n, 1.0 / np.sqrt(n), dtype=np.complex128)
    for gamma, beta in zip(gammas, betas):
        amps = amps * np.exp(-1j * gamma * table)
        c = np.cos(beta)
        s = np.sin(beta)
        for q in range(width):
            a = amps.reshape(-1, 2, 1 << q)
            a0 = a[:, 0, :].copy()
            a1 = a[:, 1, :].copy()
            a[:, 0, :] = c * a0 - 1j * s * a1
            a[:, 1, :] = c * a1 - 1j * s * a0
    return amps


def batch_cvar(losses: np.ndarray, weights: np.ndarray, alpha: float) -> np.ndarray:
    """CVaR_alpha of each row of per-scenario losses (closed form).

    tau* is the smallest scenario loss whose cumulative weight reaches
    alpha; CVaR = tau + E[(loss - tau)+] / (1 - alpha).
    """
    if losses.size == 0 or weights.size == 0:
        return np.zeros(losses.shape[0], dtype=np.float64)
    order = np.argsort(losses, axis=1, kind="stable")
    sorted_losses = np.take_along_axis(losses, order, axis=1)
    sorted_w = weights[order]
    cum = np.cumsum(sorted_w, axis=1)
    k = np.argmax(cum >= alpha - 1e-12, axis=1)
    tau = np.take_along_axis(sorted_losses, k[:, None], axis=1)[:, 0]
    excess = np.maximum(losses - tau[:, None], 0.0)
    return tau + (excess * weights[None, :]).sum(axis=1) / (1.0 - alpha)


def batch_check(
    X: np.ndarray,
    v: np.ndarray,
    r_eff: int,
    window_cap: int,
    cap_A: np.ndarray,
    cap_b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized feasibility of allocation rows (coverage, window, caps).

    ``window_cap`` is the absolute upper bound on coverage in cents, or -1
    when the hard cap is disabled.  Lot bounds are the caller's job.
    """
    U = X @ v
    ok = U >= r_eff
    if window_cap >= 0:
        ok &= U <= window_cap
    if cap_A.size:
        ok &= np.all(X @ cap_A.T <= cap_b[None, :], axis=1)
    return ok, U


def batch_objective(
    X: np.ndarray,
    U: np.ndarray,
    c_cents: np.ndarray,
    h: np.ndarray,
    L: np.ndarray,
    w: np.ndarray,
    alpha: float,
    lam: float,
    mu: float,
    gam: float,
    r_eff: int,
) -> np.ndarray:
    base = (X @ c_cents) / 100.0
    movement = np.abs(X - h[None, :]).sum(axis=1)
    over = np.maximum(U - r_eff, 0)
    if L.size:
        cvar = batch_cvar(X @ L.T, w, alpha)
    else:
        cvar = np.zeros(X.shape[0], dtype=np.float64)
    return base + lam * movement + mu * cvar + gam * (over / 100.0)


def enumerate_best(
    v: np.ndarray,
    c_cents: np.ndarray,
    h: np.ndarray,
    m: np.ndarray,
    L: np.ndarray,
    w: np.ndarray,
    alpha: float,
    lam: float,
    mu: float,
    gam: float,
    r_eff: int,
    window_cap: int,
    cap_A: np.ndarray,
    cap_b: np.ndarray,
    mode: int,
) -> tuple[bool, np.ndarray, float, int]:
    """Exhaustive scan of all lot vectors in lexicographic order.

    mode 0: minimize J over feasible vectors (window enforced when
    window_cap >= 0); mode 1: minimize overshoot U - r_eff over vectors
    feasible without the window.  First optimum in lex order wins ties.
    Returns (found, x, J_of_x, overshoot_cents_of_x).
    """
    n = len(v)
    radices = (m + 1).astype(np.int64)
    total = int(np.prod(radices))
    strides = np.ones(n, dtype=np.int64)
    for i in range(n - 2, -1, -1):
        strides[i] = strides[i + 1] * radices[i + 1]

    best_x: np.ndarray | None = None
    best_J = np.inf
    best_over = np.iinfo(np.int64).max
    chunk = 1 << 14
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        X = (idx[:, None] // strides[None, :]) % radices[None, :]
        U = X @ v
        ok = U >= r_eff
        if mode == 0 and window_cap >= 0:
            ok &= U <= window_cap
        if cap_A.size:
            ok &= np.all(X @ cap_A.T <= cap_b[None, :], axis=1)
        if not ok.any():
            continue
        Xok = X[ok]
        Uok = U[ok]
        if mode == 1:
            over = Uok - r_eff
            j = int(np.argmin(over))
            if int(over[j]) < best_over:
                best_over = int(over[j])
                best_x = Xok[j].copy()
        else:
            J = batch_objective(Xok, Uok, c_cents, h, L, w, alpha, lam, mu, gam, r_eff)
            j = int(np.argmin(J))
            if J[j] < best_J:
                best_J = float(J[j])
                best_x = Xok[j].copy()
                best_over = int(max(Uok[j] - r_eff, 0))

    if best_x is None:
        return False, np.zeros(n, dtype=np.int64), np.inf, -1
    if mode == 1:
        U_best = int(best_x @ v)
        J = batch_objective(
            best_x[None, :], np.array([U_best], dtype=np.int64),
            c_cents, h, L, w, alpha, lam, mu, gam, r_eff,
        )
        best_J = float(J[0])
    return True, best_x, best_J, int(best_over)
