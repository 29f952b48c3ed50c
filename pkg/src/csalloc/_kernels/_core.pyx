# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: HUBO energy tables, QAOA statevector layers, and
the exhaustive lot enumerator.  Semantics mirror ``_fallback.py``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt

cnp.import_array()

IMPL = "compiled"


def _parity_table():
    x = np.arange(1 << 16, dtype=np.uint32)
    x ^= x >> 8
    x ^= x >> 4
    x ^= x >> 2
    x ^= x >> 1
    return (x & 1).astype(np.uint8)


_PARITY16 = _parity_table()
cdef unsigned char[::1] _PARITY = _PARITY16


def hubo_energy_table(int width, masks, coeffs, double constant):
    """Energy of every basis state of a spin polynomial (see fallback)."""
    cdef Py_ssize_t n = 1 << width
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.full(n, constant, dtype=np.float64)
    cdef double[::1] table = out
    cdef unsigned int[::1] mv = np.ascontiguousarray(masks, dtype=np.uint32)
    cdef double[::1] cv = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef Py_ssize_t t, z
    cdef unsigned int mask
    cdef double coeff
    for t in range(mv.shape[0]):
        mask = mv[t]
        coeff = cv[t]
        for z in range(n):
            if _PARITY[(<unsigned int> z) & mask]:
                table[z] -= coeff
            else:
                table[z] += coeff
    return out


def qaoa_evolve(table, gammas, betas):
    """Depth-p phase + X-mixer evolution from the uniform superposition."""
    cdef double[::1] tv = np.ascontiguousarray(table, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(gammas, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(betas, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0]
    cdef int width = 0
    while (1 << width) < n:
        width += 1
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(n, dtype=np.complex128)
    cdef double[::1] re = np.empty(n, dtype=np.float64)
    cdef double[::1] im = np.empty(n, dtype=np.float64)
    cdef double amp0 = 1.0 / sqrt(<double> n)
    cdef Py_ssize_t z, q, base, k, step, layer
    cdef double g, b, c, s, ph, cp, sp, r0, i0, r1, i1
    for z in range(n):
        re[z] = amp0
        im[z] = 0.0
    for layer in range(gv.shape[0]):
        g = gv[layer]
        b = bv[layer]
        for z in range(n):
            ph = g * tv[z]
            cp = cos(ph)
            sp = sin(ph)
            r0 = re[z]
            i0 = im[z]
            # multiply by exp(-i*ph) = cp - i*sp
            re[z] = r0 * cp + i0 * sp
            im[z] = i0 * cp - r0 * sp
        c = cos(b)
        s = sin(b)
        for q in range(width):
            step = 1 << q
            base = 0
            while base < n:
                for k in range(base, base + step):
                    r0 = re[k]
                    i0 = im[k]
                    r1 = re[k + step]
                    i1 = im[k + step]
                    # Rx(2b): new0 = c*a0 - i*s*a1, new1 = c*a1 - i*s*a0
                    re[k] = c * r0 + s * i1
                    im[k] = c * i0 - s * r1
                    re[k + step] = c * r1 + s * i0
                    im[k + step] = c * i1 - s * r0
                base += step << 1
    for z in range(n):
        out[z] = re[z] + 1j * im[z]
    return out


cdef double _cvar_scalar(double[::1] losses, double[::1] w, double alpha,
                         Py_ssize_t* order, Py_ssize_t S) nogil:
    """Closed-form CVaR; stable insertion sort keeps fallback tie order."""
    cdef Py_ssize_t s, r, j
    cdef double cum, tau, excess, d
    for s in range(S):
        order[s] = s
    for s in range(1, S):
        r = order[s]
        j = s - 1
        while j >= 0 and losses[order[j]] > losses[r]:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = r
    cum = 0.0
    tau = losses[order[S - 1]]
    for s in range(S):
        cum += w[order[s]]
        if cum >= alpha - 1e-12:
            tau = losses[order[s]]
            break
    excess = 0.0
    for s in range(S):
        d = losses[s] - tau
        if d > 0.0:
            excess += d * w[s]
    return tau + excess / (1.0 - alpha)


def enumerate_best(v, c_cents, h, m, L, w, double alpha, double lam, double mu,
                   double gam, long long r_eff, long long window_cap,
                   cap_A, cap_b, int mode):
    """Exhaustive lexicographic scan; see the fallback for the contract."""
    cdef long long[::1] vv = np.ascontiguousarray(v, dtype=np.int64)
    cdef long long[::1] cc = np.ascontiguousarray(c_cents, dtype=np.int64)
    cdef long long[::1] hh = np.ascontiguousarray(h, dtype=np.int64)
    cdef long long[::1] mm = np.ascontiguousarray(m, dtype=np.int64)
    cdef Py_ssize_t n = vv.shape[0]
    cdef double[:, ::1] LL = np.ascontiguousarray(L, dtype=np.float64).reshape(-1, n)
    cdef double[::1] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef long long[:, ::1] AA = np.ascontiguousarray(cap_A, dtype=np.int64).reshape(-1, n)
    cdef long long[::1] bb = np.ascontiguousarray(cap_b, dtype=np.int64)
    cdef Py_ssize_t S = LL.shape[0]
    cdef Py_ssize_t K = AA.shape[0]

    x_arr = np.zeros(n, dtype=np.int64)
    best_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] x = x_arr
    cdef long long[::1] best_x = best_arr
    losses_arr = np.zeros(max(S, 1), dtype=np.float64)
    cdef double[::1] losses = losses_arr
    cap_arr = np.zeros(max(K, 1), dtype=np.int64)
    cdef long long[::1] cap_lhs = cap_arr
    order_arr = np.zeros(max(S, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] order = order_arr

    cdef long long U = 0, carry = 0, movement = 0, over
    cdef long long best_over = (<long long> 1) << 62
    cdef double best_J = np.inf
    cdef bint found = False
    cdef bint feasible
    cdef Py_ssize_t i, k, s, idx
    cdef double J, cv, base

    for i in range(n):
        movement += hh[i]  # |0 - h|

    while True:
        feasible = U >= r_eff
        if feasible and mode == 0 and window_cap >= 0:
            feasible = U <= window_cap
        if feasible:
            for k in range(K):
                if cap_lhs[k] > bb[k]:
                    feasible = False
                    break
        if feasible:
            if mode == 1:
                over = U - r_eff
                if over < best_over:
                    best_over = over
                    found = True
                    for i in range(n):
                        best_x[i] = x[i]
            else:
                base = carry / 100.0
                if S > 0:
                    cv = _cvar_scalar(losses, ww, alpha, &order[0], S)
                else:
                    cv = 0.0
                over = U - r_eff
                if over < 0:
                    over = 0
                J = base + lam * movement + mu * cv + gam * (over / 100.0)
                if J < best_J:
                    best_J = J
                    found = True
                    for i in range(n):
                        best_x[i] = x[i]

        # odometer: last index fastest (ascending lexicographic by x[0..])
        idx = n - 1
        while idx >= 0 and x[idx] == mm[idx]:
            idx -= 1
        if idx < 0:
            break
        x[idx] += 1
        U += vv[idx]
        carry += cc[idx]
        movement += 1 if x[idx] > hh[idx] else -1
        for s in range(S):
            losses[s] += LL[s, idx]
        for k in range(K):
            cap_lhs[k] += AA[k, idx]
        for i in range(idx + 1, n):
            if x[i]:
                U -= vv[i] * x[i]
                carry -= cc[i] * x[i]
                movement += hh[i] - (x[i] - hh[i] if x[i] > hh[i] else hh[i] - x[i])
                for s in range(S):
                    losses[s] -= LL[s, i] * x[i]
                for k in range(K):
                    cap_lhs[k] -= AA[k, i] * x[i]
                x[i] = 0

    if not found:
        return False, np.zeros(n, dtype=np.int64), np.inf, -1

    # recompute the winner's figures directly from best_x
    U = 0
    carry = 0
    movement = 0
    for s in range(S):
        losses[s] = 0.0
    for i in range(n):
        U += vv[i] * best_x[i]
        carry += cc[i] * best_x[i]
        movement += best_x[i] - hh[i] if best_x[i] > hh[i] else hh[i] - best_x[i]
        for s in range(S):
            losses[s] += LL[s, i] * best_x[i]
    if S > 0:
        cv = _cvar_scalar(losses, ww, alpha, &order[0], S)
    else:
        cv = 0.0
    over = U - r_eff
    if over < 0:
        over = 0
    J = carry / 100.0 + lam * movement + mu * cv + gam * (over / 100.0)
    return True, best_arr, J, int(over if mode == 0 else best_over)
