"""Compiled inner loops. Everything here works on plain float arrays.

Prefix sums are carried as double-double pairs ``(hi, lo)`` so that a range
sum ``(hi[b] - hi[a]) + (lo[b] - lo[a])`` keeps full relative precision even
when a tiny cell sits behind a large running total (the cells next to a
power singularity).
"""

import numba
import numpy as np


@numba.njit(cache=True)
def dd_prefix(x):
    n = x.shape[0]
    hi = np.zeros(n + 1)
    lo = np.zeros(n + 1)
    s = 0.0
    c = 0.0
    for i in range(n):
        v = x[i]
        t = s + v
        bp = t - s
        e = (s - (t - bp)) + (v - bp)
        c += e
        s = t + c
        c = c - (s - t)
        hi[i + 1] = s
        lo[i + 1] = c
    return hi, lo


@numba.njit(cache=True, inline="always")
def _range(hi, lo, a, b):
    return (hi[b] - hi[a]) + (lo[b] - lo[a])


@numba.njit(cache=True)
def range_sums(hi, lo, starts, ends):
    out = np.empty(starts.shape[0])
    for i in range(starts.shape[0]):
        out[i] = _range(hi, lo, starts[i], ends[i])
    return out


@numba.njit(cache=True)
def scan_intervals(mass_hi, mass_lo, log_hi, log_lo, avgs, c_avg, c_log, c_min, width, tol):
    """Supremum over all intervals of several log-linear local quantities.

    For spec ``j`` and interval ``[a, b)`` the log-value is

        sum_k c_avg[j,k] * log(avg of weight k)
            + c_log[j,k] * (avg of log weight k)
            + c_min[j,k] * log(min cell avg of weight k)

    Intervals are visited by start then length; the incumbent is replaced
    only when beaten by more than ``tol``, which fixes the tie-break.
    """
    K = mass_hi.shape[0]
    n = mass_hi.shape[1] - 1
    J = c_avg.shape[0]
    # feature f: 0..K-1 log avg, K..2K-1 avg log, 2K..3K-1 log min
    coef = np.zeros((J, 3 * K))
    for j in range(J):
        for k in range(K):
            coef[j, k] = c_avg[j, k]
            coef[j, K + k] = c_log[j, k]
            coef[j, 2 * K + k] = c_min[j, k]
    used = np.zeros(3 * K, dtype=np.bool_)
    nnz = np.zeros(J, dtype=np.int64)
    fidx = np.zeros((J, 3 * K), dtype=np.int64)
    fval = np.zeros((J, 3 * K))
    for j in range(J):
        for f in range(3 * K):
            if coef[j, f] != 0.0:
                used[f] = True
                fidx[j, nnz[j]] = f
                fval[j, nnz[j]] = coef[j, f]
                nnz[j] += 1
    logmeas = np.zeros(n + 1)
    invmeas = np.zeros(n + 1)
    for m in range(1, n + 1):
        logmeas[m] = np.log(m * width)
        invmeas[m] = 1.0 / (m * width)
    best = np.full(J, -np.inf)
    bs = np.zeros(J, dtype=np.int64)
    be = np.zeros(J, dtype=np.int64)
    feat = np.zeros(3 * K)
    runmin = np.zeros(K)
    for a in range(n):
        for k in range(K):
            runmin[k] = np.inf
        for b in range(a + 1, n + 1):
            m = b - a
            for k in range(K):
                if used[k]:
                    feat[k] = np.log(_range(mass_hi[k], mass_lo[k], a, b)) - logmeas[m]
                if used[K + k]:
                    feat[K + k] = _range(log_hi[k], log_lo[k], a, b) * invmeas[m]
                if used[2 * K + k]:
                    if avgs[k, b - 1] < runmin[k]:
                        runmin[k] = avgs[k, b - 1]
                    feat[2 * K + k] = np.log(runmin[k])
            for j in range(J):
                v = 0.0
                for t in range(nnz[j]):
                    v += fval[j, t] * feat[fidx[j, t]]
                if v > best[j] + tol:
                    best[j] = v
                    bs[j] = a
                    be[j] = b
    return best, bs, be


@numba.njit(cache=True)
def first_max(values, tol):
    """Index of the first entry beating all earlier ones by more than tol."""
    bi = 0
    bv = -np.inf
    for i in range(values.shape[0]):
        if values[i] > bv + tol:
            bv = values[i]
            bi = i
    return bi


@numba.njit(cache=True)
def maximal(v):
    """out[i] = max over cell ranges [a, b) containing i of the mean of v."""
    n = v.shape[0]
    hi, lo = dd_prefix(v)
    out = v.copy()
    for a in range(n):
        run = -np.inf
        for b in range(n, a, -1):
            x = _range(hi, lo, a, b) / (b - a)
            if x > run:
                run = x
            if run > out[b - 1]:
                out[b - 1] = run
    return out


@numba.njit(cache=True)
def dyadic_maximal_integrals(v, L):
    """Sum over each dyadic cube Q of maximal(v restricted to Q), heap order."""
    n = v.shape[0]
    out = np.zeros(2 * n - 1)
    idx = 0
    for k in range(L, -1, -1):
        size = 1 << k
        for m in range(n >> k):
            s = m * size
            out[idx] = maximal(v[s:s + size]).sum()
            idx += 1
    return out


@numba.njit(cache=True)
def dyadic_maximal_testing(sig, wmass, p, L):
    """For each dyadic R: sum over R of maximal(sig restricted to R)**p * wmass."""
    n = sig.shape[0]
    out = np.zeros(2 * n - 1)
    idx = 0
    for k in range(L, -1, -1):
        size = 1 << k
        for m in range(n >> k):
            s = m * size
            mx = maximal(sig[s:s + size])
            acc = 0.0
            for i in range(size):
                acc += mx[i] ** p * wmass[s + i]
            out[idx] = acc
            idx += 1
    return out
