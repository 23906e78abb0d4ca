"""Slow, obviously-correct reference implementations used by the tests."""

import math

import numpy as np

from mixedap.testing import SparseKernel


def intervals(n):
    return [(a, b) for a in range(n) for b in range(a + 1, n + 1)]


def dyadic_intervals(n):
    out, size = [], 1
    while size <= n:
        out += [(a, a + size) for a in range(0, n, size)]
        size *= 2
    return out


def avg(vals, a, b):
    return float(np.mean(vals[a:b]))


def ap_local(w, p, a, b):
    sigma = w ** (1 - p / (p - 1))
    return avg(w, a, b) * avg(sigma, a, b) ** (p - 1)


def ainf_exp_local(w, a, b):
    return avg(w, a, b) * math.exp(-float(np.mean(np.log(w[a:b]))))


def maximal(vals):
    n = len(vals)
    out = np.zeros(n)
    for a, b in intervals(n):
        out[a:b] = np.maximum(out[a:b], avg(np.abs(vals), a, b))
    return out


def dyadic_maximal(vals):
    n = len(vals)
    out = np.zeros(n)
    for a, b in dyadic_intervals(n):
        out[a:b] = np.maximum(out[a:b], avg(np.abs(vals), a, b))
    return out


def fujii_wilson_local(w, a, b):
    restricted = np.zeros_like(w)
    restricted[a:b] = w[a:b]
    return float(np.sum(maximal(restricted)[a:b]) / np.sum(w[a:b]))


def sparse_T(cubes, vals):
    out = np.zeros(len(vals))
    for a, b in cubes:
        out[a:b] += avg(vals, a, b)
    return out


def random_search_norm(S, pair, rng, n_samples=100_000, batch=2000):
    """Random-search maximum of ||T^S(f sigma)||_{L^p(w)} / ||f||_{L^p(sigma)}.

    Half the samples are global: log-normal values at several spreads, held
    constant on dyadic blocks of a random size. The other half perturb the
    best sample so far with a shrinking multiplicative spread.
    """
    K = SparseKernel(S).dense
    p = pair.p
    sm, wm = pair.sigma.cell_mass, pair.w.cell_mass
    n = len(sm)

    def score(F):
        G = (F * sm) @ K.T
        return (np.sum(G ** p * wm, 1) / np.sum(F ** p * sm, 1)) ** (1 / p)

    best, centre = 0.0, None
    half = n_samples // 2
    spreads = np.geomspace(0.5, 16, 10)
    for spread in spreads:
        m = half // len(spreads)
        lev = rng.integers(0, n.bit_length(), m)
        F = np.exp(rng.normal(0, spread, (m, n)))
        F = np.take_along_axis(F, (np.arange(n)[None, :] >> lev[:, None]) << lev[:, None], 1)
        r = score(F)
        if r.max() > best:
            best, centre = float(r.max()), F[r.argmax()]
    rounds = half // batch
    for t in range(rounds):
        spread = 2.0 * (0.005) ** (t / max(rounds - 1, 1))
        F = centre * np.exp(rng.normal(0, spread, (batch, n)))
        r = score(F)
        if r.max() > best:
            best, centre = float(r.max()), F[r.argmax()]
    return best
