"""Two-weight testing constants, operator-norm lower bounds, interpolation exponents.

Throughout, the operator under study is ``f -> T^S(f sigma)`` from
L^p(sigma) to L^p(w); the dual direction is ``g -> T^S(g w)`` from
L^p'(w) to L^p'(sigma). On cell-constant data

    T^S(f sigma)_i = sum_{Q in S, Q contains i} (1/|Q|) sum_{j in Q} f_j sigma(cell_j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .characteristics import Scope, SupremumResult, TIE_TOL
from .mesh import Interval, Mesh
from .operators import CellFunction, SparseFamily
from .weights import Weight, WeightPair

MAX_ITER = 10_000
RATIO_TOL = 1e-10
DENSE_LIMIT = 512


def _dyadic_pick(mesh: Mesh, values: np.ndarray) -> SupremumResult:
    """Supremum over heap-ordered per-cube values with the start/length tie-break."""
    starts, ends = mesh.dyadic_bounds()
    order = np.lexsort((ends - starts, starts))
    v = np.ascontiguousarray(values[order])
    with np.errstate(divide="ignore"):
        i = _kernels.first_max(np.log(v), TIE_TOL)
    j = order[i]
    return SupremumResult(float(v[i]), Interval(int(starts[j]), int(ends[j])), Scope.DYADIC)


def _level_sums(x: np.ndarray, k: int) -> np.ndarray:
    return x.reshape(-1, 1 << k).sum(axis=1)


def _testing_values(S: SparseFamily, w: Weight, sigma: Weight, p: float) -> np.ndarray:
    """sigma(R)^(-1/p) ||T^{S(R)} sigma||_{L^p(w) on R} for every dyadic R (heap order).

    For R at level k, T^{S(R)} sigma on R is the running sum over levels
    0..k of the family averages containing each cell.
    """
    mesh = S.mesh
    L = mesh.levels
    h = mesh.cell_width
    smass, wmass = sigma.cell_mass, w.cell_mass
    cum = np.zeros(mesh.num_cells)
    per_level = {}
    for k in range(L + 1):
        lo = (1 << (L - k)) - 1
        member = S.member[lo:lo + (1 << (L - k))]
        if member.any():
            avg = _level_sums(smass, k) / ((1 << k) * h)
            cum = cum + np.repeat(np.where(member, avg, 0.0), 1 << k)
        per_level[k] = _level_sums(cum ** p * wmass, k) / _level_sums(smass, k)
    return np.concatenate([per_level[k] for k in range(L, -1, -1)]) ** (1.0 / p)


def testing_T(S: SparseFamily, pair: WeightPair, direction: str = "forward") -> SupremumResult:
    """[w,sigma]_{T^S_p} (forward) or [sigma,w]_{T^S_p'} (dual), sup over dyadic R."""
    if direction == "forward":
        vals = _testing_values(S, pair.w, pair.sigma, pair.p)
    elif direction == "dual":
        vals = _testing_values(S, pair.sigma, pair.w, pair.p_conj)
    else:
        raise ValueError(f"direction must be 'forward' or 'dual', got {direction!r}")
    return _dyadic_pick(S.mesh, vals)


def testing_M(pair: WeightPair, p: Optional[float] = None) -> SupremumResult:
    """sup_R (int_R M(1_R sigma)^p w / sigma(R))^(1/p), M the mesh maximal operator."""
    p = pair.p if p is None else float(p)
    mesh = pair.mesh
    num = _kernels.dyadic_maximal_testing(np.ascontiguousarray(pair.sigma.averages),
                                          np.ascontiguousarray(pair.w.cell_mass), p, mesh.levels)
    starts, ends = mesh.dyadic_bounds()
    return _dyadic_pick(mesh, (num / pair.sigma.range_integrals(starts, ends)) ** (1.0 / p))


# norm estimation ---------------------------------------------------------------

class SparseKernel:
    """The symmetric kernel K_ij = sum_{Q in S, i, j in Q} 1/|Q|."""

    def __init__(self, S: SparseFamily):
        self.S = S
        mesh = S.mesh
        L = mesh.levels
        self.levels = []
        for k in range(L + 1):
            lo = (1 << (L - k)) - 1
            member = S.member[lo:lo + (1 << (L - k))]
            if member.any():
                self.levels.append((k, member.astype(float) / ((1 << k) * mesh.cell_width)))
        self.dense = None
        if mesh.num_cells <= DENSE_LIMIT:
            n = mesh.num_cells
            K = np.zeros((n, n))
            for q in S.cubes:
                K[q.start:q.end, q.start:q.end] += 1.0 / (q.length * mesh.cell_width)
            self.dense = K

    def apply(self, u: np.ndarray) -> np.ndarray:
        """(K u)_i for a vector of cell masses u."""
        if self.dense is not None:
            return self.dense @ u
        out = np.zeros_like(u)
        for k, scale in self.levels:
            out += np.repeat(_level_sums(u, k) * scale, 1 << k)
        return out


@dataclass(frozen=True)
class NormEstimate:
    lower_bound: float
    witness: CellFunction
    iterations: int
    converged: bool


def rayleigh(S: SparseFamily, pair: WeightPair, f, kernel: Optional[SparseKernel] = None) -> float:
    """||T^S(f sigma)||_{L^p(w)} / ||f||_{L^p(sigma)} for f >= 0."""
    kern = SparseKernel(S) if kernel is None else kernel
    v = np.abs(np.asarray(getattr(f, "values", f), dtype=float))
    p = pair.p
    den = float(np.sum(v ** p * pair.sigma.cell_mass)) ** (1 / p)
    if den == 0:
        raise ValueError("witness has zero norm")
    g = kern.apply(v * pair.sigma.cell_mass)
    return float(np.sum(g ** p * pair.w.cell_mass)) ** (1 / p) / den


def _normalize(f, smass, p):
    n = float(np.sum(f ** p * smass)) ** (1 / p)
    return f / n if n > 0 else f


def _ascend(kern: SparseKernel, pair: WeightPair, f0: np.ndarray):
    """Fixed-point ascent f <- (K(w g^(p-1)))^(1/(p-1)), g = K(f sigma)."""
    p = pair.p
    smass, wmass = pair.sigma.cell_mass, pair.w.cell_mass
    f = _normalize(f0, smass, p)
    prev = -1.0
    best, best_f = -1.0, f
    for it in range(1, MAX_ITER + 1):
        g = kern.apply(f * smass)
        ratio = float(np.sum(g ** p * wmass)) ** (1 / p)
        if ratio > best:
            best, best_f = ratio, f
        if prev > 0 and abs(ratio - prev) <= RATIO_TOL * ratio:
            return best_f, it, True
        prev = ratio
        nxt = kern.apply(wmass * g ** (p - 1)) ** (1 / (p - 1))
        if not np.any(nxt > 0):
            return best_f, it, True
        f = _normalize(nxt, smass, p)
    return best_f, MAX_ITER, False


def testing_witnesses(S: SparseFamily, pair: WeightPair, kernel: Optional[SparseKernel] = None) -> list[np.ndarray]:
    """Indicators 1_R and the dual-derived functions (T^S(1_R w))^(p'-1), one per dyadic R.

    The first family reaches the forward testing value at R and the second
    the dual testing value, so the norm lower bound dominates both.
    """
    kern = SparseKernel(S) if kernel is None else kernel
    mesh = S.mesh
    starts, ends = mesh.dyadic_bounds()
    out = []
    for a, b in zip(starts, ends):
        ind = np.zeros(mesh.num_cells)
        ind[a:b] = 1.0
        out.append(ind)
        h = kern.apply(ind * pair.w.cell_mass)
        if np.any(h > 0):
            out.append(h ** (pair.p_conj - 1))
    return out


def norm_estimate(S: SparseFamily, pair: WeightPair, method: str = "restarts", k: int = 16,
                  seed: int = 0, include_testing: bool = True,
                  starts: Optional[Sequence[np.ndarray]] = None) -> NormEstimate:
    """Certified lower bound for ||T^S(. sigma)||_{L^p(sigma) -> L^p(w)}.

    ``method="power"`` ascends from the constant function; ``"restarts"``
    also ascends from ``k`` seeded random positive starts and keeps the best.
    Testing witnesses are scored directly and the best one is ascended too.
    """
    mesh = S.mesh
    n = mesh.num_cells
    if len(S) == 0:
        return NormEstimate(0.0, CellFunction(mesh, np.ones(n)), 0, True)
    kern = SparseKernel(S)
    seeds = [np.ones(n)]
    if method == "restarts":
        rng = np.random.default_rng(seed)
        seeds += [np.exp(rng.normal(0.0, 1.5, n)) for _ in range(k)]
    elif method != "power":
        raise ValueError(f"method must be 'power' or 'restarts', got {method!r}")
    if starts is not None:
        seeds += [np.asarray(s, dtype=float) for s in starts]
    cands = []
    if include_testing:
        wit = testing_witnesses(S, pair, kern)
        scores = [rayleigh(S, pair, f, kern) for f in wit]
        top = int(np.argmax(scores))
        cands.append((scores[top], wit[top], 0, True))
        seeds.append(wit[top])
    for s0 in seeds:
        f, it, conv = _ascend(kern, pair, s0)
        cands.append((rayleigh(S, pair, f, kern), f, it, conv))
    best = max(range(len(cands)), key=lambda i: (cands[i][0], -i))
    val, f, it, conv = cands[best]
    return NormEstimate(val, CellFunction(mesh, f), it, conv)


def maximal_rayleigh(pair: WeightPair, f) -> float:
    """||M(f sigma)||_{L^p(w)} / ||f||_{L^p(sigma)}, M the mesh maximal operator."""
    v = np.abs(np.asarray(getattr(f, "values", f), dtype=float))
    p = pair.p
    mf = _kernels.maximal(np.ascontiguousarray(v * pair.sigma.averages))
    return (float(np.sum(mf ** p * pair.w.cell_mass)) / float(np.sum(v ** p * pair.sigma.cell_mass))) ** (1 / p)


def weak_norm(g, w: Weight, p: float) -> float:
    """sup_t t * w{|g| > t}^(1/p); attained in the limit t -> a level value from below."""
    v = np.abs(np.asarray(getattr(g, "values", g), dtype=float))
    order = np.argsort(-v, kind="stable")
    vs = v[order]
    mass = np.cumsum(w.cell_mass[order])
    # w{|g| >= vs[i]} is the cumulative mass up to the last cell with that value
    last = np.r_[vs[1:] != vs[:-1], True]
    vals = vs[last] * mass[last] ** (1.0 / p)
    return float(vals.max()) if vals.size else 0.0


# interpolation -----------------------------------------------------------------

@dataclass(frozen=True)
class InterpolationExponents:
    p: float
    q: float
    epsilon: float
    theta: float
    residual: float
    residual_conj: float


def _inv_conj(x: float) -> float:
    """1/x' = 1 - 1/x, with 1/1' = 0."""
    return 1.0 - 1.0 / x


def interpolation_theta(p: float, q: float, tol: float = 1e-12) -> InterpolationExponents:
    """theta with 1/p = theta/(p-eps) + (1-theta)/(p+eps), eps = p - q."""
    if not 1 <= q < p:
        raise ValueError(f"need 1 <= q < p, got p={p}, q={q}")
    eps = p - q
    lo, hi = p - eps, p + eps
    theta = (1 / p - 1 / hi) / (1 / lo - 1 / hi)
    res = abs(theta / lo + (1 - theta) / hi - 1 / p)
    res_c = abs(theta * _inv_conj(lo) + (1 - theta) * _inv_conj(hi) - _inv_conj(p))
    if res > tol or res_c > tol:
        raise ArithmeticError(f"interpolation identities off by {res:.3g}, {res_c:.3g}")
    return InterpolationExponents(p, q, eps, theta, res, res_c)
