"""Randomized property suites shared by the command line and the test-suite.

Each suite returns a :class:`SuiteResult`; ``worst`` is the largest
violation margin seen (<= 0 means every check held).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import characteristics as ch
from .corona import check_stopping_structure, corona_decompose, verify_corona_bound
from .experiments import random_corpus, random_weighted_family
from .mesh import Cube, Mesh
from .operators import (CellFunction, SparseFamily, build_sparse, dyadic_maximal, lp_norm,
                        sparse_M, weighted_dyadic_maximal)
from .testing import interpolation_theta, norm_estimate, testing_T
from .weights import Weight, WeightPair, conjugate, dual_pair, from_cell_averages, uniform

P_VALUES = (1.5, 2.0, 3.0)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    worst: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.checks} checks, worst margin {self.worst:.3g})"

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "checks": self.checks,
                "worst": self.worst, "detail": self.detail}


def all_interval_bounds(n: int):
    a, b = np.triu_indices(n + 1, 1)
    return a.astype(np.int64), b.astype(np.int64)


def interval_averages(w: Weight, a, b) -> np.ndarray:
    return w.range_integrals(a, b) / ((b - a) * w.mesh.cell_width)


def interval_log_averages(w: Weight, a, b) -> np.ndarray:
    return w.range_log_integrals(a, b) / ((b - a) * w.mesh.cell_width)


def interval_mins(w: Weight, a, b) -> np.ndarray:
    v = w.averages
    n = v.shape[0]
    out = np.empty(a.shape[0])
    run = {}
    for i in range(n):
        run[i] = np.minimum.accumulate(v[i:])
    for t, (s, e) in enumerate(zip(a, b)):
        out[t] = run[s][e - s - 1]
    return out


def discrete_corpus(seed: int, size: int, num_cells: int = 64, p_values=P_VALUES) -> list[WeightPair]:
    rng = np.random.default_rng(seed)
    mesh = Mesh(num_cells)
    return [dual_pair(from_cell_averages(mesh, np.exp(rng.uniform(-3, 3, num_cells))), p_values[i % len(p_values)])
            for i in range(size)]


def _rel(x, y):
    return np.abs(x - y) / np.maximum(np.abs(x), np.abs(y))


def suite_identity(num_cells: int = 16, p_values=P_VALUES) -> SuiteResult:
    """Uniform weight: every constant, bound and testing value equals 1."""
    mesh = Mesh(num_cells)
    worst, checks = -np.inf, 0
    for p in p_values:
        pair = dual_pair(uniform(mesh), p)
        vals = []
        for region in list(mesh.enumerate_dyadic()) + list(mesh.enumerate_intervals()):
            vals += [ch.ap_local(pair, region), ch.a1_local(pair.w, region), ch.ainf_exp_local(pair.w, region),
                     ch.ainf_fw_local(pair.w, region), ch.ar_local(pair.w, 2 * p, region)]
        specs = [ch.FlavorSpec.single(k) for k in ("ap", "a1", "ainf_exp", "ainf_fw")]
        for scope in ch.Scope:
            vals += [r.value for r in ch.global_sups(pair, specs, scope)]
        q = 1.0 if p <= 2 else 2.0
        vals += list(ch.bound_values(pair, ch.BOUND_IDS, {"r": 2 * p, "q": q}).values())
        S = SparseFamily(mesh, [mesh.top])
        vals += [testing_T(S, pair, "forward").value, testing_T(S, pair, "dual").value]
        from .testing import testing_M
        vals.append(testing_M(pair).value)
        err = np.abs(np.array(vals) - 1.0)
        worst = max(worst, float(err.max()) - 1e-12)
        checks += err.size
    return SuiteResult("identity", worst <= 0, checks, worst)


def suite_duality(seed: int = 0, size: int = 100, num_cells: int = 64) -> SuiteResult:
    """A_p^(1/(p-1)) A_exp^(1-1/(p-1)) agrees for (w, p) and (sigma, p') per interval."""
    a, b = all_interval_bounds(num_cells)
    worst, checks = -np.inf, 0
    for pair in discrete_corpus(seed, size, num_cells):
        p, pc = pair.p, pair.p_conj
        aw, asg = interval_averages(pair.w, a, b), interval_averages(pair.sigma, a, b)
        lw, ls = interval_log_averages(pair.w, a, b), interval_log_averages(pair.sigma, a, b)
        ap_w, ap_s = aw * asg ** (p - 1), asg * aw ** (pc - 1)
        ex_w, ex_s = aw * np.exp(-lw), asg * np.exp(-ls)
        lhs = ap_w ** (1 / (p - 1)) * ex_w ** (1 - 1 / (p - 1))
        rhs = ap_s ** (1 / (pc - 1)) * ex_s ** (1 - 1 / (pc - 1))
        worst = max(worst, float(_rel(lhs, rhs).max()) - 1e-9)
        checks += lhs.size
    return SuiteResult("duality", worst <= 0, checks, worst)


def suite_jensen(seed: int = 0, size: int = 100, num_cells: int = 64) -> SuiteResult:
    """A_exp <= A_q <= A_p <= A_1 for p <= q, and A_p'(sigma) = A_p(w)^(p'-1), per interval."""
    a, b = all_interval_bounds(num_cells)
    worst, checks = -np.inf, 0
    tol = 1e-12
    for pair in discrete_corpus(seed, size, num_cells):
        p, w = pair.p, pair.w
        aw = interval_averages(w, a, b)
        chain = [aw * np.exp(-interval_log_averages(w, a, b))]
        for r in (3 * p, 1.5 * p, p):
            chain.append(aw * interval_averages(w.power(-1 / (r - 1)), a, b) ** (r - 1))
        chain.append(aw / interval_mins(w, a, b))
        for lo, hi in zip(chain, chain[1:]):
            worst = max(worst, float(((lo - hi) / hi).max()) - tol)
            checks += lo.size
        ap_w = aw * interval_averages(pair.sigma, a, b) ** (p - 1)
        ap_s = interval_averages(pair.sigma, a, b) * aw ** (pair.p_conj - 1)
        worst = max(worst, float(_rel(ap_s, ap_w ** (pair.p_conj - 1)).max()) - tol)
        checks += ap_s.size
    return SuiteResult("jensen", worst <= 0, checks, worst)


def random_nonnegative(rng: np.random.Generator, n: int) -> np.ndarray:
    f = np.exp(rng.normal(0, 2, n)) * (rng.random(n) < rng.uniform(0.2, 1.0))
    if not f.any():
        f[rng.integers(n)] = 1.0
    return f


def suite_sparsity(seed: int = 0, size: int = 100, num_cells: int = 256, tau: float = 4.0) -> SuiteResult:
    """M^S f <= M^D f <= tau M^S f exactly; packing certificate in whole cells."""
    rng = np.random.default_rng(seed)
    mesh = Mesh(num_cells)
    bad, checks = 0, 0
    worst = -np.inf
    for _ in range(size):
        f = CellFunction(mesh, random_nonnegative(rng, num_cells))
        S = build_sparse(f, tau)
        ms, md = sparse_M(S, f).values, dyadic_maximal(f).values
        bad += int(np.sum(ms > md)) + int(np.sum(md > tau * ms))
        worst = max(worst, float(np.max(ms - md)), float(np.max((md - tau * ms) / md)))
        for q, size_q, covered in S.packing_certificate():
            checks += 1
            if covered * tau > size_q or 2 * (size_q - covered) < size_q:
                bad += 1
        checks += 2 * num_cells
    return SuiteResult("sparsity", bad == 0, checks, worst, {"violations": bad})


def suite_maxnorm(seed: int = 0, size: int = 100, num_cells: int = 64, p_values=P_VALUES) -> SuiteResult:
    """||M^D_w f||_{L^p(w)} <= p' ||f||_{L^p(w)}."""
    rng = np.random.default_rng(seed)
    mesh = Mesh(num_cells)
    worst, checks = -np.inf, 0
    for p in p_values:
        for _ in range(size):
            w = from_cell_averages(mesh, np.exp(rng.uniform(-3, 3, num_cells)))
            f = CellFunction(mesh, random_nonnegative(rng, num_cells))
            lhs = lp_norm(weighted_dyadic_maximal(f, w).values, w, p)
            rhs = conjugate(p) * lp_norm(f.values, w, p)
            worst = max(worst, lhs / rhs - 1)
            checks += 1
    return SuiteResult("maxnorm", worst <= 0, checks, worst)


def corona_ratios(seed: int, size: int, num_cells: int, p: float = 2.0):
    """Stopping-structure violations and bound ratios for random weighted families."""
    rng = np.random.default_rng([seed, num_cells])
    ratios, problems = [], []
    for _ in range(size):
        fam = random_weighted_family(rng, num_cells, p)
        res = corona_decompose(fam)
        problems += check_stopping_structure(fam, res)
        ratios.append(verify_corona_bound(fam, res, p).ratio)
    return np.array(ratios), problems


def suite_corona(seed: int = 0, size: int = 50, sizes=(16, 64, 256, 1024), k_fit: Optional[float] = None,
                 p: float = 2.0) -> SuiteResult:
    """Exact stopping invariants; bound ratio <= K_fit with K_fit taken from the smallest size."""
    detail, problems, worst, checks = {}, [], -np.inf, 0
    for n in sizes:
        ratios, probs = corona_ratios(seed, size, n, p)
        problems += probs
        if k_fit is None:
            k_fit = float(ratios.max())
        detail[str(n)] = {"max_ratio": float(ratios.max()), "median_ratio": float(np.median(ratios))}
        worst = max(worst, float(ratios.max()) / k_fit - 1)
        checks += len(ratios)
    detail["k_fit"] = k_fit
    detail["structure_violations"] = len(problems)
    return SuiteResult("corona", worst <= 0 and not problems, checks, worst, detail)


def random_testing_instance(rng: np.random.Generator, num_cells: int, p: float):
    mesh = Mesh(num_cells)
    w = from_cell_averages(mesh, np.exp(rng.uniform(-3, 3, num_cells)))
    pair = dual_pair(w, p)
    S = build_sparse(CellFunction(mesh, random_nonnegative(rng, num_cells)), tau=rng.choice([2.5, 4.0]))
    return S, pair


def testing_bracket(seed: int, size: int, sizes=(16, 32, 64), p_values=P_VALUES, k: int = 16):
    """Rows (num_cells, p, forward, dual, norm lower bound) for random sparse instances."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(size):
        n = sizes[i % len(sizes)]
        p = p_values[(i // len(sizes)) % len(p_values)]
        S, pair = random_testing_instance(rng, n, p)
        fwd = testing_T(S, pair, "forward").value
        dual = testing_T(S, pair, "dual").value
        est = norm_estimate(S, pair, "restarts", k=k, seed=seed + i)
        rows.append((n, p, fwd, dual, est.lower_bound))
    return np.array(rows)


def suite_testing(seed: int = 0, size: int = 50, k_fit: Optional[float] = None) -> SuiteResult:
    """max(fwd, dual) <= norm lower bound + 1e-9, and lower bound <= K_fit (fwd + dual)
    with a single K_fit over all sizes and exponents (fitted on the corpus when
    not given)."""
    rows = testing_bracket(seed, size)
    n, _, fwd, dual, lb = rows.T
    soundness = float(np.max(np.maximum(fwd, dual) - lb - 1e-9))
    ratio = lb / (fwd + dual)
    if k_fit is None:
        k_fit = float(ratio.max())
    worst = max(soundness, float(ratio.max()) / k_fit - 1)
    per_size = {str(int(m)): float(ratio[n == m].max()) for m in np.unique(n)}
    return SuiteResult("testing", worst <= 0, 2 * len(rows), worst,
                       {"k_fit": k_fit, "soundness_margin": soundness, "min_ratio": float(ratio.min()),
                        "max_ratio_by_size": per_size})


THEOREM_BOUNDS = {"exp1": "testing_dual", "exp0": "testing_dual", "w0": "testing_dual", "maxW": "testing_M",
                  "exp0-w": "testing_dual", "w0-w": "testing_dual"}
BOUND_IDS_CHECKED = ("exp1", "exp0", "w0", "maxW")


def theorem_measurements(pair: WeightPair, tau: float = 4.0) -> dict:
    """Dual sparse testing constant, maximal testing constant, and the bounds meant to control them."""
    from .experiments import testing_families
    from .testing import testing_M
    _, S_dual = testing_families(pair, tau)
    p, pc = pair.p, pair.p_conj
    # the sparse testing results control testing_dual by the w-side terms alone
    specs = [ch.FlavorSpec.single("ap"), ch.FlavorSpec.mixed(("ap", 1 / p), ("ainf_exp", 1 / pc)),
             ch.FlavorSpec.mixed(("ap", 1 / p), ("ainf_fw", 1 / pc))]
    out, (ap, mixed_exp, mixed_fw) = ch.evaluate(pair, BOUND_IDS_CHECKED, specs)
    out["exp0-w"] = ch.phi(ap.value) ** (1 / p) * mixed_exp.value
    out["w0-w"] = ch.phi(ap.value) * mixed_fw.value
    out["testing_dual"] = testing_T(S_dual, pair, "dual").value
    out["testing_M"] = testing_M(pair).value
    return out


def theorem_corpus(seed: int = 0, size: int = 30, num_cells: int = 64, wdelta_cells: int = 1 << 10,
                   calib_exps=(2, 3, 4), check_exps=tuple(range(5, 11)), p: float = 3.0, alpha: float = 0.4):
    """(calibration, verification) lists of (label, measurements).

    Calibration: the random corpus at p in {1.5, 2, 3} and the two-singularity
    weight for the larger deltas. Verification: that weight for smaller deltas.
    """
    from .weights import example_wdelta
    calib = []
    for i, q in enumerate(P_VALUES):
        for pair in random_corpus(seed + i, size // len(P_VALUES), "mixed", num_cells, q):
            calib.append((f"random p={q}", theorem_measurements(pair)))
    check = []
    for k in calib_exps + check_exps:
        pair = example_wdelta(p, 2.0 ** -k, alpha, wdelta_cells)
        (calib if k in calib_exps else check).append((f"wdelta 2^-{k}", theorem_measurements(pair)))
    return calib, check


def suite_theorems(seed: int = 0, size: int = 30, **kw) -> SuiteResult:
    calib, check = theorem_corpus(seed, size, **kw)
    detail, worst = {}, -np.inf
    for bound, lhs in THEOREM_BOUNDS.items():
        k_fit = max(m[lhs] / m[bound] for _, m in calib)
        top = max(m[lhs] / m[bound] for _, m in check)
        detail[bound] = {"k_fit": k_fit, "max_check_ratio": top}
        worst = max(worst, top / k_fit - 1)
    return SuiteResult("theorems", worst <= 0, len(THEOREM_BOUNDS) * len(check), worst, detail)


def suite_interp(seed: int = 0, size: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(size):
        p = rng.uniform(1.05, 10)
        q = rng.uniform(1, p) if rng.random() < 0.9 else 1.0
        ex = interpolation_theta(p, q)
        worst = max(worst, ex.residual - 1e-12, ex.residual_conj - 1e-12)
    return SuiteResult("interp", worst <= 0, 2 * size, worst)


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "identity": lambda seed, size: suite_identity(),
    "duality": lambda seed, size: suite_duality(seed, size),
    "jensen": lambda seed, size: suite_jensen(seed, size),
    "sparsity": lambda seed, size: suite_sparsity(seed, size),
    "maxnorm": lambda seed, size: suite_maxnorm(seed, size),
    "corona": lambda seed, size: suite_corona(seed, max(2, size // 2)),
    "testing": lambda seed, size: suite_testing(seed, max(2, size // 2)),
    "interp": lambda seed, size: suite_interp(seed, size),
    "theorems": lambda seed, size: suite_theorems(seed, max(3, size // 3)),
}


def run_suites(names: Sequence[str], seed: int = 0, size: int = 100) -> list[SuiteResult]:
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}; known: {', '.join(SUITES)}")
    return [SUITES[n](seed, size) for n in names]
