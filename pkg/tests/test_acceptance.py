"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line (shown in the terminal summary)
before asserting. Tolerances are pinned below.
"""

import math
import subprocess
import sys

import numpy as np
import pytest

import oracles
from mixedap.experiments import SlopeError, SweepConfig, run_observation_sweep, run_sweep
from mixedap.mesh import Cube, Mesh
from mixedap.operators import SparseFamily
from mixedap.testing import norm_estimate, testing_T
from mixedap.verify import (random_testing_instance, suite_corona, suite_duality, suite_identity, suite_interp,
                            suite_jensen, suite_maxnorm, suite_sparsity, suite_testing, suite_theorems)
from mixedap.weights import dual_pair, uniform

SEED = 0
IDENTITY_TOL = 1e-12
DUALITY_TOL = 1e-9
CONJUGATION_TOL = 1e-12
SOUNDNESS_TOL = 1e-9
HAND_EXAMPLE_TOL = 1e-9
ORACLE_AGREEMENT = 0.02
INTERP_TOL = 1e-12
AP_SLOPE, AP_REL = 2.0, 0.15
EXP1_SLOPE, EXP1_REL = 1.2, 0.15
HL_MIXED_MIN = 1.28
EXP0_MAX = 1.1
OBSERVATION_REL = 0.10
OBSERVATION_MIN_R2 = 0.98


def test_criterion_01_identity(report_criterion):
    res = suite_identity()
    report_criterion(1, res.passed, f"uniform weight: {res.checks} values, max |v-1| - {IDENTITY_TOL:g} = {res.worst:.3g}")
    assert res.passed


def test_criterion_02_duality(report_criterion):
    res = suite_duality(SEED, size=100, num_cells=64)
    report_criterion(2, res.passed, f"{res.checks} per-interval checks, worst margin {res.worst:.3g} (rel tol {DUALITY_TOL:g})")
    assert res.passed


def test_criterion_03_jensen_conjugation(report_criterion):
    res = suite_jensen(SEED, size=100, num_cells=64)
    report_criterion(3, res.passed, f"{res.checks} per-interval checks, worst margin {res.worst:.3g} "
                                    f"(conjugation rel tol {CONJUGATION_TOL:g})")
    assert res.passed


def test_criterion_04_sparse_sandwich(report_criterion):
    res = suite_sparsity(SEED, size=100, num_cells=256, tau=4.0)
    report_criterion(4, res.passed, f"100 functions, N=256, tau=4: {res.checks} exact checks, worst margin {res.worst:g}")
    assert res.passed


def test_criterion_05_weighted_maximal_norm(report_criterion):
    res = suite_maxnorm(SEED, size=100)
    report_criterion(5, res.passed, f"{res.checks} (f, w) pairs over p in 1.5, 2, 3; worst ||M_w f|| / (p' ||f||) - 1 = {res.worst:.3g}")
    assert res.passed


def test_criterion_06_corona(report_criterion):
    res = suite_corona(SEED, size=50, sizes=(16, 64, 256, 1024))
    sizes = ", ".join(f"N={n}: {d['max_ratio']:.3f}" for n, d in res.detail.items() if n.isdigit())
    report_criterion(6, res.passed, f"K_fit={res.detail['k_fit']:.4f} from N=16; max ratio {sizes}; "
                                    f"structure violations {res.detail['structure_violations']}")
    assert res.passed


def test_criterion_07_testing_bracket(report_criterion):
    res = suite_testing(SEED, size=50)
    # hand example: w = sigma = 1, p = 2, nested family of three cubes
    mesh = Mesh(4)
    S = SparseFamily(mesh, [Cube(2, 0), Cube(1, 0), Cube(0, 0)])
    hand = testing_T(S, dual_pair(uniform(mesh), 2), "forward").value
    hand_ok = abs(hand - math.sqrt(15) / 2) <= HAND_EXAMPLE_TOL
    # norm estimate against a random-search oracle with 10^5 positive samples, N <= 16
    rng = np.random.default_rng(SEED)
    gaps, oracle_ok = [], True
    for i in range(9):
        n, p = (4, 8, 16)[i % 3], (1.5, 2.0, 3.0)[i // 3]
        Si, pair = random_testing_instance(rng, n, p)
        est = norm_estimate(Si, pair, "restarts", k=16, seed=i).lower_bound
        found = oracles.random_search_norm(Si, pair, np.random.default_rng(1000 + i))
        gaps.append(abs(est - found) / est)
        oracle_ok &= found <= est * (1 + SOUNDNESS_TOL)
    oracle_ok &= max(gaps) <= ORACLE_AGREEMENT
    passed = res.passed and hand_ok and oracle_ok
    report_criterion(7, passed, f"K_fit={res.detail['k_fit']:.4f}, soundness margin {res.detail['soundness_margin']:.3g}; "
                                f"hand example {hand:.9f}; worst oracle gap {max(gaps):.2%}")
    assert res.passed and hand_ok and oracle_ok


def test_criterion_08_theorem_bounds(report_criterion):
    res = suite_theorems(SEED, size=30)
    parts = ", ".join(f"{b}: K_fit={d['k_fit']:.3f} max={d['max_check_ratio']:.3f}" for b, d in res.detail.items())
    report_criterion(8, res.passed, parts)
    assert res.passed


@pytest.fixture(scope="module")
def wdelta_sweep():
    cfg = SweepConfig(p=3.0, alpha=0.4, delta_exps=tuple(range(4, 13)), num_cells=1 << 14, refine=False, seed=SEED)
    return run_sweep(cfg)


def test_criterion_09_wdelta_slopes(report_criterion, wdelta_sweep):
    rep = wdelta_sweep
    checks = {
        "ap": lambda: rep.assert_slope("ap", AP_SLOPE, AP_REL),
        "exp1": lambda: rep.assert_slope("exp1", EXP1_SLOPE, EXP1_REL),
        "hl-mixed": lambda: rep.assert_slope("hl-mixed", lower=HL_MIXED_MIN),
        "exp0": lambda: rep.assert_slope("exp0", upper=EXP0_MAX),
    }
    failures = []
    for name, check in checks.items():
        try:
            check()
        except SlopeError as exc:
            failures.append(str(exc))
    s = {k: rep.slope(k) for k in ("exp0", "exp1", "hl-mixed")}
    if not s["exp0"] < s["exp1"] < s["hl-mixed"]:
        failures.append("ordering exp0 < exp1 < hl-mixed violated")
    slopes = ", ".join(f"{k}={rep.slope(k):.3f}" for k in ("ap", "exp1", "hl-mixed", "exp0"))
    report_criterion(9, not failures, slopes + ("; " + "; ".join(failures) if failures else ""))
    assert not failures, failures


def test_criterion_10_observation_slopes(report_criterion):
    p = 2.0
    parts, failures = [], []
    for alpha in (0.25, 0.5, 1.0):
        rep = run_observation_sweep(p, alpha)
        expected = alpha * (p - 1)
        parts.append(f"alpha={alpha:g}: {rep.slope('mixed'):.4f} (r2 {rep.slopes['mixed']['r2']:.4f})")
        try:
            rep.assert_slope("mixed", expected, OBSERVATION_REL, min_r2=OBSERVATION_MIN_R2)
        except SlopeError as exc:
            failures.append(str(exc))
    report_criterion(10, not failures, "; ".join(parts + failures))
    assert not failures, failures


def test_criterion_11_interpolation(report_criterion):
    res = suite_interp(SEED, size=100)
    report_criterion(11, res.passed, f"100 (p, q) pairs, worst residual - {INTERP_TOL:g} = {res.worst:.3g}")
    assert res.passed


def _cli(*args):
    proc = subprocess.run([sys.executable, "-m", "mixedap", *args], capture_output=True, check=False)
    return proc.returncode, proc.stdout


def test_criterion_12_determinism(report_criterion, tmp_path):
    runs = {}
    for tag in ("a", "b"):
        code_v, out_v = _cli("verify", "--seed", "7", "--size", "6", "--format", "json")
        out_path = tmp_path / f"sweep_{tag}.csv"
        code_s, _ = _cli("sweep", "--seed", "7", "--cells", "256", "--delta-exps", "4..6", "--no-refine",
                         "--out", str(out_path))
        runs[tag] = (code_v, out_v, code_s, out_path.read_bytes(), out_path.with_suffix(".json").read_bytes())
    same = runs["a"] == runs["b"]
    ok = same and runs["a"][0] == 0 and runs["a"][2] == 0
    report_criterion(12, ok, f"verify and sweep outputs byte-identical across runs: {same}")
    assert ok
