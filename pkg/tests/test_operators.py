import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from mixedap.characteristics import Scope
from mixedap.mesh import Cube, Mesh
from mixedap.operators import (CellFunction, SparseError, SparseFamily, build_sparse, dyadic_maximal,
                               geometric_maximal, lp_norm, maximal_mesh, sparse_M, sparse_T,
                               weighted_dyadic_maximal)
from mixedap.weights import from_cell_averages, uniform

STEP = CellFunction(Mesh(4), [1, 1, 1, 4])
SPIKE = CellFunction(Mesh(8), [1] * 7 + [100])


def test_maximal_examples():
    np.testing.assert_allclose(maximal_mesh(STEP).values, [1.75, 2, 2.5, 4])
    np.testing.assert_allclose(maximal_mesh(CellFunction(Mesh(8), [-3] * 8)).values, 3)


def test_dyadic_maximal_examples():
    np.testing.assert_allclose(dyadic_maximal(STEP).values, [1.75, 1.75, 2.5, 4])
    np.testing.assert_allclose(dyadic_maximal(CellFunction(Mesh(8), np.ones(8))).values, 1)


def test_weighted_dyadic_maximal_examples():
    w = from_cell_averages(Mesh(4), [1, 1, 1, 4])
    got = weighted_dyadic_maximal(CellFunction(Mesh(4), [0, 0, 0, 1]), w).values
    # cells 0-1 see only the top cube; cell 2 also sees [2,4) with w-average 4/5
    np.testing.assert_allclose(got, [4 / 7, 4 / 7, 0.8, 1])
    np.testing.assert_allclose(weighted_dyadic_maximal(STEP, uniform(Mesh(4))).values, dyadic_maximal(STEP).values)


def test_geometric_maximal_examples():
    np.testing.assert_allclose(geometric_maximal(CellFunction(Mesh(2), [1, 4]), Scope.ALL_INTERVALS).values, [2, 4])
    np.testing.assert_allclose(geometric_maximal(CellFunction(Mesh(4), [3] * 4)).values, 3)
    with pytest.raises(ValueError):
        geometric_maximal(CellFunction(Mesh(2), [0, 1]))


@pytest.mark.parametrize("n", [1, 2, 16, 32])
def test_maximals_match_oracles(rng, n):
    vals = rng.normal(size=n)
    f = CellFunction(Mesh(n), vals)
    np.testing.assert_allclose(maximal_mesh(f).values, oracles.maximal(vals), rtol=1e-13)
    np.testing.assert_allclose(dyadic_maximal(f).values, oracles.dyadic_maximal(vals), rtol=1e-13)
    assert np.all(dyadic_maximal(f).values <= maximal_mesh(f).values * (1 + 1e-14))


def test_build_sparse_examples():
    assert build_sparse(CellFunction(Mesh(8), np.ones(8))).cubes == (Mesh(8).top,)
    S = build_sparse(SPIKE, 4)
    assert set(S.cubes) == {Cube(3, 0), Cube(0, 7)}


def test_build_sparse_errors():
    with pytest.raises(ValueError, match="nonnegative"):
        build_sparse(CellFunction(Mesh(4), [1, -1, 1, 1]))
    with pytest.raises(ValueError):
        build_sparse(CellFunction(Mesh(4), np.zeros(4)))
    with pytest.raises(ValueError):
        build_sparse(STEP, tau=2.0)


def test_sparse_M_example():
    np.testing.assert_allclose(sparse_M(build_sparse(SPIKE, 4), SPIKE).values, [13.375] * 7 + [100])
    np.testing.assert_allclose(sparse_M(build_sparse(SPIKE, 4), CellFunction(Mesh(8), np.ones(8))).values, 1)


def test_sparse_T_examples():
    mesh = Mesh(4)
    S = SparseFamily(mesh, [Cube(2, 0), Cube(1, 0), Cube(0, 0)])
    one = CellFunction(mesh, np.ones(4))
    np.testing.assert_allclose(sparse_T(S, one).values, [3, 2, 1, 1])
    np.testing.assert_allclose(sparse_T(S, one, Cube(1, 0)).values, [2, 1, 0, 0])
    np.testing.assert_allclose(sparse_T(SparseFamily(mesh, []), one).values, 0)


def test_sparse_T_matches_oracle(rng):
    vals = np.exp(rng.normal(0, 2, 64))
    S = build_sparse(CellFunction(Mesh(64), vals), 2.5)
    got = sparse_T(S, CellFunction(Mesh(64), vals)).values
    np.testing.assert_allclose(got, oracles.sparse_T([(q.start, q.end) for q in S.cubes], vals), rtol=1e-12)


def test_packing_validation():
    mesh = Mesh(4)
    with pytest.raises(SparseError):
        SparseFamily(mesh, [Cube(1, 0), Cube(0, 0), Cube(0, 1)])
    S = SparseFamily(mesh, [Cube(2, 0), Cube(1, 0)])
    cert = {q: (size, covered) for q, size, covered in S.packing_certificate()}
    assert cert[Cube(2, 0)] == (4, 2)
    assert S.packing_holds(0.5)


def test_family_serialization():
    S = build_sparse(SPIKE, 4)
    back = SparseFamily.from_json(S.mesh, S.to_json())
    assert back.cubes == S.cubes


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=32, max_size=32).filter(lambda v: sum(v) > 0),
       st.sampled_from([2.5, 4.0, 8.0]))
def test_sandwich_and_disjoint_sets(vals, tau):
    f = CellFunction(Mesh(32), vals)
    S = build_sparse(f, tau)
    ms, md = sparse_M(S, f).values, dyadic_maximal(f).values
    assert np.all(ms <= md)
    assert np.all(md <= tau * ms)
    owned = np.zeros(32, int)
    for q in S.cubes:
        owned += S.e_mask(q)
    assert np.all(owned == 1)
    assert S.packing_holds(1 / tau)


def test_lp_norm():
    w = from_cell_averages(Mesh(2), [1, 3])
    assert lp_norm(np.array([2.0, 1.0]), w, 2) == pytest.approx(np.sqrt(4 + 3))
