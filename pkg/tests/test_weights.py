import math

import numpy as np
import pytest

from mixedap.mesh import Interval, Mesh
from mixedap.weights import (PowerSpec, WeightError, analytic_pair, build_power_pieces, dual_pair,
                             example_wdelta, from_cell_averages, uniform, weight_from_csv, weight_from_json)


def test_uniform_masses():
    w = uniform(Mesh(2), 2.0)
    np.testing.assert_allclose(w.cell_mass, [2, 2])
    np.testing.assert_allclose(w.cell_log_mass, [math.log(2)] * 2)
    with pytest.raises(WeightError):
        uniform(Mesh(2), 0.0)


def test_cell_averages():
    w = from_cell_averages(Mesh(4), [1, 1, 1, 4])
    np.testing.assert_allclose(w.cell_mass, [1, 1, 1, 4])
    np.testing.assert_allclose(from_cell_averages(Mesh(2), [1, 4]).cell_log_mass, [0, math.log(4)])
    with pytest.raises(WeightError):
        from_cell_averages(Mesh(2), [1, 0])


def test_power_zero_is_uniform():
    w = build_power_pieces(Mesh(8, 0.125), [PowerSpec(0.0)])
    np.testing.assert_allclose(w.cell_mass, uniform(Mesh(8, 0.125)).cell_mass, rtol=1e-15)


def test_power_linear_masses_match_quadrature():
    w = build_power_pieces(Mesh(2, 0.5), [PowerSpec(1.0)])
    np.testing.assert_allclose(w.cell_mass, [1 / 8, 3 / 8], rtol=1e-15)
    x = np.linspace(0, 0.5, 200001)
    np.testing.assert_allclose(w.cell_mass[0], np.trapezoid(x, x), rtol=1e-9)


def test_power_log_mass_of_singular_cell():
    gamma = -0.5
    w = build_power_pieces(Mesh(4, 0.25), [PowerSpec(gamma)])
    # int_0^h gamma log x dx = gamma h (log h - 1)
    h = 0.25
    assert w.cell_log_mass[0] == pytest.approx(gamma * h * (math.log(h) - 1), rel=1e-13)
    assert w.cell_mass[0] == pytest.approx(h ** (gamma + 1) / (gamma + 1), rel=1e-13)


def test_power_nonintegrable():
    with pytest.raises(WeightError):
        PowerSpec(-1.0)


def test_wdelta_preconditions():
    pair = example_wdelta(3, 1 / 16, 0.4, 1 << 10)
    assert pair.meta["delta"] == 1 / 16
    with pytest.raises(WeightError):
        example_wdelta(3, 1 / 16, 0.25, 1 << 10)
    with pytest.raises(WeightError):
        example_wdelta(3, 1.0, 0.4, 1 << 10)
    with pytest.raises(WeightError):
        example_wdelta(2, 0.1, 0.4, 1 << 10)


def test_wdelta_singularities_on_cell_edges():
    pair = example_wdelta(3, 1 / 64, 0.4, 1 << 10)
    edges = pair.mesh.edges()
    c = (1 / 64) ** -0.4 + 1
    assert np.min(np.abs(edges)) < 1e-12
    assert np.min(np.abs(edges - c)) < 1e-9


def test_dual_pair_averages():
    pair = dual_pair(from_cell_averages(Mesh(2), [1, 4]), 2)
    np.testing.assert_allclose(pair.sigma.averages, [1, 0.25])
    pair = dual_pair(from_cell_averages(Mesh(4), [1, 1, 1, 4]), 2)
    np.testing.assert_allclose(pair.sigma.averages, [1, 1, 1, 0.25])
    assert pair.sigma.average(pair.mesh.top) == pytest.approx(0.8125, rel=1e-15)
    pair = dual_pair(uniform(Mesh(8)), 3)
    np.testing.assert_allclose(pair.sigma.averages, 1.0)


def test_analytic_pair_is_power():
    w = build_power_pieces(Mesh(4, 0.25), [PowerSpec(0.5)])
    pair = analytic_pair(w, 3)
    expect = build_power_pieces(Mesh(4, 0.25), [PowerSpec(0.5 * (1 - 1.5))])
    np.testing.assert_allclose(pair.sigma.cell_mass, expect.cell_mass, rtol=1e-14)
    with pytest.raises(WeightError):
        analytic_pair(from_cell_averages(Mesh(2), [1, 2]), 2)


def test_region_queries():
    w = from_cell_averages(Mesh(4), [1, 1, 1, 4])
    assert w.average(Interval(0, 4)) == pytest.approx(7 / 4)
    assert w.log_average(Interval(0, 4)) == pytest.approx(math.log(4) / 4)
    assert uniform(Mesh(4), 3.0).log_average(Interval(1, 3)) == pytest.approx(math.log(3))
    with pytest.raises(Exception):
        w.integral(Interval(0, 0))


def test_prefix_sums_survive_cancellation(rng):
    vals = np.exp(rng.uniform(-30, 30, 1 << 12))
    w = from_cell_averages(Mesh(1 << 12), vals)
    for a, b in [(5, 6), (100, 107), (2000, 4096)]:
        assert w.integral(Interval(a, b)) == pytest.approx(math.fsum(vals[a:b]), rel=1e-13)


def test_serialization_roundtrip():
    w = from_cell_averages(Mesh(4, 0.5, -1.0), [1, 2, 3, 4])
    back = weight_from_json(w.to_json())
    np.testing.assert_array_equal(back.cell_mass, w.cell_mass)
    assert back.mesh == w.mesh
    back = weight_from_csv(w.to_csv(), 0.5, -1.0)
    np.testing.assert_allclose(back.averages, w.averages, rtol=1e-15)
