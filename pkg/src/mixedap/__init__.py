"""Numerical laboratory for mixed A_p - A_infinity weight characteristics."""

from .mesh import Cube, Interval, Mesh, MeshError, contains, intersects
from .weights import (DualityMode, PowerSpec, Weight, WeightError, WeightPair, analytic_pair,
                      conjugate, dual_pair, example_wdelta, from_cell_averages, power_weight,
                      uniform)
from .characteristics import (BOUND_IDS, FlavorSpec, Kind, Scope, SupremumResult, bound_value,
                              bound_values, global_sup, global_sups, phi)
from .operators import CellFunction, SparseError, SparseFamily, build_sparse, sparse_M, sparse_T

__version__ = "0.1.0"
