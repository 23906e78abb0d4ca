"""Weights on a mesh: exact per-cell mass and log-mass.

A weight is stored through its cell integrals ``int_cell w`` and
``int_cell log w``. Piecewise-constant weights come from cell averages;
power weights carry closed-form cell integrals and remember their
analytic description so that any power ``w**t`` (the dual weight, the
``A_r`` companion) is rebuilt from closed forms instead of from averages.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .mesh import Cube, Interval, Mesh, MeshError, Region


class WeightError(ValueError):
    pass


class DualityMode(enum.Enum):
    DISCRETE = "discrete"
    ANALYTIC = "analytic"


@dataclass(frozen=True)
class PowerSpec:
    """``|x - singularity|**gamma`` on ``support``; 1 elsewhere."""

    gamma: float
    singularity: float = 0.0
    support: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        if not self.gamma > -1:
            raise WeightError(f"gamma={self.gamma} <= -1 is not locally integrable")
        lo, hi = self.support
        if not lo < hi:
            raise WeightError(f"empty support {self.support}")

    def scaled(self, t: float) -> "PowerSpec":
        return PowerSpec(self.gamma * t, self.singularity, self.support)


def _power_integrals(u0, u1, gamma):
    """int_{u0}^{u1} u**gamma du and int_{u0}^{u1} log(u) du, for 0 <= u0 < u1."""
    g = gamma + 1.0
    d = u1 - u0
    mass = np.empty_like(u0)
    logm = np.empty_like(u0)
    at0 = u0 == 0
    pos = ~at0
    mass[at0] = u1[at0] ** g / g
    logm[at0] = u1[at0] * np.log(u1[at0]) - u1[at0]
    r = np.log1p(d[pos] / u0[pos])
    mass[pos] = u0[pos] ** g * np.expm1(g * r) / g
    logm[pos] = d[pos] * np.log(u1[pos]) + u0[pos] * r - d[pos]
    return mass, logm


def _piece_integrals(mesh: Mesh, spec: PowerSpec):
    """Cell mass and log-mass contributed inside ``spec.support``.

    Returns (mass, log_mass, covered_length) per cell; the caller fills the
    uncovered remainder of each cell with the constant 1.
    """
    h = mesh.cell_width
    n = mesh.num_cells
    pos = (spec.singularity - mesh.origin) / h
    i_s = int(round(pos))
    if abs(pos - i_s) > 1e-9 * max(1.0, abs(pos)):
        raise WeightError(f"singularity {spec.singularity} is not on a cell boundary")
    # coordinates relative to the singularity, built from integers
    rel = (np.arange(n + 1) - i_s) * h
    lo = max(spec.support[0] - spec.singularity, rel[0])
    hi = min(spec.support[1] - spec.singularity, rel[-1])
    x0 = np.clip(rel[:-1], lo, hi)
    x1 = np.clip(rel[1:], lo, hi)
    covered = np.maximum(x1 - x0, 0.0)
    mass = np.zeros(n)
    logm = np.zeros(n)
    live = covered > 0
    right = live & (x0 >= 0)
    left = live & (x1 <= 0)
    if np.any(live & ~(right | left)):
        raise WeightError("a cell straddles the singularity")
    for sel, u0, u1 in ((right, x0, x1), (left, -x1, -x0)):
        if np.any(sel):
            m, lg = _power_integrals(u0[sel], u1[sel], spec.gamma)
            mass[sel] = m
            logm[sel] = spec.gamma * lg
    return mass, logm, covered


class Weight:
    """A strictly positive weight given by exact cell integrals.

    Parameters
    ----------
    mesh : Mesh
    cell_mass : array
        ``int_cell w`` for every cell; positive and finite.
    cell_log_mass : array
        ``int_cell log w`` for every cell; finite.
    pieces : sequence of PowerSpec, optional
        Analytic description (power pieces, 1 elsewhere). When present,
        :meth:`power` rebuilds from closed forms.
    """

    def __init__(self, mesh: Mesh, cell_mass, cell_log_mass, pieces: Optional[Sequence[PowerSpec]] = None):
        mass = np.array(cell_mass, dtype=float)
        logm = np.array(cell_log_mass, dtype=float)
        if mass.shape != (mesh.num_cells,) or logm.shape != (mesh.num_cells,):
            raise WeightError("cell arrays must have one entry per cell")
        if not np.all(np.isfinite(mass)) or np.any(mass <= 0):
            raise WeightError("cell masses must be positive and finite")
        if not np.all(np.isfinite(logm)):
            raise WeightError("cell log-masses must be finite")
        mass.flags.writeable = False
        logm.flags.writeable = False
        self.mesh = mesh
        self.cell_mass = mass
        self.cell_log_mass = logm
        self.pieces = tuple(pieces) if pieces is not None else None
        self._mass_hi, self._mass_lo = _kernels.dd_prefix(mass)
        self._log_hi, self._log_lo = _kernels.dd_prefix(logm)
        self._cache: dict = {}

    def __repr__(self):
        kind = "analytic" if self.is_analytic else "discrete"
        return f"Weight({kind}, cells={self.mesh.num_cells})"

    @property
    def is_analytic(self) -> bool:
        return self.pieces is not None

    @property
    def averages(self) -> np.ndarray:
        return self.cell_mass / self.mesh.cell_width

    @property
    def mass_prefix(self) -> np.ndarray:
        return self._mass_hi + self._mass_lo

    @property
    def log_prefix(self) -> np.ndarray:
        return self._log_hi + self._log_lo

    def _bounds(self, region: Region) -> tuple[int, int]:
        self.mesh.check(region)
        if region.end <= region.start:
            raise WeightError("empty region")
        return region.start, region.end

    def integral(self, region: Region) -> float:
        a, b = self._bounds(region)
        return (self._mass_hi[b] - self._mass_hi[a]) + (self._mass_lo[b] - self._mass_lo[a])

    def log_integral(self, region: Region) -> float:
        a, b = self._bounds(region)
        return (self._log_hi[b] - self._log_hi[a]) + (self._log_lo[b] - self._log_lo[a])

    def average(self, region: Region) -> float:
        a, b = self._bounds(region)
        return self.integral(region) / ((b - a) * self.mesh.cell_width)

    def log_average(self, region: Region) -> float:
        a, b = self._bounds(region)
        return self.log_integral(region) / ((b - a) * self.mesh.cell_width)

    def min_average(self, region: Region) -> float:
        a, b = self._bounds(region)
        return float(self.cell_mass[a:b].min()) / self.mesh.cell_width

    def range_integrals(self, starts, ends) -> np.ndarray:
        return _kernels.range_sums(self._mass_hi, self._mass_lo, np.asarray(starts), np.asarray(ends))

    def range_log_integrals(self, starts, ends) -> np.ndarray:
        return _kernels.range_sums(self._log_hi, self._log_lo, np.asarray(starts), np.asarray(ends))

    def power(self, t: float) -> "Weight":
        """The weight ``w**t``; closed-form when analytic, per cell otherwise."""
        key = ("power", float(t))
        if key not in self._cache:
            if t == 1:
                self._cache[key] = self
            elif self.is_analytic:
                self._cache[key] = build_power_pieces(self.mesh, [s.scaled(t) for s in self.pieces])
            else:
                self._cache[key] = from_cell_averages(self.mesh, self.averages ** t)
        return self._cache[key]

    # serialization -------------------------------------------------------

    def to_json(self) -> str:
        m = self.mesh
        return json.dumps({
            "origin": m.origin,
            "cell_width": m.cell_width,
            "num_cells": m.num_cells,
            "averages": self.averages.tolist(),
        })

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["cell_index", "average"])
        for i, v in enumerate(self.averages):
            wr.writerow([i, repr(float(v))])
        return buf.getvalue()


def weight_from_json(text: str) -> Weight:
    d = json.loads(text)
    try:
        mesh = Mesh(int(d["num_cells"]), float(d["cell_width"]), float(d.get("origin", 0.0)))
        avgs = d["averages"]
    except KeyError as exc:
        raise WeightError(f"missing field {exc}") from None
    if len(avgs) != mesh.num_cells:
        raise WeightError("averages length does not match num_cells")
    return from_cell_averages(mesh, avgs)


def weight_from_csv(text: str, cell_width: float = 1.0, origin: float = 0.0) -> Weight:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(rows[0]) != {"cell_index", "average"}:
        raise WeightError("CSV header must be cell_index,average")
    rows.sort(key=lambda r: int(r["cell_index"]))
    if [int(r["cell_index"]) for r in rows] != list(range(len(rows))):
        raise WeightError("cell indices must be 0..N-1")
    mesh = Mesh(len(rows), cell_width, origin)
    return from_cell_averages(mesh, [float(r["average"]) for r in rows])


# constructors ------------------------------------------------------------

def uniform(mesh: Mesh, c: float = 1.0) -> Weight:
    if not c > 0:
        raise WeightError(f"uniform weight needs c > 0, got {c}")
    h = mesh.cell_width
    n = mesh.num_cells
    return Weight(mesh, np.full(n, c * h), np.full(n, math.log(c) * h))


def from_cell_averages(mesh: Mesh, avgs) -> Weight:
    avgs = np.asarray(avgs, dtype=float)
    if avgs.shape != (mesh.num_cells,):
        raise WeightError(f"expected {mesh.num_cells} averages, got {avgs.shape}")
    if np.any(~(avgs > 0)) or not np.all(np.isfinite(avgs)):
        raise WeightError("cell averages must be positive and finite")
    h = mesh.cell_width
    return Weight(mesh, avgs * h, np.log(avgs) * h)


def build_power_pieces(mesh: Mesh, pieces: Sequence[PowerSpec]) -> Weight:
    """Weight equal to each piece on its support and to 1 elsewhere.

    Supports must be pairwise disjoint.
    """
    n = mesh.num_cells
    h = mesh.cell_width
    mass = np.zeros(n)
    logm = np.zeros(n)
    covered = np.zeros(n)
    for spec in pieces:
        m, lg, cov = _piece_integrals(mesh, spec)
        mass += m
        logm += lg
        covered += cov
    if np.any(covered > h * (1 + 1e-9)):
        raise WeightError("power pieces overlap")
    rest = h - covered
    rest[covered >= h * (1 - 1e-12)] = 0.0
    mass += np.maximum(rest, 0.0)
    return Weight(mesh, mass, logm, pieces)


def power_weight(mesh: Mesh, spec: PowerSpec) -> Weight:
    return build_power_pieces(mesh, [spec])


@dataclass(frozen=True)
class WeightPair:
    """A weight ``w`` and its dual ``sigma = w**(1 - p')`` at exponent ``p``."""

    p: float
    w: Weight
    sigma: Weight
    mode: DualityMode
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 1 < self.p < math.inf:
            raise WeightError(f"p must lie in (1, inf), got {self.p}")
        if self.w.mesh != self.sigma.mesh:
            raise WeightError("w and sigma live on different meshes")
        if self.mode is DualityMode.DISCRETE:
            err = np.abs(self.sigma.averages * self.w.averages ** (self.p_conj - 1) - 1.0)
            if err.max() > 1e-12:
                raise WeightError(f"discrete duality violated by {err.max():.3g}")

    @property
    def p_conj(self) -> float:
        return conjugate(self.p)

    @property
    def mesh(self) -> Mesh:
        return self.w.mesh

    def swapped(self) -> "WeightPair":
        """The pair seen from the dual side: (sigma, w) at exponent p'."""
        return WeightPair(self.p_conj, self.sigma, self.w, self.mode, self.meta)


def conjugate(p: float) -> float:
    if p == 1:
        return math.inf
    return p / (p - 1)


def dual_pair(w: Weight, p: float) -> WeightPair:
    """DISCRETE pair: per cell, avg sigma = (avg w)**(1 - p')."""
    pc = conjugate(p) if p > 1 else None
    if pc is None:
        raise WeightError(f"p must lie in (1, inf), got {p}")
    sigma = from_cell_averages(w.mesh, w.averages ** (1 - pc))
    return WeightPair(p, w, sigma, DualityMode.DISCRETE)


def analytic_pair(w: Weight, p: float) -> WeightPair:
    """ANALYTIC pair: sigma rebuilt from the closed form with scaled exponents."""
    if not w.is_analytic:
        raise WeightError("analytic_pair needs a weight built from power pieces")
    if not p > 1:
        raise WeightError(f"p must lie in (1, inf), got {p}")
    return WeightPair(p, w, w.power(1 - conjugate(p)), DualityMode.ANALYTIC)


# the two-singularity example ---------------------------------------------

def wdelta_mesh(delta: float, alpha: float, num_cells: int) -> Mesh:
    """Mesh with 0 and delta**-alpha + 1 on cell boundaries covering
    [-1, delta**-alpha + 2]; the right end is padded with extra cells."""
    c = delta ** -alpha + 1.0
    n = num_cells
    m = int(n * c / (c + 2))
    while m > 0 and m + 2 * math.ceil(m / c) > n:
        m -= 1
    if m < 1:
        raise WeightError(f"{num_cells} cells cannot align both singularities")
    h = c / m
    j = math.ceil(m / c)
    return Mesh(n, h, -j * h)


def example_wdelta(p: float, delta: float, alpha: float, num_cells: int = 1 << 14,
                   mesh: Optional[Mesh] = None) -> WeightPair:
    """ANALYTIC pair for the two-singularity weight

        |x|**((p-1)(1-delta))        on [-1, 1]
        |x - c|**(delta - 1)         on [c - 1, c + 1],  c = delta**-alpha + 1
        1                            elsewhere
    """
    if not p > 2:
        raise WeightError(f"the example needs p > 2, got {p}")
    if not 0 < delta < 1:
        raise WeightError(f"delta must lie in (0, 1), got {delta}")
    if not 1 / p < alpha < 0.5:
        raise WeightError(f"alpha must lie in (1/p, 1/2) = ({1 / p:.6g}, 0.5), got {alpha}")
    c = delta ** -alpha + 1.0
    if mesh is None:
        mesh = wdelta_mesh(delta, alpha, num_cells)
    if mesh.origin > -1 + 1e-12 or mesh.origin + mesh.length < c + 1 - 1e-12:
        raise WeightError("mesh does not cover [-1, delta**-alpha + 2]")
    pieces = [
        PowerSpec((p - 1) * (1 - delta), 0.0, (-1.0, 1.0)),
        PowerSpec(delta - 1, c, (c - 1, c + 1)),
    ]
    try:
        w = build_power_pieces(mesh, pieces)
    except WeightError as exc:
        raise WeightError(f"mesh cannot align both singularities: {exc}") from None
    pair = analytic_pair(w, p)
    pair.meta.update(example="wdelta", delta=delta, alpha=alpha)
    return pair


def region_of(mesh: Mesh, region) -> Region:
    """Accept a Cube, an Interval or a (start, end) tuple."""
    if isinstance(region, (Cube, Interval)):
        return mesh.check(region)
    a, b = region
    try:
        return mesh.check(Interval(int(a), int(b)))
    except MeshError as exc:
        raise WeightError(str(exc)) from None
