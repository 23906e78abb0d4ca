"""Maximal operators and sparse dyadic operators on cell functions.

All dyadic averages go through :func:`dyadic_table`, which sums cells
pairwise up the tree and divides by powers of two. Sharing one table
between the stopping-time construction and the operators is what makes
the sandwich ``M^S f <= M^D f <= tau M^S f`` hold exactly in floating
point rather than up to rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import _kernels
from .characteristics import Scope
from .mesh import Cube, Mesh, contains
from .weights import Weight


class SparseError(ValueError):
    pass


@dataclass(frozen=True)
class CellFunction:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.num_cells,):
            raise ValueError(f"expected {self.mesh.num_cells} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("cell values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))

    def __len__(self):
        return self.values.shape[0]


def _as_values(f) -> tuple[Mesh, np.ndarray]:
    return f.mesh, f.values


def dyadic_table(values: np.ndarray) -> list[np.ndarray]:
    """``table[k][m]`` is the mean of ``values`` over cube (k, m)."""
    sums = [np.asarray(values, dtype=float)]
    while sums[-1].shape[0] > 1:
        s = sums[-1]
        sums.append(s[0::2] + s[1::2])
    return [s / float(1 << k) for k, s in enumerate(sums)]


def _dyadic_sums(values: np.ndarray) -> list[np.ndarray]:
    sums = [np.asarray(values, dtype=float)]
    while sums[-1].shape[0] > 1:
        s = sums[-1]
        sums.append(s[0::2] + s[1::2])
    return sums


def _max_over_ancestors(table: list[np.ndarray]) -> np.ndarray:
    out = table[0].copy()
    for k in range(1, len(table)):
        np.maximum(out, np.repeat(table[k], 1 << k), out=out)
    return out


def maximal_mesh(f: CellFunction) -> CellFunction:
    """Per cell, the largest mean of |f| over mesh intervals containing it."""
    mesh, v = _as_values(f)
    return CellFunction(mesh, _kernels.maximal(np.abs(v)))


def dyadic_maximal(f: CellFunction) -> CellFunction:
    mesh, v = _as_values(f)
    return CellFunction(mesh, _max_over_ancestors(dyadic_table(np.abs(v))))


def weighted_dyadic_maximal(f: CellFunction, w: Weight) -> CellFunction:
    """Per cell, max over dyadic ancestors Q of (1/w(Q)) int_Q |f| w."""
    mesh, v = _as_values(f)
    num = _dyadic_sums(np.abs(v) * w.cell_mass)
    den = _dyadic_sums(w.cell_mass)
    return CellFunction(mesh, _max_over_ancestors([a / b for a, b in zip(num, den)]))


def geometric_maximal(f: CellFunction, scope: Scope = Scope.ALL_INTERVALS) -> CellFunction:
    """Per cell, sup of exp(mean of log f) over intervals (or dyadic cubes) containing it."""
    mesh, v = _as_values(f)
    if np.any(v <= 0):
        raise ValueError("geometric maximal operator needs a strictly positive function")
    logs = np.log(v)
    if Scope(scope) is Scope.ALL_INTERVALS:
        top = _kernels.maximal(logs)
    else:
        top = _max_over_ancestors(dyadic_table(logs))
    return CellFunction(mesh, np.exp(top))


def lp_norm(values: np.ndarray, w: Weight, p: float) -> float:
    """(sum_i |g_i|^p w(cell_i))^(1/p) for a cell-constant g."""
    return float(np.sum(np.abs(values) ** p * w.cell_mass)) ** (1.0 / p)


# sparse families -------------------------------------------------------------

class SparseFamily:
    """Dyadic cubes whose strict family-descendants cover at most half of each.

    ``E_Q`` is Q minus the union of strictly smaller family cubes; each cell
    of the union of the family lies in exactly one ``E_Q`` (that of the
    smallest family cube containing it), recorded in :attr:`owner`.
    """

    def __init__(self, mesh: Mesh, cubes: Iterable[Cube], validate: bool = True, tau: Optional[float] = None):
        self.mesh = mesh
        idx = sorted({mesh.heap_index(c) for c in cubes})
        self.indices = np.array(idx, dtype=np.int64)
        self.cubes = tuple(mesh.cube_at(i) for i in idx)
        self.member = np.zeros(mesh.num_dyadic, dtype=bool)
        self.member[self.indices] = True
        owner = np.full(mesh.num_cells, -1, dtype=np.int64)
        for i, c in zip(idx, self.cubes):
            owner[c.start:c.end] = i
        self.owner = owner
        counts = np.bincount(owner[owner >= 0], minlength=mesh.num_dyadic)
        self.e_size = counts[self.indices]
        self.tau = tau
        if validate:
            bad = [c for c, e in zip(self.cubes, self.e_size) if 2 * e < c.length]
            if bad:
                raise SparseError(f"packing violated at {bad[0]}: |E_Q| < |Q|/2")

    def __len__(self):
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    def __contains__(self, cube: Cube) -> bool:
        return bool(self.member[self.mesh.heap_index(cube)])

    def packing_certificate(self) -> list[tuple[Cube, int, int]]:
        """(Q, |Q|, |union of strict descendants|) in cells, per family cube."""
        return [(c, c.length, c.length - int(e)) for c, e in zip(self.cubes, self.e_size)]

    def packing_holds(self, margin: float = 0.5) -> bool:
        """Strict descendants cover at most ``margin * |Q|`` for every Q."""
        return all(covered <= margin * size for _, size, covered in self.packing_certificate())

    def e_mask(self, cube: Cube) -> np.ndarray:
        return self.owner == self.mesh.heap_index(cube)

    def restricted(self, root: Cube) -> "SparseFamily":
        return SparseFamily(self.mesh, [c for c in self.cubes if contains(root, c)], validate=False)

    def to_json(self) -> str:
        return json.dumps([{"level": c.level, "offset": c.offset} for c in self.cubes])

    @classmethod
    def from_json(cls, mesh: Mesh, text: str) -> "SparseFamily":
        try:
            cubes = [Cube(int(d["level"]), int(d["offset"])) for d in json.loads(text)]
        except (KeyError, TypeError) as exc:
            raise SparseError(f"malformed sparse family: {exc}") from None
        return cls(mesh, cubes)


def build_sparse(f: CellFunction, tau: float = 4.0, root: Optional[Cube] = None) -> SparseFamily:
    """Principal cubes of ``f`` inside ``root``.

    The root is a stopping cube; the stopping children of a stopping cube P
    are the maximal dyadic Q strictly inside P with mean_Q f > tau mean_P f.
    """
    mesh, v = _as_values(f)
    if not tau > 2:
        raise ValueError(f"tau must exceed 2, got {tau}")
    if np.any(v < 0):
        raise ValueError("build_sparse needs a nonnegative function")
    root = mesh.top if root is None else mesh.check(root)
    table = dyadic_table(v)
    if table[root.level][root.offset] <= 0:
        raise ValueError("f vanishes identically on the root cube")
    chosen = [root]
    stack = [root]
    while stack:
        P = stack.pop()
        threshold = tau * table[P.level][P.offset]
        frontier = list(mesh.children(P)) if P.level > 0 else []
        while frontier:
            Q = frontier.pop()
            if table[Q.level][Q.offset] > threshold:
                chosen.append(Q)
                stack.append(Q)
            elif Q.level > 0:
                frontier.extend(mesh.children(Q))
    fam = SparseFamily(mesh, chosen, validate=True, tau=tau)
    if not fam.packing_holds(1.0 / tau):
        raise AssertionError("stopping construction broke the packing bound")
    return fam


def sparse_M(S: SparseFamily, f: CellFunction) -> CellFunction:
    """sum_Q (mean_Q f) 1_{E_Q}."""
    mesh, v = _as_values(f)
    table = dyadic_table(v)
    out = np.zeros(mesh.num_cells)
    for i, c in zip(S.indices, S.cubes):
        sel = S.owner == i
        out[sel] = table[c.level][c.offset]
    return CellFunction(mesh, out)


def _level_contributions(S: SparseFamily, table, restrict_to: Optional[Cube]):
    """Per level k, an array over cells of mean_Q f for the level-k family cube
    containing the cell (0 where there is none)."""
    mesh = S.mesh
    L = mesh.levels
    out = []
    for k in range(L + 1):
        lo = (1 << (L - k)) - 1
        mask = S.member[lo:lo + (1 << (L - k))].copy()
        if restrict_to is not None:
            m = np.arange(mask.shape[0])
            inside = (k <= restrict_to.level) & ((m << k) >= restrict_to.start) & (((m + 1) << k) <= restrict_to.end)
            mask &= inside
        out.append(np.repeat(np.where(mask, table[k], 0.0), 1 << k))
    return out


def sparse_T(S: SparseFamily, f: CellFunction, restrict_to: Optional[Cube] = None) -> CellFunction:
    """sum_{Q in S (Q within restrict_to)} (mean_Q f) 1_Q."""
    mesh, v = _as_values(f)
    if restrict_to is not None:
        mesh.check(restrict_to)
    parts = _level_contributions(S, dyadic_table(v), restrict_to)
    return CellFunction(mesh, np.sum(parts, axis=0))
