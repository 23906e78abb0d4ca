"""A_p stratification of cube families and the doubling corona decomposition."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .mesh import Cube, Mesh
from .operators import SparseFamily
from .weights import Weight, WeightPair


class CoronaError(ValueError):
    pass


# stratification ----------------------------------------------------------

def _ceil_log2(x: float) -> int:
    """Exact ceil(log2 x) for x > 0."""
    m, e = math.frexp(x)
    return e - 1 if m == 0.5 else e


def _floor_log2(x: float) -> int:
    return math.frexp(x)[1] - 1


@dataclass(frozen=True)
class Stratification:
    """Cubes bucketed by the dyadic size of their local A_p value.

    ``convention="upper"`` puts Q in bucket a when 2^(a-1) < A_p(w,Q) <= 2^a;
    ``"lower"`` uses 2^(a-1) <= A_p(w,Q) < 2^a.
    """

    buckets: dict[int, list[Cube]]
    local: dict[Cube, float]
    global_ap: float
    top: int
    convention: str

    def bucket_of(self, cube: Cube) -> int:
        for a, cubes in self.buckets.items():
            if cube in cubes:
                return a
        raise KeyError(cube)

    def range_ok(self) -> bool:
        """Every bucket index lies in [-1, top + 1]."""
        return all(-1 <= a <= self.top + 1 for a in self.buckets)


def stratify_ap(S: SparseFamily | Sequence[Cube], pair: WeightPair, convention: str = "upper",
                global_ap: Optional[float] = None) -> Stratification:
    """Bucket the cubes of S by local A_p. ``top`` is floor(log2 [w]_Ap).

    Because every local value is at most the global constant, the bucket
    index never exceeds ``top + 1`` (``top`` itself when the global
    constant is a power of two under the upper convention).
    """
    if convention not in ("upper", "lower"):
        raise ValueError(f"unknown convention {convention!r}")
    from .characteristics import FlavorSpec, ap_local, global_sup

    cubes = list(S)
    if global_ap is None:
        global_ap = global_sup(pair, FlavorSpec.single("ap")).value
    top = _floor_log2(global_ap)
    buckets: dict[int, list[Cube]] = {}
    local = {}
    for c in cubes:
        v = ap_local(pair, c)
        local[c] = v
        a = _ceil_log2(v) if convention == "upper" else _floor_log2(v) + 1
        buckets.setdefault(a, []).append(c)
    return Stratification(dict(sorted(buckets.items())), local, global_ap, top, convention)


# corona decomposition ------------------------------------------------------

class WeightedFamily:
    """Dyadic cubes with positive coefficients ``a_Q`` and a measure ``nu``.

    The balance condition ``c <= a_Q^r nu(Q)/|Q| <= C`` is checked when c
    and C are given and measured (min and max over the family) otherwise.
    ``r`` defaults to ``p``.
    """

    def __init__(self, mesh: Mesh, coefficients: Mapping[Cube, float], nu: Weight, p: float = 2.0,
                 c: Optional[float] = None, C: Optional[float] = None, r: Optional[float] = None,
                 root: Optional[Cube] = None):
        if nu.mesh != mesh:
            raise CoronaError("nu lives on a different mesh")
        if not coefficients:
            raise CoronaError("empty cube family")
        self.mesh = mesh
        self.nu = nu
        self.p = float(p)
        self.r = self.p if r is None else float(r)
        self.root = mesh.top if root is None else mesh.check(root)
        items = sorted(((mesh.heap_index(q), q, float(a)) for q, a in coefficients.items()),
                       key=lambda t: t[0])
        self.indices = np.array([t[0] for t in items], dtype=np.int64)
        self.cubes = tuple(t[1] for t in items)
        self.a = np.array([t[2] for t in items])
        if not np.all(np.isfinite(self.a)) or np.any(self.a <= 0):
            raise CoronaError("coefficients a_Q must be positive and finite")
        for q in self.cubes:
            if not (self.root.start <= q.start and q.end <= self.root.end):
                raise CoronaError(f"{q} is not inside the root {self.root}")
        starts = np.array([q.start for q in self.cubes], dtype=np.int64)
        ends = np.array([q.end for q in self.cubes], dtype=np.int64)
        self.nu_mass = nu.range_integrals(starts, ends)
        bal = self.a ** self.r * self.nu_mass / ((ends - starts) * mesh.cell_width)
        lo, hi = float(bal.min()), float(bal.max())
        slack = 1e-12
        if c is not None and lo < c * (1 - slack):
            raise CoronaError(f"balance violated: min a^r nu(Q)/|Q| = {lo!r} < c = {c!r}")
        if C is not None and hi > C * (1 + slack):
            raise CoronaError(f"balance violated: max a^r nu(Q)/|Q| = {hi!r} > C = {C!r}")
        self.c = lo if c is None else float(c)
        self.C = hi if C is None else float(C)
        self.balance = bal

    def coefficient(self, cube: Cube) -> float:
        i = int(np.searchsorted(self.indices, self.mesh.heap_index(cube)))
        if i >= len(self.indices) or self.indices[i] != self.mesh.heap_index(cube):
            raise KeyError(cube)
        return float(self.a[i])

    def __len__(self):
        return len(self.cubes)


@dataclass
class CoronaResult:
    mesh: Mesh
    generations: list[list[Cube]]
    parent: dict[Cube, Cube]
    ratio_class: dict[Cube, int]
    stopping: set[Cube] = field(default_factory=set)

    def to_json(self) -> str:
        def enc(q):
            return {"level": q.level, "offset": q.offset}
        return json.dumps({
            "generations": [[enc(q) for q in g] for g in self.generations],
            "parent": {q.key(): enc(P) for q, P in self.parent.items()},
        })

    @classmethod
    def from_json(cls, mesh: Mesh, text: str) -> "CoronaResult":
        d = json.loads(text)
        dec = lambda x: Cube(int(x["level"]), int(x["offset"]))
        gens = [[dec(x) for x in g] for g in d["generations"]]
        parent = {Cube.from_key(k): dec(v) for k, v in d["parent"].items()}
        return cls(mesh, gens, parent, {}, {q for g in gens for q in g})


def _ratio_class(a_parent: float, a_q: float) -> int:
    """The integer b with 2^-b a_P < a_Q <= 2^(1-b) a_P."""
    b = max(_floor_log2(a_parent / a_q) + 1, 0)
    while not a_q <= math.ldexp(a_parent, 1 - b):
        b -= 1
    while not math.ldexp(a_parent, -b) < a_q:
        b += 1
    return b


def corona_decompose(fam: WeightedFamily) -> CoronaResult:
    """Stopping cubes along which a_Q more than doubles.

    Generation 0 holds the maximal cubes. A cube Q joins the next generation
    when a_Q > 2 a_P, P being the smallest stopping cube above it; otherwise
    its parent is P.
    """
    mesh = fam.mesh
    owner = np.full(mesh.num_cells, -1, dtype=np.int64)
    a_of = {}
    gen_of: dict[Cube, int] = {}
    generations: list[list[Cube]] = []
    parent: dict[Cube, Cube] = {}
    ratio: dict[Cube, int] = {}
    cube_at = {}
    # heap order visits every cube after all of its ancestors
    for idx, q, a in zip(fam.indices, fam.cubes, fam.a):
        a_of[q] = a
        cube_at[int(idx)] = q
        o = int(owner[q.start])
        if o < 0:
            stop, g = True, 0
        else:
            P = cube_at[o]
            stop = a > 2 * a_of[P]
            g = gen_of[P] + 1
        if stop:
            gen_of[q] = g
            if g == len(generations):
                generations.append([])
            generations[g].append(q)
            owner[q.start:q.end] = idx
            parent[q] = q
            ratio[q] = 1
        else:
            parent[q] = P
            ratio[q] = _ratio_class(a_of[P], a)
    return CoronaResult(mesh, generations, parent, ratio, set(gen_of))


class CoronaBound(NamedTuple):
    lhs: float
    rhs: float
    ratio: float


def verify_corona_bound(fam: WeightedFamily, result: CoronaResult, p: Optional[float] = None) -> CoronaBound:
    """lhs = (int (sum_Q a_Q 1_Q)^p dnu)^(1/p);
    rhs = (C/c) (sum over stopping Q of a_Q^p nu(Q))^(1/p)."""
    p = fam.p if p is None else float(p)
    mesh = fam.mesh
    total = np.zeros(mesh.num_cells)
    for q, a in zip(fam.cubes, fam.a):
        total[q.start:q.end] += a
    lhs = float(np.sum(total ** p * fam.nu.cell_mass)) ** (1 / p)
    stop = np.array([q in result.stopping for q in fam.cubes])
    rhs = fam.C / fam.c * float(np.sum(fam.a[stop] ** p * fam.nu_mass[stop])) ** (1 / p)
    return CoronaBound(lhs, rhs, lhs / rhs)


def check_stopping_structure(fam: WeightedFamily, result: CoronaResult) -> list[str]:
    """Return a list of violated invariants (empty when all hold)."""
    mesh = fam.mesh
    problems = []
    coef = dict(zip(fam.cubes, fam.a))

    def family_above(q, pool):
        return [o for o in mesh.ancestors(q) if o in pool]

    maximal = {q for q in fam.cubes if not family_above(q, coef)}
    if set(result.generations[0]) != maximal:
        problems.append("generation 0 is not the set of maximal cubes")
    seen = set()
    for k, gen in enumerate(result.generations):
        prev = set(result.generations[k - 1]) if k else set()
        for q in gen:
            if q in seen:
                problems.append(f"{q} appears in two generations")
            seen.add(q)
            if k == 0:
                continue
            anc = family_above(q, prev)
            if len(anc) != 1 or not coef[q] > 2 * coef[anc[0]]:
                problems.append(f"{q} in generation {k} fails the doubling rule")
            between = [o for o in mesh.ancestors(q) if o in coef and o.level < anc[0].level]
            if any(coef[o] > 2 * coef[anc[0]] for o in between):
                problems.append(f"{q} is not maximal among doubling cubes")
    for q in fam.cubes:
        P = result.parent[q]
        if not coef[q] <= 2 * coef[P]:
            problems.append(f"a_Q > 2 a_Pi(Q) at {q}")
        # results loaded from JSON carry no ratio classes
        b = result.ratio_class.get(q)
        if result.ratio_class and (b is None or not (
                b >= 0 and math.ldexp(coef[P], -b) < coef[q] <= math.ldexp(coef[P], 1 - b))):
            problems.append(f"ratio class wrong or missing at {q}")
        above = [q] if q in result.stopping else family_above(q, result.stopping)
        if not above or P != above[0]:
            problems.append(f"Pi({q}) is not the smallest stopping cube above it")
    return problems
