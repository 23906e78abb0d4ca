"""Local and global weight characteristics.

Local quantities (one region):

    A_p(w,Q)        = <w>_Q <sigma>_Q^(p-1)
    A_1(w,Q)        = <w>_Q / min_Q w
    A_r(w,Q)        = <w>_Q <w^(-1/(r-1))>_Q^(r-1)
    A_inf^exp(w,Q)  = <w>_Q exp(-<log w>_Q)
    A_inf(w,Q)      = (1/w(Q)) int_Q M(w 1_Q)      (Fujii-Wilson)

Global constants are suprema of products of powers of local quantities
(one-supremum constants) over mesh-aligned intervals or dyadic cubes.
Every factor except Fujii-Wilson is log-linear in range sums, so those
suprema are computed by a single compiled O(N^2) scan.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from .mesh import Cube, Interval, Region
from .weights import Weight, WeightPair, conjugate

TIE_TOL = 1e-13


class Scope(enum.Enum):
    DYADIC = "dyadic"
    ALL_INTERVALS = "all"


class Kind(enum.Enum):
    AP = "ap"
    A1 = "a1"
    AR = "ar"
    AINF_EXP = "ainf_exp"
    AINF_FW = "ainf_fw"


@dataclass(frozen=True)
class Factor:
    kind: Kind
    exponent: float = 1.0
    r: Optional[float] = None

    def __post_init__(self):
        if self.kind is Kind.AR and not (self.r is not None and 1 < self.r < math.inf):
            raise ValueError(f"A_r factor needs r in (1, inf), got {self.r}")


@dataclass(frozen=True)
class FlavorSpec:
    """Product of powers of local characteristics.

    With ``dual=True`` the spec is evaluated on ``pair.swapped()``, i.e. on
    sigma at exponent p' (so ``AP`` means A_{p'}(sigma, Q)).
    """

    factors: tuple[Factor, ...]
    dual: bool = False

    @classmethod
    def single(cls, kind, r=None, dual=False) -> "FlavorSpec":
        return cls((Factor(Kind(kind), 1.0, r),), dual)

    @classmethod
    def mixed(cls, *terms, dual=False) -> "FlavorSpec":
        """``FlavorSpec.mixed(("ap", 0.5), ("ainf_exp", 0.5))``; A_r as ("ar", e, r)."""
        fs = []
        for t in terms:
            kind, e, *rest = t
            fs.append(Factor(Kind(kind), float(e), rest[0] if rest else None))
        return cls(tuple(fs), dual)

    @property
    def uses_fw(self) -> bool:
        return any(f.kind is Kind.AINF_FW for f in self.factors)

    def default_scope(self) -> Scope:
        return Scope.DYADIC if self.uses_fw else Scope.ALL_INTERVALS

    def label(self) -> str:
        side = "sigma" if self.dual else "w"
        parts = []
        for f in self.factors:
            name = f.kind.value + (f"({f.r:g})" if f.r is not None else "")
            parts.append(name if f.exponent == 1 else f"{name}^{f.exponent:g}")
        return f"[{side}]_{'*'.join(parts)}"


@dataclass(frozen=True)
class SupremumResult:
    value: float
    argmax: Interval
    scope: Scope

    def as_dict(self) -> dict:
        return {"value": self.value, "argmax": [self.argmax.start, self.argmax.end],
                "scope": self.scope.value}


def _span(region: Region) -> Interval:
    return region if isinstance(region, Interval) else region.as_interval()


# local quantities ------------------------------------------------------

def ap_local(pair: WeightPair, region: Region) -> float:
    return pair.w.average(region) * pair.sigma.average(region) ** (pair.p - 1)


def ar_local(w: Weight, r: float, region: Region) -> float:
    return w.average(region) * w.power(-1.0 / (r - 1)).average(region) ** (r - 1)


def a1_local(w: Weight, region: Region) -> float:
    return w.average(region) / w.min_average(region)


def ainf_exp_local(w: Weight, region: Region) -> float:
    return w.average(region) * math.exp(-w.log_average(region))


def ainf_fw_local(w: Weight, region: Region) -> float:
    """(1/w(Q)) int_Q M(w 1_Q), with M the mesh maximal operator."""
    w.mesh.check(region)
    v = w.averages[region.start:region.end]
    return float(_kernels.maximal(np.ascontiguousarray(v)).sum()) * w.mesh.cell_width / w.integral(region)


def factor_local(pair: WeightPair, factor: Factor, region: Region) -> float:
    k = factor.kind
    if k is Kind.AP:
        return ap_local(pair, region)
    if k is Kind.AR:
        if factor.r == pair.p:
            return ap_local(pair, region)
        return ar_local(pair.w, factor.r, region)
    if k is Kind.A1:
        return a1_local(pair.w, region)
    if k is Kind.AINF_EXP:
        return ainf_exp_local(pair.w, region)
    return ainf_fw_local(pair.w, region)


def mixed_local(pair: WeightPair, spec: FlavorSpec, region: Region) -> float:
    base = pair.swapped() if spec.dual else pair
    out = 1.0
    for f in spec.factors:
        out *= factor_local(base, f, region) ** f.exponent
    return out


def phi(t: float) -> float:
    """1 + log t, defined for t >= 1."""
    if not t >= 1:
        raise ValueError(f"phi is defined for t >= 1, got {t}")
    return 1.0 + math.log(t)


# suprema ---------------------------------------------------------------

class _Terms:
    """Collects (weight, feature) columns and per-spec log coefficients."""

    def __init__(self):
        self.weights: list[Weight] = []
        self.rows: list[dict] = []

    def col(self, w: Weight) -> int:
        for i, x in enumerate(self.weights):
            if x is w:
                return i
        self.weights.append(w)
        return len(self.weights) - 1

    def add_spec(self, pair: WeightPair, spec: FlavorSpec):
        base = pair.swapped() if spec.dual else pair
        row = {}

        def put(w, feat, c):
            key = (self.col(w), feat)
            row[key] = row.get(key, 0.0) + c

        for f in spec.factors:
            e = f.exponent
            if f.kind is Kind.AINF_FW:
                raise ValueError("Fujii-Wilson factors are not log-linear")
            put(base.w, "avg", e)
            if f.kind is Kind.AP or (f.kind is Kind.AR and f.r == base.p):
                put(base.sigma, "avg", e * (base.p - 1))
            elif f.kind is Kind.AR:
                put(base.w.power(-1.0 / (f.r - 1)), "avg", e * (f.r - 1))
            elif f.kind is Kind.A1:
                put(base.w, "min", -e)
            else:
                put(base.w, "log", -e)
        self.rows.append(row)

    def matrices(self):
        K, J = len(self.weights), len(self.rows)
        mats = {f: np.zeros((J, K)) for f in ("avg", "log", "min")}
        for j, row in enumerate(self.rows):
            for (k, feat), c in row.items():
                mats[feat][j, k] = c
        return mats


def _scan_all(pair: WeightPair, specs: Sequence[FlavorSpec]) -> list[SupremumResult]:
    terms = _Terms()
    for s in specs:
        terms.add_spec(pair, s)
    mats = terms.matrices()
    ws = terms.weights
    best, bs, be = _kernels.scan_intervals(
        np.stack([w._mass_hi for w in ws]), np.stack([w._mass_lo for w in ws]),
        np.stack([w._log_hi for w in ws]), np.stack([w._log_lo for w in ws]),
        np.stack([w.averages for w in ws]),
        mats["avg"], mats["log"], mats["min"], pair.mesh.cell_width, TIE_TOL)
    return [SupremumResult(math.exp(v), Interval(int(a), int(b)), Scope.ALL_INTERVALS)
            for v, a, b in zip(best, bs, be)]


def _dyadic_order(mesh):
    starts, ends = mesh.dyadic_bounds()
    return starts, ends, np.lexsort((ends - starts, starts))


def dyadic_features(w: Weight):
    """Per dyadic cube (heap order): log average, average log, log min."""
    if "dyadic_features" not in w._cache:
        mesh = w.mesh
        starts, ends = mesh.dyadic_bounds()
        meas = (ends - starts) * mesh.cell_width
        la = np.log(w.range_integrals(starts, ends) / meas)
        lg = w.range_log_integrals(starts, ends) / meas
        avg = w.averages
        mins = [avg.reshape(-1, 1 << k).min(axis=1) for k in range(mesh.levels, -1, -1)]
        w._cache["dyadic_features"] = (la, lg, np.log(np.concatenate(mins)))
    return w._cache["dyadic_features"]


def dyadic_fw(w: Weight) -> np.ndarray:
    """Fujii-Wilson local constant of every dyadic cube, heap order."""
    if "dyadic_fw" not in w._cache:
        mesh = w.mesh
        starts, ends = mesh.dyadic_bounds()
        num = _kernels.dyadic_maximal_integrals(np.ascontiguousarray(w.averages), mesh.levels)
        w._cache["dyadic_fw"] = num * mesh.cell_width / w.range_integrals(starts, ends)
    return w._cache["dyadic_fw"]


def _dyadic_log_values(pair: WeightPair, spec: FlavorSpec) -> np.ndarray:
    base = pair.swapped() if spec.dual else pair
    out = 0.0
    la_w, lg_w, lm_w = dyadic_features(base.w)
    for f in spec.factors:
        e = f.exponent
        if f.kind is Kind.AP or (f.kind is Kind.AR and f.r == base.p):
            out = out + e * (la_w + (base.p - 1) * dyadic_features(base.sigma)[0])
        elif f.kind is Kind.AR:
            other = base.w.power(-1.0 / (f.r - 1))
            out = out + e * (la_w + (f.r - 1) * dyadic_features(other)[0])
        elif f.kind is Kind.A1:
            out = out + e * (la_w - lm_w)
        elif f.kind is Kind.AINF_EXP:
            out = out + e * (la_w - lg_w)
        else:
            out = out + e * np.log(dyadic_fw(base.w))
    return np.broadcast_to(out, (pair.mesh.num_dyadic,))


def _scan_dyadic(pair: WeightPair, spec: FlavorSpec) -> SupremumResult:
    starts, ends, order = _dyadic_order(pair.mesh)
    logv = np.ascontiguousarray(_dyadic_log_values(pair, spec)[order])
    i = _kernels.first_max(logv, TIE_TOL)
    j = order[i]
    return SupremumResult(math.exp(logv[i]), Interval(int(starts[j]), int(ends[j])), Scope.DYADIC)


def _scan_all_slow(pair: WeightPair, spec: FlavorSpec) -> SupremumResult:
    best, arg = -math.inf, None
    for iv in pair.mesh.enumerate_intervals():
        v = math.log(mixed_local(pair, spec, iv))
        if v > best + TIE_TOL:
            best, arg = v, iv
    return SupremumResult(math.exp(best), arg, Scope.ALL_INTERVALS)


def global_sups(pair: WeightPair, specs: Sequence[FlavorSpec], scope: Optional[Scope] = None) -> list[SupremumResult]:
    """Suprema of several specs, sharing one interval scan where possible.

    ``scope=None`` picks each spec's default (dyadic for Fujii-Wilson
    factors, all intervals otherwise).
    """
    out: list[Optional[SupremumResult]] = [None] * len(specs)
    fast = []
    for i, s in enumerate(specs):
        sc = s.default_scope() if scope is None else Scope(scope)
        if sc is Scope.DYADIC:
            out[i] = _scan_dyadic(pair, s)
        elif s.uses_fw:
            out[i] = _scan_all_slow(pair, s)
        else:
            fast.append(i)
    if fast:
        for i, res in zip(fast, _scan_all(pair, [specs[i] for i in fast])):
            out[i] = res
    return out


def global_sup(pair: WeightPair, spec: FlavorSpec, scope: Optional[Scope] = None) -> SupremumResult:
    return global_sups(pair, [spec], scope)[0]


def local_dyadic_values(pair: WeightPair, spec: FlavorSpec) -> np.ndarray:
    """Local value of ``spec`` on every dyadic cube, heap order."""
    return np.exp(_dyadic_log_values(pair, spec))


# bound formulas ----------------------------------------------------------

BOUND_IDS = ("buckley", "maxexp0", "maxW", "hl-mixed", "mixed-pr", "exp1", "exp0", "w0", "mixed-pq")


def _bound_formula(which: str, p: float, params: dict, get: Callable[[FlavorSpec], float]) -> float:
    pc = conjugate(p)
    mix = FlavorSpec.mixed
    ap_w = lambda: get(FlavorSpec.single("ap"))
    ap_s = lambda: get(FlavorSpec.single("ap", dual=True))
    fw_w = lambda: get(FlavorSpec.single("ainf_fw"))
    fw_s = lambda: get(FlavorSpec.single("ainf_fw", dual=True))
    if which == "buckley":
        return ap_s()
    if which == "maxexp0":
        return get(mix(("ap", 1 / pc), ("ainf_exp", 1 / p), dual=True))
    if which == "maxW":
        return phi(ap_s()) ** (1 / p) * get(mix(("ap", 1 / pc), ("ainf_fw", 1 / p), dual=True))
    if which == "hl-mixed":
        return ap_w() ** (1 / p) * max(fw_w() ** (1 / pc), fw_s() ** (1 / p))
    if which == "mixed-pr":
        r = params.get("r")
        if r is None:
            raise ValueError("bound mixed-pr needs parameter r")
        return max(get(mix(("ap", 1 / (p - 1)), ("ar", 1 - 1 / (p - 1), r))),
                   get(mix(("ap", 1 / (pc - 1)), ("ar", 1 - 1 / (pc - 1), r), dual=True)))
    if which == "exp1":
        return get(mix(("ap", 1 / (p - 1)), ("ainf_exp", 1 - 1 / (p - 1))))
    if which == "exp0":
        return max(phi(ap_w()) ** (1 / p) * get(mix(("ap", 1 / p), ("ainf_exp", 1 / pc))),
                   phi(ap_s()) ** (1 / pc) * get(mix(("ap", 1 / pc), ("ainf_exp", 1 / p), dual=True)))
    if which == "w0":
        return phi(ap_w()) * max(get(mix(("ap", 1 / p), ("ainf_fw", 1 / pc))),
                                 get(mix(("ap", 1 / pc), ("ainf_fw", 1 / p), dual=True)))
    if which == "mixed-pq":
        q = params.get("q")
        if q is None or not 1 <= q < p:
            raise ValueError(f"bound mixed-pq needs 1 <= q < p, got q={q}")
        aq = get(FlavorSpec.single("a1")) if q == 1 else get(FlavorSpec.single("ar", r=q))
        return aq ** (1 / p) * fw_w() ** (1 / pc)
    raise ValueError(f"unknown bound id {which!r}; known: {', '.join(BOUND_IDS)}")


def evaluate(pair: WeightPair, ids: Iterable[str] = (), specs: Sequence[FlavorSpec] = (),
             params: Optional[dict] = None, scope: Optional[Scope] = None):
    """Bound values for ``ids`` and suprema for ``specs``, sharing one scan.

    Returns ``(bounds, sups)`` with ``sups`` aligned to ``specs``.
    """
    params = params or {}
    ids = list(ids)
    wanted: dict[FlavorSpec, Optional[SupremumResult]] = {s: None for s in specs}

    def record(spec):
        wanted.setdefault(spec, None)
        return 1.0

    for which in ids:
        _bound_formula(which, pair.p, params, record)
    keys = list(wanted)
    for s, res in zip(keys, global_sups(pair, keys, scope)):
        wanted[s] = res
    bounds = {which: _bound_formula(which, pair.p, params, lambda s: wanted[s].value) for which in ids}
    return bounds, [wanted[s] for s in specs]


def bound_values(pair: WeightPair, ids: Iterable[str], params: Optional[dict] = None,
                 scope: Optional[Scope] = None) -> dict[str, float]:
    """Evaluate several bound right-hand sides with shared suprema.

    Two-term right-hand sides ``X + Y`` are combined as ``max(X, Y)``.
    """
    return evaluate(pair, ids, (), params, scope)[0]


def bound_value(pair: WeightPair, which: str, params: Optional[dict] = None,
                scope: Optional[Scope] = None) -> float:
    return bound_values(pair, [which], params, scope)[which]
