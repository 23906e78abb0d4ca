"""Parameter sweeps over example power weights, slope fits and random corpora."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .characteristics import BOUND_IDS, FlavorSpec, evaluate
from .corona import WeightedFamily
from .mesh import Cube, Mesh
from .operators import CellFunction, build_sparse
from .testing import testing_T
from .weights import (PowerSpec, WeightPair, analytic_pair, build_power_pieces, dual_pair,
                      example_wdelta, from_cell_averages, wdelta_mesh)

DEFAULT_BOUNDS = ("buckley", "maxexp0", "maxW", "hl-mixed", "exp1", "exp0", "w0")
GUARD_TOL = 0.01
MIN_R2 = 0.98


class SweepError(ValueError):
    pass


class SlopeError(AssertionError):
    pass


def fit_slope(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope of log(value) against log(1/delta), with r^2."""
    if len(points) < 3:
        raise ValueError(f"need at least 3 points, got {len(points)}")
    d = np.array([x for x, _ in points], dtype=float)
    v = np.array([y for _, y in points], dtype=float)
    if np.any(d <= 0) or np.any(v <= 0):
        raise ValueError("deltas and values must be positive")
    x, y = np.log(1 / d), np.log(v)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss = float(np.sum((y - y.mean()) ** 2))
    # constant data: the fit is exact
    r2 = 1.0 if ss < 1e-24 else 1.0 - float(np.sum((y - A @ coef) ** 2)) / ss
    slope = coef[0]
    return float(slope), float(r2)


@dataclass(frozen=True)
class SweepConfig:
    """``example`` is ``"wdelta"`` (two singularities) or ``"observation"``
    (single power weight |x|^((p-1)(1-delta)) with the mixed constant
    (A_p)^alpha (A_inf^exp)^(1-alpha))."""

    p: float = 3.0
    alpha: float = 0.4
    delta_exps: tuple[int, ...] = tuple(range(4, 13))
    num_cells: int = 1 << 14
    bound_ids: tuple[str, ...] = DEFAULT_BOUNDS
    params: dict = field(default_factory=dict)
    seed: int = 0
    refine: bool = True
    tau: float = 4.0
    example: str = "wdelta"

    def __post_init__(self):
        object.__setattr__(self, "delta_exps", tuple(int(k) for k in self.delta_exps))
        object.__setattr__(self, "bound_ids", tuple(self.bound_ids))
        if self.example == "wdelta":
            if not self.p > 2:
                raise SweepError(f"the two-singularity example needs p > 2, got {self.p}")
            if not 1 / self.p < self.alpha < 0.5:
                raise SweepError(f"alpha must lie in (1/p, 1/2), got {self.alpha}")
        elif self.example == "observation":
            if not self.p > 1:
                raise SweepError(f"p must exceed 1, got {self.p}")
            if not 0 < self.alpha <= 1:
                raise SweepError(f"alpha must lie in (0, 1], got {self.alpha}")
        else:
            raise SweepError(f"unknown example {self.example!r}")
        if len(self.delta_exps) < 3 or min(self.delta_exps) < 1:
            raise SweepError("need at least 3 delta exponents, all >= 1")
        n = self.num_cells
        if n < 4 or n & (n - 1):
            raise SweepError(f"num_cells must be a power of two >= 4, got {n}")
        for b in self.bound_ids:
            if b not in BOUND_IDS:
                raise SweepError(f"unknown bound id {b!r}")
        if "mixed-pr" in self.bound_ids and "r" not in self.params:
            raise SweepError("bound mixed-pr needs params['r']")
        if "mixed-pq" in self.bound_ids and "q" not in self.params:
            raise SweepError("bound mixed-pq needs params['q']")

    @property
    def deltas(self) -> list[float]:
        return [2.0 ** -k for k in self.delta_exps]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["delta_exps"] = list(self.delta_exps)
        d["bound_ids"] = list(self.bound_ids)
        return d


@dataclass
class SweepReport:
    config: dict
    columns: list[str]
    rows: list[dict]
    slopes: dict[str, dict]
    flags: list[dict]

    def column(self, name: str) -> list[float]:
        return [r[name] for r in self.rows]

    def slope(self, name: str) -> float:
        return self.slopes[name]["slope"]

    def assert_slope(self, name: str, expected: Optional[float] = None, rel_tol: Optional[float] = None,
                     lower: Optional[float] = None, upper: Optional[float] = None, min_r2: float = MIN_R2):
        s = self.slopes[name]
        problems = []
        if s["r2"] < min_r2:
            problems.append(f"r2 {s['r2']:.4f} < {min_r2}")
        if expected is not None and abs(s["slope"] - expected) > rel_tol * abs(expected):
            problems.append(f"slope {s['slope']:.4f} not within {rel_tol:.0%} of {expected:g}")
        if lower is not None and not s["slope"] >= lower:
            problems.append(f"slope {s['slope']:.4f} < {lower:g}")
        if upper is not None and not s["slope"] <= upper:
            problems.append(f"slope {s['slope']:.4f} > {upper:g}")
        if problems:
            raise SlopeError(f"{name}: " + "; ".join(problems))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.columns)
        for r in self.rows:
            wr.writerow(["%.12g" % r[c] for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "columns": self.columns, "rows": self.rows,
                           "slopes": self.slopes, "flags": self.flags}, indent=1)


def _mixed_spec(alpha: float) -> FlavorSpec:
    if alpha == 1:
        return FlavorSpec.single("ap")
    return FlavorSpec.mixed(("ap", alpha), ("ainf_exp", 1 - alpha))


def observation_mesh(num_cells: int) -> Mesh:
    """[-1, 1) with the origin of the power weight on a cell boundary."""
    return Mesh(num_cells, 2.0 / num_cells, -1.0)


def observation_pair(p: float, delta: float, mesh: Mesh) -> WeightPair:
    w = build_power_pieces(mesh, [PowerSpec((p - 1) * (1 - delta), 0.0)])
    return analytic_pair(w, p)


def testing_families(pair: WeightPair, tau: float = 4.0):
    """Principal-cube families adapted to sigma (forward) and to w (dual)."""
    fwd = build_sparse(CellFunction(pair.mesh, pair.sigma.averages), tau)
    dual = build_sparse(CellFunction(pair.mesh, pair.w.averages), tau)
    return fwd, dual


def _wdelta_row(cfg: SweepConfig, pair: WeightPair) -> dict:
    base = [FlavorSpec.single("ap"), FlavorSpec.single("ainf_fw"), FlavorSpec.single("ainf_fw", dual=True)]
    bounds, sups = evaluate(pair, cfg.bound_ids, base, cfg.params)
    S_fwd, S_dual = testing_families(pair, cfg.tau)
    row = {"ap": sups[0].value, "ainf_fw_w": sups[1].value, "ainf_fw_sigma": sups[2].value}
    row.update(bounds)
    row["testing_fwd"] = testing_T(S_fwd, pair, "forward").value
    row["testing_dual"] = testing_T(S_dual, pair, "dual").value
    return row


def _observation_row(cfg: SweepConfig, pair: WeightPair) -> dict:
    specs = [FlavorSpec.single("ap"), _mixed_spec(cfg.alpha), FlavorSpec.single("ainf_exp")]
    _, sups = evaluate(pair, (), specs)
    return {"ap": sups[0].value, "mixed": sups[1].value, "ainf_exp": sups[2].value}


def _make_pair(cfg: SweepConfig, delta: float, mesh: Optional[Mesh]) -> WeightPair:
    if cfg.example == "wdelta":
        mesh = mesh or wdelta_mesh(delta, cfg.alpha, cfg.num_cells)
        return example_wdelta(cfg.p, delta, cfg.alpha, mesh=mesh)
    return observation_pair(cfg.p, delta, mesh or observation_mesh(cfg.num_cells))


def run_sweep(config: SweepConfig, progress=None) -> SweepReport:
    """One row per delta; with ``config.refine`` every row is recomputed on the
    doubled mesh and quantities moving by 1% or more are flagged."""
    cfg = config
    row_fn = _wdelta_row if cfg.example == "wdelta" else _observation_row
    rows, flags = [], []
    for delta in cfg.deltas:
        pair = _make_pair(cfg, delta, None)
        row = row_fn(cfg, pair)
        if cfg.refine:
            fine = row_fn(cfg, _make_pair(cfg, delta, pair.mesh.refine()))
            for name, v in row.items():
                change = abs(fine[name] - v) / abs(v) if v != 0 else (0.0 if fine[name] == 0 else math.inf)
                if change >= GUARD_TOL:
                    flags.append({"delta": delta, "quantity": name, "change": change})
        rows.append({"delta": delta, **row})
        if progress is not None:
            progress(delta, row)
    columns = list(rows[0])
    slopes = {}
    for name in columns[1:]:
        pts = [(r["delta"], r[name]) for r in rows]
        if all(v > 0 for _, v in pts):
            s, r2 = fit_slope(pts)
            slopes[name] = {"slope": s, "r2": r2}
    return SweepReport(cfg.as_dict(), columns, rows, slopes, flags)


def run_observation_sweep(p: float, alpha: float, delta_exps: Sequence[int] = tuple(range(4, 13)),
                          num_cells: int = 1 << 12, refine: bool = False) -> SweepReport:
    cfg = SweepConfig(p=p, alpha=alpha, delta_exps=tuple(delta_exps), num_cells=num_cells,
                      bound_ids=(), refine=refine, example="observation")
    return run_sweep(cfg)


# random corpora -----------------------------------------------------------------

CORPUS_KINDS = ("loguniform", "power", "wdelta", "mixed")


def random_pair(rng: np.random.Generator, kind: str, num_cells: int = 64, p: float = 2.0) -> WeightPair:
    if kind == "loguniform":
        mesh = Mesh(num_cells)
        return dual_pair(from_cell_averages(mesh, np.exp(rng.uniform(-3, 3, num_cells))), p)
    if kind == "power":
        mesh = Mesh(num_cells, 1.0 / num_cells)
        # sigma = w^(1-p') is integrable iff gamma < p - 1
        gamma = rng.uniform(-0.9, 0.9 * (p - 1))
        s = int(rng.integers(0, num_cells + 1)) / num_cells
        return analytic_pair(build_power_pieces(mesh, [PowerSpec(gamma, s)]), p)
    if kind == "wdelta":
        if not p > 2:
            raise ValueError("wdelta instances need p > 2")
        lo = 1 / p + 0.01
        alpha = rng.uniform(lo, 0.49)
        delta = 2.0 ** -rng.uniform(2, 6)
        return example_wdelta(p, delta, alpha, num_cells)
    raise ValueError(f"unknown corpus kind {kind!r}")


def random_corpus(seed: int, size: int, kind: str = "mixed", num_cells: int = 64, p: float = 2.0) -> list[WeightPair]:
    """Reproducible weight pairs. ``mixed`` cycles through the kinds valid at p."""
    rng = np.random.default_rng(seed)
    kinds = [kind] if kind != "mixed" else ["loguniform", "power"] + (["wdelta"] if p > 2 else [])
    return [random_pair(rng, kinds[i % len(kinds)], num_cells, p) for i in range(size)]


def random_weighted_family(rng: np.random.Generator, num_cells: int, p: float = 2.0) -> WeightedFamily:
    """A principal-cube family of a heavy-tailed random function, with a
    random-walk measure and coefficients balanced against it up to a factor
    e^(+-1/2)."""
    mesh = Mesh(num_cells)
    f = np.exp(rng.standard_cauchy(num_cells).clip(-30, 30) * 0.7)
    S = build_sparse(CellFunction(mesh, f))
    nu = from_cell_averages(mesh, np.exp(np.cumsum(rng.normal(0, 0.4, num_cells))))
    coef = {}
    for q in S.cubes:
        dens = nu.average(q)
        coef[q] = dens ** (-1 / p) * math.exp(rng.uniform(-0.5, 0.5))
    return WeightedFamily(mesh, coef, nu, p=p)
