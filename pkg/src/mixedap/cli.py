"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 numeric or validation failure.
Every document written echoes the resolved configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import characteristics as ch
from .corona import CoronaError, WeightedFamily, check_stopping_structure, corona_decompose, verify_corona_bound
from .experiments import (DEFAULT_BOUNDS, SlopeError, SweepConfig, SweepError, SweepReport,
                          random_weighted_family, run_sweep, testing_families)
from .mesh import Cube, Mesh, MeshError
from .operators import (CellFunction, SparseError, SparseFamily, build_sparse, dyadic_maximal,
                        geometric_maximal, maximal_mesh, sparse_M, sparse_T, weighted_dyadic_maximal)
from .testing import norm_estimate, testing_M, testing_T
from .verify import SUITES, run_suites
from .weights import (PowerSpec, WeightError, WeightPair, analytic_pair, build_power_pieces, dual_pair,
                      example_wdelta, from_cell_averages, uniform, weight_from_csv, weight_from_json)


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# parsing helpers --------------------------------------------------------------------

def _kv(text: str) -> dict:
    out = {}
    for part in filter(None, text.split(",")):
        if "=" not in part:
            raise UsageError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _domain(args) -> Mesh:
    a, b = (float(x) for x in args.domain.split(","))
    if not b > a:
        raise UsageError("--domain needs a < b")
    return Mesh(args.cells, (b - a) / args.cells, a)


def _load_weight(spec: str, args, p: Optional[float] = None):
    """A Weight, or a WeightPair for the wdelta example."""
    kind, _, rest = spec.partition(":")
    if kind == "uniform":
        c = float(_kv(rest).get("c", 1.0))
        return uniform(_domain(args), c)
    if kind == "cells":
        vals = [float(x) for x in rest.split(",")]
        n = len(vals)
        if n & (n - 1):
            raise UsageError("cells: needs a power-of-two number of values")
        a, b = (float(x) for x in args.domain.split(","))
        return from_cell_averages(Mesh(n, (b - a) / n, a), vals)
    if kind == "power":
        kv = _kv(rest)
        lo, hi = float(kv.get("lo", -math.inf)), float(kv.get("hi", math.inf))
        spec_ = PowerSpec(float(kv["gamma"]), float(kv.get("s", 0.0)), (lo, hi))
        return build_power_pieces(_domain(args), [spec_])
    if kind == "file":
        text = Path(rest).read_text()
        if rest.endswith(".csv"):
            a, b = (float(x) for x in args.domain.split(","))
            n = len(text.strip().splitlines()) - 1
            return weight_from_csv(text, (b - a) / n, a)
        return weight_from_json(text)
    if kind == "wdelta":
        kv = _kv(rest)
        if p is None:
            raise UsageError("wdelta weights need --p")
        return example_wdelta(p, float(kv["delta"]), float(kv.get("alpha", 0.4)), args.cells)
    if kind == "random":
        rng = np.random.default_rng(args.seed)
        return from_cell_averages(_domain(args), np.exp(rng.uniform(-3, 3, args.cells)))
    raise UsageError(f"unknown weight kind {kind!r} (uniform, cells, power, file, wdelta, random)")


def _pair(args) -> WeightPair:
    w = _load_weight(args.weight, args, args.p)
    if isinstance(w, WeightPair):
        return w
    if args.duality == "analytic" or (args.duality == "auto" and w.is_analytic):
        return analytic_pair(w, args.p)
    return dual_pair(w, args.p)


def _values(spec: str, args) -> CellFunction:
    w = _load_weight(spec, args)
    return CellFunction(w.mesh, w.averages)


def _cube(text: str) -> Cube:
    try:
        k, m = text.split(":")
        return Cube(int(k), int(m))
    except ValueError:
        raise UsageError(f"cube must be level:offset, got {text!r}") from None


def _load_family(path: str, mesh: Mesh) -> SparseFamily:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data["family"]
    return SparseFamily.from_json(mesh, json.dumps(data))


def _exps(text: str) -> tuple[int, ...]:
    if ".." in text:
        a, b = text.split("..")
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(x) for x in text.split(","))


# output ---------------------------------------------------------------------------

def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def _emit(args, doc: dict, table_rows: Optional[list] = None, csv_rows: Optional[tuple] = None):
    """Write ``doc`` (with config) in the requested format to --out or stdout."""
    fmt = args.format
    doc = {"config": _config(args), **doc}
    if fmt == "json":
        text = json.dumps(doc, indent=1) + "\n"
    elif fmt == "csv":
        header, rows = csv_rows if csv_rows else (list(k for k in doc if k != "config"), [[doc[k] for k in doc if k != "config"]])
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(doc["config"], sort_keys=True) + "\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([("%.12g" % x) if isinstance(x, float) else x for x in r])
        text = buf.getvalue()
    else:
        lines = ["config: " + " ".join(f"{k}={v}" for k, v in doc["config"].items())]
        for k, v in (table_rows or [(k, v) for k, v in doc.items() if k != "config"]):
            lines.append(f"{k:>24}  {v}")
        text = "\n".join(lines) + "\n"
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# subcommands ------------------------------------------------------------------------

def _spec_from_args(args) -> ch.FlavorSpec:
    if args.kind == "mixed":
        if not args.mix:
            raise UsageError("--kind mixed needs --mix kind:exp[,kind:exp[:r]]")
        terms = []
        for part in args.mix.split(","):
            bits = part.split(":")
            terms.append((bits[0], float(bits[1]), *(float(x) for x in bits[2:])))
        return ch.FlavorSpec.mixed(*terms, dual=args.dual)
    return ch.FlavorSpec.single(args.kind, r=args.r, dual=args.dual)


def cmd_constants(args):
    pair = _pair(args)
    if args.kind == "bound":
        if not args.bound:
            raise UsageError("--kind bound needs --bound ID")
        params = {k: v for k, v in (("r", args.r), ("q", args.q)) if v is not None}
        vals = ch.bound_values(pair, args.bound.split(","), params, None if args.scope == "default" else ch.Scope(args.scope))
        _emit(args, {"bounds": vals}, list(vals.items()), (list(vals), [list(vals.values())]))
        return 0
    scope = None if args.scope == "default" else ch.Scope(args.scope)
    res = ch.global_sup(pair, _spec_from_args(args), scope)
    d = res.as_dict()
    _emit(args, d, None, (["value", "argmax_start", "argmax_end", "scope"],
                          [[res.value, res.argmax.start, res.argmax.end, res.scope.value]]))
    return 0


def cmd_operators(args):
    f = _values(args.f, args)
    op = args.op
    if op == "maximal":
        g = maximal_mesh(f)
    elif op == "dyadic":
        g = dyadic_maximal(f)
    elif op == "weighted":
        if not args.weight:
            raise UsageError("--op weighted needs --weight")
        g = weighted_dyadic_maximal(f, _load_weight(args.weight, args))
    elif op == "geometric":
        g = geometric_maximal(f, ch.Scope(args.scope))
    else:
        if args.family:
            S = _load_family(args.family, f.mesh)
        else:
            S = build_sparse(f, args.tau)
        if op == "sparse_M":
            g = sparse_M(S, f)
        else:
            g = sparse_T(S, f, _cube(args.restrict) if args.restrict else None)
    vals = [float(x) for x in g.values]
    _emit(args, {"values": vals}, list(enumerate(vals)),
          (["cell_index", "value"], [[i, v] for i, v in enumerate(vals)]))
    return 0


def cmd_sparse(args):
    f = _values(args.f, args)
    S = build_sparse(f, args.tau, _cube(args.root) if args.root else None)
    fam = json.loads(S.to_json())
    cert = [{"cube": q.key(), "size": s, "covered": c} for q, s, c in S.packing_certificate()]
    _emit(args, {"family": fam, "packing": cert}, [(q.key(), f"|Q|={s} covered={c}") for q, s, c in S.packing_certificate()],
          (["level", "offset", "size", "covered"], [[q.level, q.offset, s, c] for q, s, c in S.packing_certificate()]))
    return 0


def cmd_corona(args):
    if args.input:
        data = json.loads(Path(args.input).read_text())
        nu = weight_from_json(json.dumps(data["nu"]))
        coef = {Cube(int(d["level"]), int(d["offset"])): float(d["a"]) for d in data["cubes"]}
        fam = WeightedFamily(nu.mesh, coef, nu, p=args.p, c=data.get("c"), C=data.get("C"), r=data.get("r"))
    else:
        fam = random_weighted_family(np.random.default_rng(args.seed), args.cells, args.p)
    res = corona_decompose(fam)
    problems = check_stopping_structure(fam, res)
    bound = verify_corona_bound(fam, res, args.p)
    doc = {"corona": json.loads(res.to_json()), "c": fam.c, "C": fam.C, "r": fam.r,
           "lhs": bound.lhs, "rhs": bound.rhs, "ratio": bound.ratio, "violations": problems}
    _emit(args, doc, [("generations", [len(g) for g in res.generations]), ("lhs", bound.lhs),
                      ("rhs", bound.rhs), ("ratio", bound.ratio), ("violations", len(problems))],
          (["generation", "level", "offset"], [[k, q.level, q.offset] for k, g in enumerate(res.generations) for q in g]))
    if problems:
        raise ValidationFailure("; ".join(problems[:5]))
    return 0


def cmd_testing(args):
    pair = _pair(args)
    if args.family:
        S_fwd = S_dual = _load_family(args.family, pair.mesh)
    else:
        S_fwd, S_dual = testing_families(pair, args.tau)
    fwd = testing_T(S_fwd, pair, "forward")
    dual = testing_T(S_dual, pair, "dual")
    doc = {"testing_fwd": fwd.as_dict(), "testing_dual": dual.as_dict()}
    rows = [("testing_fwd", fwd.value), ("testing_dual", dual.value)]
    if args.maximal:
        m = testing_M(pair)
        doc["testing_M"] = m.as_dict()
        rows.append(("testing_M", m.value))
    if args.norm:
        est = norm_estimate(S_fwd, pair, "restarts", k=args.restarts, seed=args.seed)
        doc["norm_lower_bound"] = est.lower_bound
        doc["norm_converged"] = est.converged
        rows.append(("norm_lower_bound", est.lower_bound))
    _emit(args, doc, rows, (["quantity", "value"], [[k, v] for k, v in rows]))
    return 0


def cmd_sweep(args):
    params = {k: v for k, v in (("r", args.r), ("q", args.q)) if v is not None}
    bounds = tuple(args.bounds.split(",")) if args.bounds else (DEFAULT_BOUNDS if args.example == "wdelta" else ())
    cfg = SweepConfig(p=args.p, alpha=args.alpha, delta_exps=_exps(args.delta_exps), num_cells=args.cells,
                      bound_ids=bounds, params=params, seed=args.seed, refine=not args.no_refine,
                      tau=args.tau, example=args.example)
    print("config: " + json.dumps(_config(args), sort_keys=True), file=sys.stderr)
    rep = run_sweep(cfg)
    if args.out:
        out = Path(args.out)
        out.write_text(rep.to_csv())
        out.with_suffix(".json").write_text(rep.to_json() + "\n")
    else:
        sys.stdout.write(rep.to_csv() if args.format == "csv" else rep.to_json() + "\n")
    for name, s in rep.slopes.items():
        print(f"slope {name}: {s['slope']:.4f} (r2 {s['r2']:.4f})", file=sys.stderr)
    if rep.flags:
        for fl in rep.flags:
            print(f"mesh guard: delta={fl['delta']:g} {fl['quantity']} moved {fl['change']:.2%} on refinement",
                  file=sys.stderr)
        raise ValidationFailure(f"mesh-convergence guard tripped on {len(rep.flags)} quantities")
    return 0


def cmd_verify(args):
    names = args.suite.split(",")
    try:
        results = run_suites(names, args.seed, args.size)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    _emit(args, {"suites": [r.as_dict() for r in results]}, [(r.name, r.line()) for r in results],
          (["suite", "passed", "checks", "worst"], [[r.name, r.passed, r.checks, r.worst] for r in results]))
    if not all(r.passed for r in results):
        raise ValidationFailure("failed: " + ",".join(r.name for r in results if not r.passed))
    return 0


def cmd_report(args):
    data = json.loads(Path(args.input).read_text())
    rep = SweepReport(data["config"], data["columns"], data["rows"], data["slopes"], data["flags"])
    expect = {}
    for item in args.expect or []:
        name, _, rng = item.partition("=")
        lo, _, hi = rng.partition(":")
        expect[name] = (float(lo) if lo else None, float(hi) if hi else None)
    rows, failed = [], []
    for name, s in rep.slopes.items():
        status = ""
        if name in expect:
            lo, hi = expect[name]
            try:
                rep.assert_slope(name, lower=lo, upper=hi)
                status = "ok"
            except SlopeError as exc:
                status, _ = f"FAIL {exc}", failed.append(name)
        nflag = sum(1 for f in rep.flags if f["quantity"] == name)
        rows.append((name, f"slope={s['slope']:.6g} r2={s['r2']:.6g} flagged_rows={nflag} {status}".rstrip()))
    _emit(args, {"slopes": rep.slopes, "flags": rep.flags, "failed": failed}, rows,
          (["quantity", "slope", "r2"], [[n, s["slope"], s["r2"]] for n, s in rep.slopes.items()]))
    if failed:
        raise ValidationFailure("slope expectations failed: " + ",".join(failed))
    return 0


# parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    top = _Parser(prog="mixedap", description="Weight characteristics, sparse operators and sweeps.",
                  formatter_class=fmt)
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, formats=("json", "csv", "table"), default="json"):
        p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
        p.add_argument("--threads", type=int, default=None, help="numba thread count")
        p.add_argument("--format", choices=formats, default=default, help="output format")
        p.add_argument("--out", default=None, help="output path (stdout when omitted)")

    def weight_opts(p, need_weight=True):
        p.add_argument("--weight", required=need_weight, default=None,
                       help="uniform:c=C | cells:v0,v1,... | power:gamma=G,s=S[,lo=A,hi=B] | file:PATH | wdelta:delta=D,alpha=A | random:")
        p.add_argument("--domain", default="0,1", help="universe a,b")
        p.add_argument("--cells", type=int, default=1024, help="number of cells (power of two)")
        p.add_argument("--p", type=float, default=2.0, help="exponent p")
        p.add_argument("--duality", choices=("auto", "discrete", "analytic"), default="auto",
                       help="how sigma is built from w")

    p = sub.add_parser("constants", help="global characteristics and bound values", formatter_class=fmt)
    weight_opts(p)
    p.add_argument("--kind", choices=("ap", "a1", "ar", "ainf_exp", "ainf_fw", "mixed", "bound"), default="ap")
    p.add_argument("--mix", default=None, help="mixed factors kind:exp[:r],...")
    p.add_argument("--bound", default=None, help="bound id(s): " + ",".join(ch.BOUND_IDS))
    p.add_argument("--r", type=float, default=None, help="A_r parameter")
    p.add_argument("--q", type=float, default=None, help="q for mixed-pq")
    p.add_argument("--dual", action="store_true", help="evaluate on sigma at p'")
    p.add_argument("--scope", choices=("default", "all", "dyadic"), default="default")
    common(p)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("operators", help="apply a maximal or sparse operator", formatter_class=fmt)
    weight_opts(p, need_weight=False)
    p.add_argument("--f", required=True, help="function, same syntax as --weight")
    p.add_argument("--op", choices=("maximal", "dyadic", "weighted", "geometric", "sparse_M", "sparse_T"),
                   default="maximal")
    p.add_argument("--scope", choices=("all", "dyadic"), default="all", help="scope of the geometric operator")
    p.add_argument("--family", default=None, help="sparse family JSON (default: principal cubes of f)")
    p.add_argument("--tau", type=float, default=4.0)
    p.add_argument("--restrict", default=None, help="level:offset of R for sparse_T")
    common(p, default="csv")
    p.set_defaults(func=cmd_operators)

    p = sub.add_parser("sparse", help="principal-cube sparse family of f", formatter_class=fmt)
    weight_opts(p, need_weight=False)
    p.add_argument("--f", required=True, help="function, same syntax as --weight")
    p.add_argument("--tau", type=float, default=4.0)
    p.add_argument("--root", default=None, help="level:offset (default: top cube)")
    common(p)
    p.set_defaults(func=cmd_sparse)

    p = sub.add_parser("corona", help="corona decomposition of a weighted cube family", formatter_class=fmt)
    p.add_argument("--input", default=None,
                   help="JSON {cubes: [{level, offset, a}], nu: weight JSON, c?, C?, r?}; random family when omitted")
    p.add_argument("--cells", type=int, default=256, help="cells of the random family")
    p.add_argument("--p", type=float, default=2.0)
    common(p)
    p.set_defaults(func=cmd_corona)

    p = sub.add_parser("testing", help="testing constants and norm lower bound", formatter_class=fmt)
    weight_opts(p)
    p.add_argument("--family", default=None, help="sparse family JSON (default: principal cubes of sigma / w)")
    p.add_argument("--tau", type=float, default=4.0)
    p.add_argument("--maximal", action="store_true", help="also compute the maximal testing constant")
    p.add_argument("--norm", action="store_true", help="also estimate the operator norm")
    p.add_argument("--restarts", type=int, default=16)
    common(p)
    p.set_defaults(func=cmd_testing)

    p = sub.add_parser("sweep", help="delta sweep with slope fits", formatter_class=fmt)
    p.add_argument("--example", choices=("wdelta", "observation"), default="wdelta")
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--delta-exps", default="4..12", help="k values, delta = 2^-k (a..b or list)")
    p.add_argument("--cells", type=int, default=1 << 14)
    p.add_argument("--bounds", default=None, help="bound ids (default: " + ",".join(DEFAULT_BOUNDS) + ")")
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--tau", type=float, default=4.0)
    p.add_argument("--no-refine", action="store_true", help="skip the mesh-doubling guard")
    common(p, formats=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="randomized property suites", formatter_class=fmt)
    p.add_argument("--suite", default=",".join(SUITES), help="comma list of: " + ",".join(SUITES))
    p.add_argument("--size", type=int, default=100, help="instances per suite")
    common(p, default="table")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="summarize a sweep JSON", formatter_class=fmt)
    p.add_argument("--input", required=True, help="sweep JSON written by `sweep --out`")
    p.add_argument("--expect", action="append", help="NAME=LO:HI slope window (repeatable)")
    common(p, default="table")
    p.set_defaults(func=cmd_report)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads:
            import numba
            numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ValidationFailure, SlopeError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 2
    except (WeightError, MeshError, SparseError, CoronaError, SweepError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
