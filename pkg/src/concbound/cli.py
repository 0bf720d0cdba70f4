"""Command-line front end: analyze-prr, analyze-loop, simulate, verify, report."""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

from . import __version__
from .errors import ConcboundError, Infeasible, TrivialBound
from .expr import LinLogExpr, eval_linlog, parse_linlog
from .loop_model import LoopSpec, parse_loop_spec
from .loop_synth import derive_loop_bound, loop_report
from .oracle import LOOP_TRIALS, PRR_TRIALS, dominance_rows, estimate_tail, overall, write_csv
from .prr_model import SYMBOLIC, PrrSpec, parse_prr_spec
from .prr_synth import (
    CSTAR_RTOL,
    derive_bound,
    eval_bound,
    prr_report,
    verify_condition_numeric,
)
from .tomlio import load_toml

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WEAK = 2  # trivial bound, infeasible synthesis, violated condition, failed dominance


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def bundled_names() -> list:
    root = resources.files("concbound") / "benchmarks"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def read_input(name: str) -> bytes:
    """A path on disk, else a bundled benchmark name (with or without .toml)."""
    p = Path(name)
    if p.is_file():
        return p.read_bytes()
    stem = name[:-5] if name.endswith(".toml") else name
    res = resources.files("concbound") / "benchmarks" / f"{stem.lower()}.toml"
    if res.is_file():
        return res.read_bytes()
    raise UsageError(f"no such file or bundled benchmark: {name!r} (bundled: {', '.join(bundled_names())})")


def load_model(name: str):
    data = read_input(name)
    doc = load_toml(data)
    if "prr" in doc:
        return parse_prr_spec(data)
    if "loop" in doc:
        return parse_loop_spec(data)
    raise UsageError("input has neither a [prr] nor a [loop] section")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {v}")
    return v


def _kappas_prr(text: Optional[str]) -> Optional[list]:
    return None if text is None else [parse_linlog(t) for t in text.split(",") if t.strip()]


def _kappas_loop(text: Optional[str]) -> Optional[list]:
    if text is None:
        return None
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"loop kappas must be numbers, got {text!r}") from None


def _init(text: Optional[str], spec: LoopSpec):
    if not text:
        return None
    mapping = {}
    for part in text.split(","):
        k, _, v = part.partition("=")
        mapping[k.strip()] = v.strip()
    return spec.valuation(mapping)


def _emit_json(obj, path: Optional[str], out) -> None:
    text = json.dumps(obj, indent=2, default=str) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        out.write(text)


def _emit_csv(rows, path: Optional[str], out) -> None:
    buf = io.StringIO()
    write_csv(rows, buf)
    if path:
        Path(path).write_text(buf.getvalue())
    else:
        out.write(buf.getvalue())


def _with_nstar(spec: PrrSpec, nstar: Optional[int]) -> PrrSpec:
    return spec if nstar is None else spec.with_nstar(nstar)


def _default_loop_kappas(eta0: float) -> list:
    base = max(1.0, math.ceil(eta0))
    return [base * k for k in (2, 4, 8, 16)]


# ---------------------------------------------------------------------------
# commands


def cmd_analyze_prr(args, out) -> int:
    spec = load_model(args.spec)
    if not isinstance(spec, PrrSpec):
        raise UsageError("analyze-prr needs a [prr] spec; use analyze-loop for loops")
    spec = _with_nstar(spec, args.nstar)
    kappa = spec.kappa
    if args.kappa:
        ks = _kappas_prr(args.kappa)
        if len(ks) != 1:
            raise UsageError("analyze-prr takes a single kappa expression")
        kappa = ks[0]
    bound = derive_bound(spec, B=args.B, rtol=args.tol)
    _emit_json(prr_report(bound, kappa), args.json, out)
    return EXIT_OK if bound.status == "BOUND" else EXIT_WEAK


def cmd_analyze_loop(args, out) -> int:
    spec = load_model(args.spec)
    if not isinstance(spec, LoopSpec):
        raise UsageError("analyze-loop needs a [loop] spec; use analyze-prr for recurrences")
    init = _init(args.init, spec)
    try:
        lb = derive_loop_bound(spec, init)
    except Infeasible as exc:
        _emit_json({"name": spec.name, "status": "INFEASIBLE", "reason": str(exc)}, args.json, out)
        return EXIT_WEAK
    kappas = _kappas_loop(args.kappa) or _default_loop_kappas(float(lb.eta0))
    evals = []
    if args.trials:
        ests = estimate_tail(spec, init, kappas, args.trials, args.seed)
        for k, e in zip(kappas, ests):
            evals.append({"kappa": k, "bound": lb.at(k), "empirical": e.point, "ci_upper": e.wilson_upper_99})
    else:
        evals = [{"kappa": k, "bound": lb.at(k), "empirical": None, "ci_upper": None} for k in kappas]
    _emit_json(loop_report(lb, evals), args.json, out)
    return EXIT_OK


def _prr_bounds(spec: PrrSpec, kappas, nstar: int, B, tol, err) -> list:
    try:
        bound = derive_bound(spec, B=B, rtol=tol)
    except (ConcboundError, TrivialBound) as exc:
        err.write(f"note: no bound derived ({type(exc).__name__}: {exc}); using the trivial bound 1\n")
        return [1.0] * len(kappas)
    return [eval_bound(bound, k, nstar) for k in kappas]


def cmd_simulate(args, out, err) -> int:
    spec = load_model(args.spec)
    if isinstance(spec, PrrSpec):
        nstar = args.nstar if args.nstar is not None else (None if spec.nstar == SYMBOLIC else int(spec.nstar))
        if nstar is None:
            raise UsageError("simulate needs --nstar for a symbolic recurrence")
        kexprs = _kappas_prr(args.kappa) or [spec.kappa]
        kappas = [eval_linlog(k, nstar) for k in kexprs]
        trials = args.trials or PRR_TRIALS
        bounds = _prr_bounds(spec.with_nstar(nstar), kexprs, nstar, args.B, args.tol, err)
        ests = estimate_tail(spec, nstar, kappas, trials, args.seed)
    else:
        init = _init(args.init, spec)
        trials = args.trials or LOOP_TRIALS
        try:
            lb = derive_loop_bound(spec, init)
        except Infeasible as exc:
            err.write(f"note: no bound derived ({exc}); using the trivial bound 1\n")
            lb = None
        kappas = _kappas_loop(args.kappa) or _default_loop_kappas(float(lb.eta0) if lb else 10.0)
        bounds = [lb.at(k) if lb else 1.0 for k in kappas]
        ests = estimate_tail(spec, init, kappas, trials, args.seed)
        capped = ests[0].capped if ests else 0
        if capped:
            err.write(f"note: {capped} trials hit the iteration cap and are excluded from hits\n")
    rows = dominance_rows(bounds, ests)
    _emit_csv(rows, args.csv, out)
    return EXIT_WEAK if overall([r["verdict"] for r in rows]) == "FAIL" else EXIT_OK


def cmd_verify(args, out) -> int:
    spec = load_model(args.spec)
    if not isinstance(spec, PrrSpec):
        raise UsageError("verify applies to [prr] specs")
    spec = _with_nstar(spec, args.nstar)
    nmax = args.nmax
    if nmax is None:
        if spec.nstar == SYMBOLIC:
            raise UsageError("verify needs --nmax or a concrete n*")
        nmax = int(spec.nstar)
    res = verify_condition_numeric(spec, args.alpha, nmax)
    rep = {"name": spec.name, "alpha": args.alpha, "alpha_value": res.alpha, "n_max": res.n_max,
           "verdict": "HOLDS" if res.holds else "VIOLATED", "first_violation": res.first_violation,
           "min_log_margin": res.min_margin}
    _emit_json(rep, args.json, out)
    return EXIT_OK if res.holds else EXIT_WEAK


def cmd_report(args, out, err) -> int:
    names = args.names or bundled_names()
    summary = []
    for name in names:
        spec = load_model(name)
        row = {"benchmark": name}
        try:
            if isinstance(spec, PrrSpec):
                b = derive_bound(spec, B=args.B, rtol=args.tol)
                rep = prr_report(b)
                row.update(kind="prr", status=rep["status"], cstar=rep["cstar"], B_used=rep["B_used"],
                           bound_formula=rep["bound_formula"], reason=rep.get("reason"))
            else:
                lb = derive_loop_bound(spec)
                row.update(kind="loop", status="BOUND", eta=str(lb.rsm), K=str(lb.rsm.K), alpha=lb.alpha,
                           beta=lb.beta, bound_formula=lb.formula())
        except ConcboundError as exc:
            row.update(status="ERROR" if not isinstance(exc, Infeasible) else "INFEASIBLE",
                       reason=f"{type(exc).__name__}: {exc}")
        summary.append(row)
    _emit_json({"version": __version__, "benchmarks": summary}, args.json, out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="concbound", description="Exponential tail bounds for randomised recurrences and loops.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, json_out=True, csv_out=False):
        sp.add_argument("spec", help="spec file path or bundled benchmark name")
        if json_out:
            sp.add_argument("--json", metavar="PATH", help="write the JSON report here instead of stdout")
        if csv_out:
            sp.add_argument("--csv", metavar="PATH", help="write the CSV here instead of stdout")

    a = sub.add_parser("analyze-prr", help="derive a tail bound for a recurrence")
    common(a)
    a.add_argument("--B", type=_positive_int, default=None, help="block size for the sum over-approximation (default: auto)")
    a.add_argument("--tol", type=float, default=CSTAR_RTOL, help=f"relative precision of c* (default {CSTAR_RTOL})")
    a.add_argument("--nstar", type=_positive_int, default=None, help="concrete instance size (default: from file, else symbolic)")
    a.add_argument("--kappa", default=None, help="threshold expression in n, e.g. '12*n' (default: from file)")

    lp = sub.add_parser("analyze-loop", help="derive a tail bound for a loop")
    common(lp)
    lp.add_argument("--kappa", default=None, help="comma-separated iteration thresholds (default: multiples of eta(init))")
    lp.add_argument("--init", default=None, help="initial valuation override, e.g. 'x=10,y=0'")
    lp.add_argument("--trials", type=_nonneg_int, default=0, help="also estimate tails with this many trials (default 0: skip)")
    lp.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")

    s = sub.add_parser("simulate", help="Monte Carlo tails against the derived bound")
    common(s, json_out=False, csv_out=True)
    s.add_argument("--trials", type=_positive_int, default=None,
                   help=f"number of trials (default {PRR_TRIALS} for recurrences, {LOOP_TRIALS} for loops)")
    s.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    s.add_argument("--kappa", default=None, help="comma-separated thresholds (expressions in n for recurrences)")
    s.add_argument("--nstar", type=_positive_int, default=None, help="instance size for recurrences")
    s.add_argument("--init", default=None, help="initial valuation override for loops")
    s.add_argument("--B", type=_positive_int, default=None, help="block size passed to the bound derivation")
    s.add_argument("--tol", type=float, default=CSTAR_RTOL, help="relative precision of c*")

    v = sub.add_parser("verify", help="check the recurrence condition numerically for one alpha")
    common(v)
    v.add_argument("--alpha", required=True, help="alpha value or expression, e.g. '2.3^(1/nstar)'")
    v.add_argument("--nmax", type=_nonneg_int, default=None, help="largest n to check (default n*)")
    v.add_argument("--nstar", type=_positive_int, default=None, help="value substituted for nstar in --alpha")

    r = sub.add_parser("report", help="summarise analyses for bundled or given benchmarks")
    r.add_argument("names", nargs="*", help="benchmarks (default: all bundled)")
    r.add_argument("--json", metavar="PATH", help="write the JSON summary here instead of stdout")
    r.add_argument("--B", type=_positive_int, default=None, help="block size override for recurrences")
    r.add_argument("--tol", type=float, default=CSTAR_RTOL, help="relative precision of c*")
    return p


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "analyze-prr":
            return cmd_analyze_prr(args, out)
        if args.command == "analyze-loop":
            return cmd_analyze_loop(args, out)
        if args.command == "simulate":
            return cmd_simulate(args, out, err)
        if args.command == "verify":
            return cmd_verify(args, out)
        return cmd_report(args, out, err)
    except UsageError as exc:
        err.write(f"usage error: {exc}\n")
        return EXIT_ERROR
    except (ConcboundError, ValueError, OverflowError, OSError) as exc:
        err.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
