"""Automated synthesis of tail bounds for single-call recurrences.

Pipeline (each stage only strengthens the condition it receives):

1. ``gen_condition``: alpha**f(n) >= alpha**a(n) * E[alpha**f~(h)] for 2 <= n <= n*.
2. ``overapprox_sums``: replace index sums by integrals (f = q*n or q*ln n)
   or by a B-block right-endpoint bound.
3. ``substitute_simplify``: set c = alpha**g(n), round the residual
   n-dependence away and return a PsiExpr psi with psi(c) >= 0 sufficient.
4. ``prove_separable`` + ``find_cstar``: psi >= 0 exactly on [1, c*].
5. ``solve_alpha``: alpha = c***(1/g(n*)), giving Pr[T(n*) >= kappa] <= alpha**(f(n*) - kappa).

Here f~ is f with f~(0) = f~(1) = 0, the cost of leaf children.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .errors import (
    KappaBelowF,
    NotReducible,
    SpecSyntaxError,
    TrivialBound,
    UnsupportedShape,
)
from .expr import (
    Basis,
    LinLogExpr,
    PsiExpr,
    basis_value,
    eval_linlog,
    format_number,
    leading_term,
    psi_at_one,
    psi_derive,
    psi_sign,
    psi_simplify_divide,
)
from .prr_model import PrrSpec, ShapeKind, SYMBOLIC

# tolerances pinned for the whole pipeline
CSTAR_RTOL = 1e-6
CSTAR_MAX_ITER = 200
CSTAR_CAP = 2.0**60
B_SCHEDULE = (2, 4, 8, 16, 32, 64)
AT_ONE_ATOL = 1e-12  # psi(1) within this (relative to sum |mu|) counts as zero
VERIFY_RTOL = 1e-12
VERIFY_NMAX = 100_000
MAX_PROOF_DEPTH = 64

LINEAR = "integral-linear"
LOG = "integral-log"
BLOCK = "block"

EVAL_AT_ONE = "EVAL_AT_ONE"
STRICT_DECREASING = "STRICT_DECREASING"
RECURSE_DERIVATIVE = "RECURSE_DERIVATIVE"
SIMPLIFY_DIVIDE = "SIMPLIFY_DIVIDE"


# ---------------------------------------------------------------------------
# condition terms


@dataclass(frozen=True)
class RangeSum:
    """(weight/n) * sum_{i=lower}^{n-1} alpha**f~(i); lower in {"0", "ceil(n/2)", "floor(n/2)"}."""

    weight: Fraction
    lower: str

    def render(self, f: LinLogExpr) -> str:
        return f"{_w(self.weight)}(1/n)*sum_{{i={self.lower}}}^{{n-1}} alpha^({_at(f, 'i')})"


@dataclass(frozen=True)
class IntegralLinear:
    """(weight/n) * (alpha**(q*n) - alpha**(q*lo)) / (q*ln(alpha)), lo in {"n/2", "0"}."""

    weight: Fraction
    q: Fraction
    lower: str

    def render(self, f: LinLogExpr) -> str:
        q = format_number(self.q)
        lo = "1" if self.lower == "0" else f"alpha^({format_number(self.q / 2)}*n)"
        return f"{_w(self.weight)}(1/n)*(alpha^({q}*n) - {lo})/({q}*ln(alpha))"


@dataclass(frozen=True)
class IntegralPower:
    """(weight/n) * (n**(s+1) - lo**(s+1))/(s+1) with s = q*ln(alpha); lo in {"n/2", "1"}.

    For lo = "1" the i = 0 summand (value 1) is carried as an extra weight/n.
    """

    weight: Fraction
    q: Fraction
    lower: str

    def render(self, f: LinLogExpr) -> str:
        s = f"{format_number(self.q)}*ln(alpha)"
        if self.lower == "1":
            return f"{_w(self.weight)}(1/n)*(1 + (n^({s}+1) - 1)/({s}+1))"
        return f"{_w(self.weight)}(1/n)*(n^({s}+1) - (n/2)^({s}+1))/({s}+1)"


@dataclass(frozen=True)
class BlockSum:
    """(weight/B) * sum_j alpha**f(ratio_j * n), each block bounded by its right end."""

    weight: Fraction
    ratios: tuple

    def render(self, f: LinLogExpr) -> str:
        B = len(self.ratios)
        inner = " + ".join(f"alpha^(f({format_number(r)}*n))" for r in self.ratios)
        return f"{_w(self.weight)}(1/{B})*({inner})"


def _w(w: Fraction) -> str:
    return "" if w == 1 else f"{format_number(w)}*"


def _at(f: LinLogExpr, var: str) -> str:
    return str(f).replace("n", var).replace("li(", "ln(")


@dataclass(frozen=True)
class ConditionExpr:
    """alpha**f(n) >= alpha**toll(n) * (sum of terms), for 2 <= n <= n*."""

    f: LinLogExpr
    toll: LinLogExpr
    terms: tuple
    nstar: Union[int, str] = SYMBOLIC
    strategy: Optional[str] = None
    B: int = 0

    @property
    def sum_free(self) -> bool:
        return not any(isinstance(t, RangeSum) for t in self.terms)

    def render(self) -> str:
        rhs = " + ".join(t.render(self.f) for t in self.terms)
        return f"alpha^({self.f}) >= alpha^({self.toll}) * [{rhs}]   for 2 <= n <= n*"

    def __str__(self) -> str:
        return self.render()


def gen_condition(spec: PrrSpec) -> ConditionExpr:
    """Step 1: expected-value condition written with explicit index sums."""
    if spec.shape.kind is ShapeKind.TWOCALL_SPLIT:
        raise UnsupportedShape("two-call recurrences are supported in verify mode only")
    gamma = spec.shape.halfsplit_weight
    terms = []
    if gamma:
        terms += [RangeSum(gamma, "ceil(n/2)"), RangeSum(gamma, "floor(n/2)")]
    if gamma != 1:
        terms.append(RangeSum(1 - gamma, "0"))
    return ConditionExpr(spec.f, spec.toll, tuple(terms), spec.nstar)


def closed_form_strategy(f: LinLogExpr) -> Optional[str]:
    """Integral strategy applicable to f, if any."""
    if len(f.terms) == 1 and f.terms[0][1] > 0:
        if f.terms[0][0] is Basis.N:
            return LINEAR
        if f.terms[0][0] is Basis.LN_N:
            return LOG
    return None


def overapprox_sums(cond: ConditionExpr, B: int = 0, strategy: Optional[str] = None) -> ConditionExpr:
    """Step 2: make the condition sum-free.

    Closed-form integrals are used when f = q*n or f = q*ln(n); otherwise (or
    when ``strategy == BLOCK``) the sums are split into ``B`` blocks.  For the
    half-split pair, S(ceil(n/2)) + S(floor(n/2)) <= 2*int_{n/2}^{n}, because
    the summand is increasing.
    """
    strategy = strategy or closed_form_strategy(cond.f) or BLOCK
    half = [t for t in cond.terms if isinstance(t, RangeSum) and t.lower != "0"]
    unif = [t for t in cond.terms if isinstance(t, RangeSum) and t.lower == "0"]
    gamma = half[0].weight if half else Fraction(0)
    one_minus = unif[0].weight if unif else Fraction(0)
    terms: list = []
    if strategy in (LINEAR, LOG):
        if closed_form_strategy(cond.f) != strategy:
            raise NotReducible(f"strategy {strategy} needs a single-term f, got {cond.f}")
        q = Fraction(cond.f.terms[0][1])
        kind = IntegralLinear if strategy == LINEAR else IntegralPower
        if gamma:
            terms.append(kind(2 * gamma, q, "n/2"))
        if one_minus:
            terms.append(kind(one_minus, q, "0" if strategy == LINEAR else "1"))
        B = 0
    elif strategy == BLOCK:
        if B < 1:
            raise ValueError("block strategy needs B >= 1")
        if gamma:
            terms.append(BlockSum(gamma, tuple(Fraction(B + i, 2 * B) for i in range(1, B + 1))))
        if one_minus:
            terms.append(BlockSum(one_minus, tuple(Fraction(i, B) for i in range(1, B + 1))))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return ConditionExpr(cond.f, cond.toll, tuple(terms), cond.nstar, strategy, B)


def scaled(f: LinLogExpr, rho) -> LinLogExpr:
    """f(rho*n) rewritten in the basis (float coefficients); rho > 0."""
    rho = float(rho)
    lr = math.log(rho)
    out = []
    for b, v in f.terms:
        v = float(v)
        if b is Basis.N_LN_N:
            out += [(Basis.N_LN_N, v * rho), (Basis.N, v * rho * lr)]
        elif b is Basis.N:
            out.append((Basis.N, v * rho))
        elif b is Basis.LN_N:
            out += [(Basis.LN_N, v), (Basis.CONST, v * lr)]
        else:
            out.append((Basis.CONST, v))
    return LinLogExpr.of(out)


def twocall_block_exponents(f: LinLogExpr, B: int) -> list:
    """Block bound for the symmetric two-call summand f~(i) + f~(n-1-i).

    The summand is convex in i, so on each of the first B/2 blocks it is
    maximal at the outer endpoint i = j*n/B; by symmetry every exponent
    ``f(j*n/B) + f(n - j*n/B)`` occurs twice.  Returns (multiplicity, exponent).
    """
    if B < 2 or B % 2:
        raise ValueError("B must be even and >= 2")
    out = []
    for j in range(B // 2):
        rho = Fraction(j, B)
        left = scaled(f, rho) if rho else LinLogExpr()
        out.append((2, left + scaled(f, 1 - rho)))
    return out


def substitution_basis(cond: ConditionExpr, g: Basis) -> Basis:
    """Basis of the substituted variable: the log strategy solves for alpha itself."""
    return Basis.CONST if cond.strategy == LOG else g


def substitute_simplify(cond: ConditionExpr, g: Basis) -> PsiExpr:
    """Step 3: psi(c) >= 0, with c = alpha**g(n), implies the condition at every valid n."""
    if not cond.sum_free or cond.strategy is None:
        raise ValueError("condition still contains sums; run overapprox_sums first")
    if cond.strategy == LINEAR:
        psi = _psi_linear(cond, g)
    elif cond.strategy == LOG:
        psi = _psi_log(cond, g)
    else:
        psi = _psi_block(cond, g)
    if psi.is_zero():
        return psi
    return psi_simplify_divide(psi)


def _psi_linear(cond: ConditionExpr, g: Basis) -> PsiExpr:
    # c = alpha**n, ln c = n ln(alpha); multiply through by q ln c > 0
    if g is not Basis.N:
        raise NotReducible("linear f requires c = alpha^n")
    toll = cond.toll
    if toll.coeff(Basis.N_LN_N):
        raise NotReducible(f"toll {toll} grows faster than f = {cond.f}")
    q = float(cond.f.terms[0][1])
    # alpha**(k2 ln n + k3) <= c**(max(k2,0) + max(k3,0)) since 0 <= ln n/n, 1/n <= 1
    e = float(toll.coeff(Basis.N)) + max(float(toll.coeff(Basis.LN_N)), 0.0) + max(float(toll.coeff(Basis.CONST)), 0.0)
    s_terms = []
    for t in cond.terms:
        w = float(t.weight)
        s_terms.append((w, q, 0))
        s_terms.append((-w, q / 2 if t.lower == "n/2" else 0.0, 0))
    out = [(q, q, 1)] + [(-mu, nu + e, 0) for mu, nu, _ in s_terms]
    return PsiExpr.of(out)


def _psi_log(cond: ConditionExpr, g: Basis) -> PsiExpr:
    # variable is alpha itself; n**(q ln alpha) cancels after dividing by n**s
    if g is not Basis.LN_N:
        raise NotReducible("logarithmic f requires g = ln(n)")
    toll = cond.toll
    if any(b is not Basis.CONST for b in toll.bases()):
        raise NotReducible(f"closed form for f = q*ln(n) needs a constant toll, got {toll}")
    q = float(cond.f.terms[0][1])
    k2 = float(toll.coeff(Basis.CONST))
    low = k2 - q * math.log(2.0)
    out = [(1.0, 0.0, 0), (q, 0.0, 1)]
    for t in cond.terms:
        w = float(t.weight)
        if t.lower == "n/2":
            out += [(-w, k2, 0), (w / 2, low, 0)]
        else:
            # (1/n)(1 + s/(s+1)(...)) term: s * 2**-(s+1) bounds s / n**(s+1) for n >= 2
            out += [(-w, k2, 0), (-w * q / 2, low, 1)]
    return PsiExpr.of(out)


def _psi_block(cond: ConditionExpr, g: Basis) -> PsiExpr:
    B = cond.B
    out = [(float(B), 0.0, 0)]
    for t in cond.terms:
        for rho in t.ratios:
            expo = cond.toll + scaled(cond.f, rho) - cond.f
            out.append((-float(t.weight), _round_exponent(expo, g), 0))
    return PsiExpr.of(out)


def _round_exponent(expo: LinLogExpr, g: Basis) -> float:
    """Upper-bound alpha**expo by c**nu with c = alpha**g(n), valid once b(n)/g(n) <= 1."""
    nu = 0.0
    for b, v in expo.terms:
        v = float(v)
        if abs(v) < 1e-12:
            continue
        if b > g:
            raise NotReducible(f"exponent term {format_number(v)}*{b.text} outgrows c = alpha^{g.text}")
        if b == g:
            nu += v
        elif v > 0:
            nu += v
    return nu


def validity_floor(cond: ConditionExpr, g: Basis) -> int:
    """Smallest n for which the substituted psi is a sufficient condition."""
    if cond.strategy in (LINEAR, LOG):
        return 2
    n0 = 3 if g in (Basis.N_LN_N, Basis.LN_N) else 2
    if any(isinstance(t, BlockSum) and t.ratios[0] < Fraction(1, 2) for t in cond.terms):
        n0 = max(n0, cond.B)
    return n0


def c_value(cond: ConditionExpr, g: Basis, alpha: float, n: int) -> float:
    """Value of the substituted variable at (alpha, n)."""
    gb = substitution_basis(cond, g)
    return alpha if gb is Basis.CONST else alpha ** basis_value(gb, n)


# ---------------------------------------------------------------------------
# separability


@dataclass(frozen=True)
class TraceNode:
    expr: str
    rule: str
    verdict: str
    depth: int = 0

    def to_json(self) -> dict:
        return {"expr": self.expr, "rule": self.rule, "verdict": self.verdict, "depth": self.depth}


@dataclass(frozen=True)
class SeparabilityTrace:
    nodes: tuple
    success: bool
    unbounded: bool = False  # psi never turns negative
    max_depth: int = 0

    def to_json(self) -> list:
        return [n.to_json() for n in self.nodes]


def _scale(psi: PsiExpr) -> float:
    return sum(abs(t.mu) for t in psi.terms) or 1.0


def _mono_dec(s: PsiExpr, nodes: list, depth: int) -> bool:
    """Syntactic proof that s is strictly decreasing on [1, inf)."""
    if depth > MAX_PROOF_DEPTH:
        return False
    d = psi_derive(s)
    if d.is_zero():
        return False
    ds = psi_simplify_divide(d)
    if all(t.mu < 0 for t in ds.terms):
        nodes.append(TraceNode(str(ds), STRICT_DECREASING, "derivative has only negative terms", depth))
        return True
    at1 = psi_at_one(ds)
    if at1 <= AT_ONE_ATOL * _scale(ds) and _mono_dec(ds, nodes, depth + 1):
        nodes.append(TraceNode(str(ds), STRICT_DECREASING, f"derivative is decreasing and {at1:.6g} <= 0 at c=1", depth))
        return True
    return False


def _prove(psi: PsiExpr, nodes: list, depth: int) -> tuple:
    """Returns (separable, never_negative)."""
    if depth > MAX_PROOF_DEPTH:
        nodes.append(TraceNode(str(psi), RECURSE_DERIVATIVE, "FAIL: depth limit", depth))
        return False, False
    if psi.is_zero():
        nodes.append(TraceNode("0", EVAL_AT_ONE, "identically zero, nonnegative everywhere", depth))
        return True, True
    s = psi_simplify_divide(psi)
    if s != psi:
        nodes.append(TraceNode(str(psi), SIMPLIFY_DIVIDE, str(s), depth))
    at1 = psi_at_one(s)
    if at1 < -AT_ONE_ATOL * _scale(s):
        nodes.append(TraceNode(str(s), EVAL_AT_ONE, f"FAIL: value {at1:.6g} < 0 at c=1", depth))
        return False, False
    nodes.append(TraceNode(str(s), EVAL_AT_ONE, f"value {at1:.6g} >= 0 at c=1", depth))
    sub: list = []
    if _mono_dec(s, sub, depth + 1):
        nodes.extend(reversed(sub))
        return True, False
    nodes.append(TraceNode(str(s), RECURSE_DERIVATIVE, "not syntactically decreasing; recurse on derivative", depth))
    return _prove(psi_derive(s), nodes, depth + 1)


def prove_separable(psi: PsiExpr) -> SeparabilityTrace:
    """Prove psi(1) >= 0 and that psi changes sign at most once on [1, inf)."""
    nodes: list = []
    ok, unbounded = _prove(psi, nodes, 0)
    return SeparabilityTrace(tuple(nodes), ok, unbounded, max(n.depth for n in nodes))


def find_cstar(psi: PsiExpr, trace: SeparabilityTrace, rtol: float = CSTAR_RTOL,
               max_iter: int = CSTAR_MAX_ITER, cap: float = CSTAR_CAP) -> float:
    """Largest c with psi >= 0 on [1, c], by doubling then bisection (returns the feasible end)."""
    if not trace.success:
        raise ValueError("find_cstar needs a successful separability trace")
    if psi.is_zero():
        return cap
    hi = 2.0
    while psi_sign(psi, hi) >= 0:
        if hi >= cap:
            return cap
        hi *= 2.0
    lo = 1.0 if hi <= 2.0 else hi / 2.0
    for _ in range(max_iter):
        if hi - lo <= rtol * lo:
            break
        mid = 0.5 * (lo + hi)
        if psi_sign(psi, mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# alpha and the bound


def g_text(g: Basis) -> str:
    return {Basis.N: "n*", Basis.N_LN_N: "(n* * ln(n*))", Basis.LN_N: "ln(n*)", Basis.CONST: "1"}[g]


def solve_alpha(cstar: float, g: Basis, nstar: Union[int, str, None]) -> Union[float, str]:
    """alpha = c***(1/g(n*)); a closed-form string when n* is symbolic."""
    if cstar <= 1.0:
        raise TrivialBound(f"c* = {cstar} <= 1 gives no usable alpha > 1")
    if g is Basis.CONST:
        return float(cstar)
    if nstar is None or nstar == SYMBOLIC:
        return f"{cstar:.6g}^(1/{g_text(g)})"
    gv = basis_value(g, int(nstar))
    if gv <= 0:
        raise TrivialBound(f"g(n*) = {gv} at n* = {nstar}")
    return math.exp(math.log(cstar) / gv)


@dataclass
class PrrBound:
    name: str
    f: LinLogExpr
    kappa: LinLogExpr
    nstar: Union[int, str]
    cstar: float
    g: Basis  # alpha = cstar ** (1 / g(n*))
    trivial: bool = False
    strategy: Optional[str] = None
    B_used: Optional[int] = None
    psi: Optional[PsiExpr] = None
    trace: Optional[SeparabilityTrace] = None
    condition: Optional[str] = None
    overapprox: Optional[str] = None
    reason: Optional[str] = None
    attempts: list = field(default_factory=list)
    small_n: list = field(default_factory=list)

    @property
    def status(self) -> str:
        return "TRIVIAL" if self.trivial else "BOUND"

    def alpha(self, nstar=None):
        if self.trivial:
            return None
        nstar = self.nstar if nstar is None else nstar
        return solve_alpha(self.cstar, self.g, nstar)

    def log_alpha(self, nstar: int) -> float:
        if self.g is Basis.CONST:
            return math.log(self.cstar)
        return math.log(self.cstar) / basis_value(self.g, int(nstar))


def bound_from_cstar(cstar: float, f: LinLogExpr, g: Basis, kappa: Optional[LinLogExpr] = None,
                     nstar: Union[int, str] = SYMBOLIC, name: str = "manual") -> PrrBound:
    """Bound object for a hand-derived c* (e.g. the two-call recurrences)."""
    return PrrBound(name=name, f=f, kappa=kappa if kappa is not None else f, nstar=nstar, cstar=cstar, g=g)


def _kappa_value(kappa, nstar: int) -> float:
    return eval_linlog(kappa, nstar) if isinstance(kappa, LinLogExpr) else float(kappa)


def eval_bound(bound: PrrBound, kappa=None, nstar: Optional[int] = None) -> float:
    """alpha**(f(n*) - kappa(n*)), evaluated in the log domain."""
    kappa = bound.kappa if kappa is None else kappa
    if nstar is None:
        if bound.nstar == SYMBOLIC:
            raise ValueError("a concrete n* is required")
        nstar = int(bound.nstar)
    fv = eval_linlog(bound.f, nstar)
    kv = _kappa_value(kappa, nstar)
    if kv < fv - 1e-9 * max(1.0, abs(fv)):
        raise KappaBelowF(f"kappa({nstar}) = {kv} < f({nstar}) = {fv}")
    if bound.trivial:
        return 1.0
    return min(1.0, math.exp((fv - kv) * bound.log_alpha(nstar)))


def _ratio_to_g(b: Basis, g: Basis):
    """basis/g as (constant part?, text) in n*; None text means constant 1."""
    table = {
        Basis.N: {Basis.N_LN_N: "ln(n*)", Basis.N: None, Basis.LN_N: "ln(n*)/n*", Basis.CONST: "1/n*"},
        Basis.N_LN_N: {Basis.N_LN_N: None, Basis.N: "1/ln(n*)", Basis.LN_N: "1/n*", Basis.CONST: "1/(n* * ln(n*))"},
        Basis.LN_N: {Basis.N_LN_N: "n*", Basis.N: "n*/ln(n*)", Basis.LN_N: None, Basis.CONST: "1/ln(n*)"},
        Basis.CONST: {Basis.N_LN_N: "n* * ln(n*)", Basis.N: "n*", Basis.LN_N: "ln(n*)", Basis.CONST: None},
    }
    return table[g][b]


def _fmt_coef(v) -> str:
    v = float(v)
    return format_number(v) if v.is_integer() else f"{v:.6g}"


def exponent_over_g(diff: LinLogExpr, g: Basis) -> str:
    parts = []
    for b, v in diff.terms:
        txt = _ratio_to_g(b, g)
        mag = abs(float(v))
        body = _fmt_coef(mag) if txt is None else (txt if mag == 1 else f"{_fmt_coef(mag)}*{txt}")
        sign = "-" if v < 0 else "+"
        parts.append(body if not parts and sign == "+" else (f"-{body}" if not parts else f" {sign} {body}"))
    return "".join(parts) or "0"


def nstar_power(bound: PrrBound, kappa: Optional[LinLogExpr] = None) -> Optional[float]:
    """e such that the bound equals (n*)**(-e), when f - kappa is a pure ln(n) multiple and g = CONST."""
    kappa = bound.kappa if kappa is None else kappa
    diff = bound.f - kappa
    if bound.trivial or bound.g is not Basis.CONST or diff.bases() != [Basis.LN_N]:
        return None
    return -float(diff.coeff(Basis.LN_N)) * math.log(bound.cstar)


def bound_formula(bound: PrrBound, kappa: Optional[LinLogExpr] = None) -> str:
    if bound.trivial:
        return "1"
    kappa = bound.kappa if kappa is None else kappa
    e = nstar_power(bound, kappa)
    if e is not None:
        return f"(n*)^({-e:.6g})"
    return f"{bound.cstar:.6g}^({exponent_over_g(bound.f - kappa, bound.g)})"


def symbolic_value(bound: PrrBound, kappa: Optional[LinLogExpr] = None) -> Optional[float]:
    """Bound value when it does not depend on n* (e.g. c***(-7))."""
    kappa = bound.kappa if kappa is None else kappa
    if bound.trivial:
        return 1.0
    diff = bound.f - kappa
    if any(b is not bound.g for b in diff.bases()):
        return None
    return min(1.0, bound.cstar ** float(diff.coeff(bound.g)))


# ---------------------------------------------------------------------------
# driver


def _small_n_checks(spec: PrrSpec, n_lo: int, n_hi: int, alpha: Optional[float]) -> tuple:
    """Check 2 <= n < n_lo directly; exponent dominance works for every alpha > 1."""
    records = []
    for n in range(2, n_hi):
        if n >= n_lo:
            break
        fn, an, fmax = spec.f_tilde(n), spec.toll_at(n), spec.f_tilde(n - 1)
        if fn >= an + fmax - 1e-12:
            records.append(f"n={n}: f(n) >= a(n) + max f~(h), holds for every alpha > 1")
            continue
        if alpha is None:
            records.append(f"n={n}: not dominated and n* is symbolic")
            return False, records
        res = verify_condition_numeric(spec, alpha, n, n_min=n)
        if not res.holds:
            records.append(f"n={n}: violated at alpha={alpha!r}")
            return False, records
        records.append(f"n={n}: checked numerically at alpha={alpha!r}")
    return True, records


def _attempt(spec: PrrSpec, cond: ConditionExpr, strategy: str, B: int, rtol: float) -> dict:
    rec: dict = {"strategy": strategy, "B": B if strategy == BLOCK else None}
    try:
        over = overapprox_sums(cond, B, strategy)
    except NotReducible as exc:
        rec["failure"] = f"NotReducible: {exc}"
        return rec
    rec["overapprox"] = over.render()
    g = leading_term(spec.f)
    try:
        psi = substitute_simplify(over, g)
    except NotReducible as exc:
        rec["failure"] = f"NotReducible: {exc}"
        return rec
    rec["psi"] = psi
    trace = prove_separable(psi)
    rec["trace"] = trace
    if not trace.success:
        rec["failure"] = "separability proof failed"
        return rec
    cstar = find_cstar(psi, trace, rtol=rtol)
    rec["cstar"] = cstar
    gsub = substitution_basis(over, g)
    rec["g"] = gsub
    if cstar <= 1.0:
        rec["failure"] = "c* = 1 (no alpha > 1 satisfies psi >= 0)"
        return rec
    nstar = spec.nstar
    alpha = None if nstar == SYMBOLIC else solve_alpha(cstar, gsub, nstar)
    n_hi = (int(nstar) + 1) if nstar != SYMBOLIC else 10**9
    ok, records = _small_n_checks(spec, validity_floor(over, g), n_hi, alpha)
    rec["small_n"] = records
    if not ok:
        rec["failure"] = "small-n check failed"
        return rec
    rec["ok"] = True
    return rec


def derive_bound(spec: PrrSpec, B: Optional[int] = None, rtol: float = CSTAR_RTOL) -> PrrBound:
    """Run the whole pipeline; failures yield the trivial bound 1 with the reason recorded."""
    cond = gen_condition(spec)
    B = spec.B if B is None else B
    plan = []
    closed = closed_form_strategy(spec.f)
    if closed:
        plan.append((closed, 0))
    plan += [(BLOCK, b) for b in ((B,) if B > 0 else B_SCHEDULE)]
    attempts = []
    chosen = None
    for strategy, b in plan:
        rec = _attempt(spec, cond, strategy, b, rtol)
        attempts.append(rec)
        if rec.get("ok"):
            chosen = rec
            break
    last = chosen or attempts[-1]
    summary = [
        {"strategy": r["strategy"], "B": r["B"], "result": "ok" if r.get("ok") else r.get("failure")}
        for r in attempts
    ]
    base = dict(
        name=spec.name, f=spec.f, kappa=spec.kappa, nstar=spec.nstar,
        strategy=last["strategy"], B_used=last["B"], psi=last.get("psi"), trace=last.get("trace"),
        condition=cond.render(), overapprox=last.get("overapprox"), attempts=summary,
        small_n=last.get("small_n", []),
    )
    if chosen is None:
        return PrrBound(cstar=1.0, g=leading_term(spec.f), trivial=True, reason=last.get("failure"), **base)
    return PrrBound(cstar=chosen["cstar"], g=chosen["g"], **base)


def prr_report(bound: PrrBound, kappa: Optional[LinLogExpr] = None) -> dict:
    """JSON-ready report."""
    kappa = bound.kappa if kappa is None else kappa
    value = None
    if bound.trivial:
        value = 1.0
    elif bound.nstar != SYMBOLIC:
        value = eval_bound(bound, kappa, int(bound.nstar))
    else:
        value = symbolic_value(bound, kappa)
    alpha = None if bound.trivial else bound.alpha()
    trace = []
    trace.append({"step": "condition", "expr": bound.condition})
    if bound.overapprox:
        trace.append({"step": "overapprox", "strategy": bound.strategy, "B": bound.B_used, "expr": bound.overapprox})
    if bound.psi is not None:
        trace.append({"step": "psi", "expr": str(bound.psi)})
    if bound.trace is not None:
        trace.append({"step": "separability", "success": bound.trace.success, "nodes": bound.trace.to_json()})
    if bound.small_n:
        trace.append({"step": "small-n", "checks": bound.small_n})
    trace.append({"step": "attempts", "attempts": bound.attempts})
    rep = {
        "name": bound.name,
        "f": str(bound.f),
        "kappa": str(kappa),
        "nstar": bound.nstar,
        "B_used": bound.B_used,
        "cstar": None if bound.trivial else bound.cstar,
        "alpha": alpha,
        "alpha_closed_form": None if bound.trivial else solve_alpha(bound.cstar, bound.g, SYMBOLIC),
        "bound_value": value,
        "bound_formula": bound_formula(bound, kappa),
        "nstar_exponent": nstar_power(bound, kappa),
        "trace": trace,
        "status": bound.status,
    }
    if bound.trivial:
        rep["reason"] = bound.reason
    return rep


# ---------------------------------------------------------------------------
# direct numeric verification


@dataclass
class VerifyResult:
    holds: bool
    first_violation: Optional[int]
    n_max: int
    alpha: float
    min_margin: Optional[float] = None  # min over n of log-LHS minus log-RHS

    @property
    def verdict(self) -> str:
        return "HOLDS" if self.holds else f"VIOLATED at n={self.first_violation}"


_SAFE_FUNCS = {"ln": math.log, "log": math.log, "exp": math.exp, "sqrt": math.sqrt}
_SAFE_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
             ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def eval_alpha(text: Union[str, float], nstar: Optional[int] = None) -> float:
    """Evaluate an alpha such as ``2.3^(1/nstar)`` (``n*`` and ``nstar`` are synonyms)."""
    if isinstance(text, (int, float)):
        return float(text)
    src = text.replace("^", "**").replace("n*", "nstar")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError:
        raise SpecSyntaxError(f"cannot parse alpha {text!r}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "nstar":
            if nstar is None:
                raise SpecSyntaxError("alpha refers to nstar but none is available")
            return float(nstar)
        if isinstance(node, ast.Name) and node.id == "e":
            return math.e
        if isinstance(node, ast.BinOp) and type(node.op) in _SAFE_OPS:
            return _SAFE_OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _SAFE_OPS:
            return _SAFE_OPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _SAFE_FUNCS and len(node.args) == 1:
            return _SAFE_FUNCS[node.func.id](ev(node.args[0]))
        raise SpecSyntaxError(f"unsupported construct in alpha {text!r}")

    return float(ev(tree))


def _range_logsum(P: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """log sum_{i=lo}^{hi} exp(x_i) from the prefix log-sums P (lo >= 0)."""
    top = P[hi]
    below = np.where(lo > 0, P[np.maximum(lo - 1, 0)], -np.inf)
    with np.errstate(divide="ignore"):
        return top + np.log1p(-np.exp(below - top))


def log_expectation(spec: PrrSpec, log_alpha: float, n_max: int) -> np.ndarray:
    """log E[alpha**sum f~(h_j)] for n = 0..n_max (entries below 2 are unused)."""
    ns = np.arange(n_max + 1)
    ft = np.array([spec.f_tilde(i) for i in ns]) * log_alpha
    out = np.full(n_max + 1, np.nan)
    if n_max < 2:
        return out
    n = ns[2:]
    logn = np.log(n)
    if spec.shape.kind is ShapeKind.TWOCALL_SPLIT:
        for m in range(2, n_max + 1):
            v = ft[:m] + ft[m - 1::-1]
            top = v.max()
            out[m] = top + math.log(np.exp(v - top).sum()) - math.log(m)
        return out
    P = np.logaddexp.accumulate(ft)
    gamma = float(spec.shape.halfsplit_weight)
    parts = []
    if gamma > 0:
        a = _range_logsum(P, (n + 1) // 2, n - 1)
        b = _range_logsum(P, n // 2, n - 1)
        parts.append(math.log(gamma) + np.logaddexp(a, b) - logn)
    if gamma < 1:
        parts.append(math.log(1 - gamma) + P[n - 1] - logn)
    out[2:] = parts[0] if len(parts) == 1 else np.logaddexp(parts[0], parts[1])
    return out


def verify_condition_numeric(spec: PrrSpec, alpha: Union[float, str], n_max: int,
                             n_min: int = 2) -> VerifyResult:
    """Check alpha**f(n) >= alpha**a(n) * E[alpha**sum f~(h_j)] for n_min <= n <= n_max."""
    if n_max > VERIFY_NMAX:
        raise ValueError(f"n_max is limited to {VERIFY_NMAX}")
    nstar = None if spec.nstar == SYMBOLIC else int(spec.nstar)
    a = eval_alpha(alpha, nstar if nstar is not None else n_max)
    if not a > 1.0:
        raise ValueError(f"alpha must exceed 1, got {a}")
    if n_max < max(2, n_min):
        return VerifyResult(True, None, n_max, a)
    la = math.log(a)
    logE = log_expectation(spec, la, n_max)
    ns = np.arange(max(2, n_min), n_max + 1)
    lhs = np.array([spec.f_tilde(int(m)) for m in ns]) * la
    rhs = np.array([spec.toll_at(int(m)) for m in ns]) * la + logE[ns]
    if not (np.all(np.isfinite(lhs)) and np.all(np.isfinite(rhs))):
        raise OverflowError("log-domain evaluation left the floating-point range")
    margin = lhs - rhs
    tol = VERIFY_RTOL * np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    bad = np.nonzero(margin < -tol)[0]
    first = int(ns[bad[0]]) if bad.size else None
    return VerifyResult(first is None, first, n_max, a, float(margin.min()))
