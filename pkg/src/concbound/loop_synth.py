"""Exponential tail bounds for probabilistic while loops.

Pipeline: linear ranking map eta (exact LP with Farkas multipliers), then the
largest beta admitting some alpha with beta * E[alpha^(eta.delta)] <= 1 on every
branch, then Pr(T >= kappa) <= alpha^(eta(nu0) - K) * beta^(-kappa).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import Infeasible, ResidualCheckFailed
from .loop_model import (
    DiscreteDist,
    LoopSpec,
    branch_live,
    branch_delta_projection,
    sample_guard_points,
)
from .simplex import INFEASIBLE, OPTIMAL, linprog_exact

COEFF_BOX = 10**6
OFFSET_BOX = 10**12
BETA_MIN = 1.0 + 1e-6
BETA_MAX = float(2**20)
T_MAX = 20 * math.log(2)  # alpha <= 2^20
BETA_RTOL = 1e-4
T_BISECT_ITER = 200
RESIDUAL_TOL = 1e-9
SAMPLED_POINTS = 1000


@dataclass(frozen=True)
class RsmMap:
    vars: tuple
    coeffs: tuple  # Fractions
    offset: Fraction
    K: Fraction
    certificate: tuple  # Farkas multipliers, one per guard row
    live: tuple  # indices of branches reachable inside the guard
    epsilon: Fraction = Fraction(1)

    def __call__(self, x) -> Fraction:
        return sum((c * v for c, v in zip(self.coeffs, x)), Fraction(0)) + self.offset

    def value(self, x) -> float:
        return float(sum(float(c) * float(v) for c, v in zip(self.coeffs, x)) + float(self.offset))

    def __str__(self) -> str:
        parts = []
        for c, v in zip(self.coeffs, self.vars):
            if c == 1:
                parts.append(v)
            elif c == -1:
                parts.append(f"-{v}")
            elif c:
                parts.append(f"{_fmt(c)}*{v}")
        if self.offset or not parts:
            parts.append(_fmt(self.offset))
        return " + ".join(parts).replace("+ -", "- ")


def _fmt(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def synthesize_rsm(spec: LoopSpec) -> RsmMap:
    """Minimise eta(nu0) over linear maps with eta >= 0 on G and E[eta.delta] <= -1 per live branch."""
    d = len(spec.vars)
    m = len(spec.guard)
    A = [list(c.coeffs) for c in spec.guard]
    b = [c.bound for c in spec.guard]
    live = tuple(i for i, br in enumerate(spec.branches) if branch_live(spec, br))
    if not live:
        raise Infeasible("the guard is empty or no branch can fire inside it")
    # variables: c_1..c_d, d0, y_1..y_m
    nv = d + 1 + m
    # Farkas: eta = c.x + d0 >= 0 on {Ax <= b}  <=  y >= 0, A^T y = -c, b.y <= d0
    A_eq = []
    b_eq = []
    for j in range(d):
        row = [Fraction(0)] * nv
        row[j] = Fraction(1)
        for i in range(m):
            row[d + 1 + i] = A[i][j]
        A_eq.append(row)
        b_eq.append(Fraction(0))
    A_ub = []
    b_ub = []
    row = [Fraction(0)] * nv
    row[d] = Fraction(-1)
    for i in range(m):
        row[d + 1 + i] = b[i]
    A_ub.append(row)
    b_ub.append(Fraction(0))
    for bi in live:
        mean = spec.branches[bi].steps.mean()
        row = [Fraction(0)] * nv
        for j in range(d):
            row[j] = mean[j]
        A_ub.append(row)
        b_ub.append(Fraction(-1))
    obj = [Fraction(0)] * nv
    for j in range(d):
        obj[j] = spec.init[j]
    obj[d] = Fraction(1)
    bounds = [(-COEFF_BOX, COEFF_BOX)] * d + [(-OFFSET_BOX, OFFSET_BOX)] + [(0, None)] * m
    res = linprog_exact(obj, A_ub, b_ub, A_eq, b_eq, bounds)
    if res.status == INFEASIBLE:
        raise Infeasible("no linear ranking supermartingale map exists for this loop")
    if res.status != OPTIMAL:  # pragma: no cover - box makes the LP bounded
        raise Infeasible(f"ranking-map LP is {res.status}")
    coeffs = tuple(res.x[:d])
    offset = res.x[d]
    cert = tuple(res.x[d + 1:])
    K = Fraction(0)
    for bi in live:
        for dv, _ in spec.branches[bi].steps.support:
            K = min(K, sum((c * v for c, v in zip(coeffs, dv)), Fraction(0)))
    return RsmMap(tuple(spec.vars), coeffs, offset, K, cert, live)


# ---------------------------------------------------------------------------
# alpha / beta search on t = ln(alpha)


class _Branch:
    """G(t) = ln sum p e^(d t): convex, G(0) = 0, G'(0) = E[d] < 0."""

    def __init__(self, dist: DiscreteDist):
        self.d = np.array([float(v) for v in dist.values()])
        self.lp = np.log(np.array([float(p) for p in dist.probs()]))
        self.t_min, self.G_min = self._minimum()

    def G(self, t: float) -> float:
        z = self.lp + self.d * t
        mx = z.max()
        return float(mx + math.log(np.exp(z - mx).sum()))

    def dG(self, t: float) -> float:
        z = self.lp + self.d * t
        w = np.exp(z - z.max())
        return float((w * self.d).sum() / w.sum())

    def _minimum(self):
        if self.d.max() <= 0:
            zero = self.d == 0
            return math.inf, (float(np.log(np.exp(self.lp[zero]).sum())) if zero.any() else -math.inf)
        lo, hi = 0.0, 1.0
        while self.dG(hi) < 0:
            lo, hi = hi, hi * 2
        for _ in range(T_BISECT_ITER):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if self.dG(mid) < 0:
                lo = mid
            else:
                hi = mid
        return hi, self.G(hi)

    def interval(self, target: float):
        """[t1, t2] where G(t) <= target, or None."""
        if self.G_min > target:
            return None
        # t1: G decreasing on (0, t_min]; keep the feasible (hi) side
        lo = 0.0
        if math.isinf(self.t_min):
            hi = T_MAX
            if self.G(hi) > target:
                return None
        else:
            hi = self.t_min
        for _ in range(T_BISECT_ITER):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if self.G(mid) <= target:
                hi = mid
            else:
                lo = mid
        t1 = hi
        if math.isinf(self.t_min):
            return t1, T_MAX
        lo = self.t_min
        step = max(1.0, self.t_min)
        hi = lo + step
        while self.G(hi) <= target:
            lo, hi = hi, hi + step
            step *= 2
        for _ in range(T_BISECT_ITER):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if self.G(mid) <= target:
                lo = mid
            else:
                hi = mid
        return t1, lo


def min_alpha_for_beta(deltas: Sequence[DiscreteDist], beta: float) -> Optional[float]:
    """Smallest alpha in (1, 2^20] with beta * sum p alpha^d <= 1 on every branch, or None."""
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    target = -math.log(beta)
    lo, hi = 0.0, math.inf
    for dist in deltas:
        iv = _Branch(dist).interval(target)
        if iv is None:
            return None
        lo, hi = max(lo, iv[0]), min(hi, iv[1])
    if lo > hi:
        return None
    return math.exp(lo)


def branch_residual(dist: DiscreteDist, alpha: float, beta: float) -> float:
    """beta * E[alpha^d]; must be <= 1 for the drift condition."""
    la = math.log(alpha)
    return beta * sum(float(p) * math.exp(float(v) * la) for v, p in dist.support)


def search_beta_alpha(deltas: Sequence[DiscreteDist]) -> tuple:
    """Largest feasible beta in [1+1e-6, 2^20] by bisection, then its minimal alpha."""
    branches = [_Branch(dd) for dd in deltas]
    gmin = max(math.exp(b.G_min) for b in branches)
    hi = BETA_MAX if gmin <= 1.0 / BETA_MAX else min(BETA_MAX, 1.0 / gmin)
    if min_alpha_for_beta(deltas, BETA_MIN) is None:
        raise Infeasible("no beta > 1 admits an alpha satisfying the drift condition")
    if min_alpha_for_beta(deltas, hi) is not None:
        lo = hi
    else:
        lo = BETA_MIN
        while hi / lo - 1 > BETA_RTOL:
            mid = math.sqrt(lo * hi)
            if min_alpha_for_beta(deltas, mid) is not None:
                lo = mid
            else:
                hi = mid
    return lo, min_alpha_for_beta(deltas, lo)


# ---------------------------------------------------------------------------
# bound


@dataclass
class LoopBound:
    name: str
    rsm: RsmMap
    alpha: float
    beta: float
    eta0: Fraction
    residuals: dict = field(default_factory=dict)
    capped: bool = False
    init: tuple = ()

    @property
    def exponent(self) -> float:
        """eta(nu0) - K (>= 0)."""
        return float(self.eta0 - self.rsm.K)

    def log_bound(self, kappa: float) -> float:
        return self.exponent * math.log(self.alpha) - kappa * math.log(self.beta)

    def at(self, kappa: float) -> float:
        return min(1.0, math.exp(min(0.0, self.log_bound(kappa))))

    def formula(self) -> str:
        return f"{self.alpha:.6g}^({_fmt(self.eta0 - self.rsm.K)}) * {self.beta:.6g}^(-kappa)"


def check_residuals(spec: LoopSpec, rsm: RsmMap, alpha: float, beta: float, seed: int = 0) -> dict:
    """Exact and sampled checks of the conditions behind the bound; raises on failure."""
    d = len(spec.vars)
    out = {}
    # B1 via the Farkas certificate (exact)
    y = rsm.certificate
    ok = all(v >= 0 for v in y)
    for j in range(d):
        ok &= sum((y[i] * spec.guard[i].coeffs[j] for i in range(len(y))), Fraction(0)) == -rsm.coeffs[j]
    ok &= sum((y[i] * spec.guard[i].bound for i in range(len(y))), Fraction(0)) <= rsm.offset
    out["farkas_certificate"] = bool(ok)
    # B3 exact per live branch
    worst = max(sum((c * m for c, m in zip(rsm.coeffs, spec.branches[b].steps.mean())), Fraction(0)) for b in rsm.live)
    out["max_expected_change"] = float(worst)
    ok &= worst <= -1
    # A3 per live branch
    proj = branch_delta_projection(spec, rsm)
    res = [branch_residual(proj[b], alpha, beta) for b in rsm.live]
    out["drift_residual_max"] = max(res)
    ok &= max(res) <= 1 + RESIDUAL_TOL
    # sampled eta >= 0 and post-step >= K
    pts = sample_guard_points(spec, SAMPLED_POINTS, seed)
    c = np.array([float(v) for v in rsm.coeffs])
    vals = pts @ c + float(rsm.offset) if len(pts) else np.zeros(0)
    out["sampled_points"] = int(len(pts))
    out["sampled_min_eta"] = float(vals.min()) if len(vals) else None
    ok &= (vals >= -1e-9).all()
    dmin = min(float(sum(cv * dv for cv, dv in zip(rsm.coeffs, delta)))
               for b in rsm.live for delta, _ in spec.branches[b].steps.support)
    ok &= rsm.K <= 0 and float(rsm.K) <= dmin + 1e-12
    if len(vals):
        ok &= bool((vals + dmin >= float(rsm.K) - 1e-9).all())
    out["K"] = float(rsm.K)
    if not ok:
        raise ResidualCheckFailed(f"internal consistency check failed: {out}")
    return out


def derive_loop_bound(spec: LoopSpec, init: Optional[Sequence] = None) -> LoopBound:
    nu0 = spec.init if init is None else tuple(init)
    rsm = synthesize_rsm(spec if init is None else _with_init(spec, nu0))
    proj = branch_delta_projection(spec, rsm)
    live = [proj[b] for b in rsm.live]
    beta, alpha = search_beta_alpha(live)
    residuals = check_residuals(spec, rsm, alpha, beta)
    return LoopBound(spec.name, rsm, alpha, beta, rsm(nu0), residuals, capped=beta >= BETA_MAX, init=tuple(nu0))


def _with_init(spec: LoopSpec, nu0) -> LoopSpec:
    return LoopSpec(spec.name, spec.vars, spec.guard, spec.branches, tuple(nu0))


def closed_form_beta(p, q) -> float:
    """beta* for a symmetric two-point projection {-a: p, +a: q}."""
    return 1.0 / (2.0 * math.sqrt(float(p) * float(q)))


def loop_report(bound: LoopBound, evaluations: Sequence[dict] = ()) -> dict:
    rep = {
        "name": bound.name,
        "eta": {"coeffs": {v: _fmt(c) for v, c in zip(bound.rsm.vars, bound.rsm.coeffs)},
                "offset": _fmt(bound.rsm.offset), "text": str(bound.rsm)},
        "K": _fmt(bound.rsm.K),
        "eta_init": _fmt(bound.eta0),
        "alpha": bound.alpha,
        "beta": bound.beta,
        "bound_formula": bound.formula(),
        "evaluations": list(evaluations),
        "residuals": bound.residuals,
        "status": "BOUND",
        "assumption": "the loop terminates almost surely",
    }
    if bound.capped:
        rep["note"] = "beta reached the search cap 2^20"
    return rep
