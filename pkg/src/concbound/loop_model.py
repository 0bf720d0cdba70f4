"""Single probabilistic while loops with polyhedral guards and incremental updates.

``while G: pick the first branch whose region holds; x += delta ~ steps``.
Iterations are counted until the valuation leaves ``G``.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from . import rng
from .errors import BadDistribution, CapExceeded, NoBranchCovers, NonIncremental, SpecSyntaxError
from .simplex import OPTIMAL, linprog_exact
from .tomlio import load_toml

DEFAULT_CAP = 10**8
GUARD_ATOL = 1e-9
COVERAGE_MAX_COMBOS = 4096


def to_fraction(v) -> Fraction:
    """Exact rational from TOML scalars; floats go through their shortest repr."""
    if isinstance(v, bool):
        raise SpecSyntaxError(f"expected a number, got {v!r}")
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(repr(v))
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError):
            raise SpecSyntaxError(f"not a rational number: {v!r}") from None
    raise SpecSyntaxError(f"expected a number, got {v!r}")


@dataclass(frozen=True)
class DiscreteDist:
    """Finite distribution with exact rational probabilities summing to one."""

    support: tuple  # ((value, prob), ...)

    def __post_init__(self):
        if not self.support:
            raise BadDistribution("empty distribution")
        total = Fraction(0)
        for _, p in self.support:
            if not isinstance(p, Fraction) or p <= 0:
                raise BadDistribution(f"probability {p!r} must be a positive rational")
            total += p
        if total != 1:
            raise BadDistribution(f"probabilities sum to {total}, not 1")

    @classmethod
    def merged(cls, pairs) -> "DiscreteDist":
        acc: dict = {}
        for v, p in pairs:
            acc[v] = acc.get(v, Fraction(0)) + p
        return cls(tuple(sorted(acc.items())))

    def mean(self):
        if isinstance(self.support[0][0], tuple):
            d = len(self.support[0][0])
            return tuple(sum((v[j] * p for v, p in self.support), Fraction(0)) for j in range(d))
        return sum((v * p for v, p in self.support), Fraction(0))

    def values(self):
        return [v for v, _ in self.support]

    def probs(self):
        return [p for _, p in self.support]


@dataclass(frozen=True)
class LinearConstraint:
    """coeffs . x <= bound."""

    coeffs: tuple
    bound: Fraction
    text: str = ""

    def holds(self, x: Sequence[float], atol: float = GUARD_ATOL) -> bool:
        s = 0.0
        for a, v in zip(self.coeffs, x):
            if a:
                s += float(a) * v
        return s <= float(self.bound) + atol

    def holds_exact(self, x: Sequence[Fraction]) -> bool:
        return sum((a * v for a, v in zip(self.coeffs, x)), Fraction(0)) <= self.bound


@dataclass(frozen=True)
class Branch:
    region: Optional[tuple]  # None means unconditional
    steps: DiscreteDist  # over delta vectors (tuples of Fraction)

    def matches(self, x) -> bool:
        return self.region is None or all(c.holds(x) for c in self.region)


@dataclass(frozen=True)
class LoopSpec:
    name: str
    vars: tuple
    guard: tuple
    branches: tuple
    init: tuple

    def in_guard(self, x) -> bool:
        return all(c.holds(x) for c in self.guard)

    def valuation(self, mapping: Optional[dict] = None) -> tuple:
        if mapping is None:
            return self.init
        out = list(self.init)
        for k, v in mapping.items():
            if k not in self.vars:
                raise SpecSyntaxError(f"unknown variable {k!r}")
            out[self.vars.index(k)] = to_fraction(v)
        return tuple(out)


@dataclass(frozen=True)
class LoopTrace:
    iterations: int
    final: tuple


# ---------------------------------------------------------------------------
# parsing

_LIN_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+)|([A-Za-z_][A-Za-z_0-9]*)|([-+*/]))")


def _parse_linear(text: str, names: Sequence[str]) -> tuple:
    """Linear form over ``names``; returns (coeff list, constant)."""
    toks = []
    pos = 0
    s = text.strip()
    while pos < len(s):
        m = _LIN_TOKEN.match(s, pos)
        if not m or m.end() == pos:
            raise SpecSyntaxError(f"cannot parse linear expression {text!r}")
        toks.append(m.group(1) and ("num", m.group(1)) or m.group(2) and ("id", m.group(2)) or ("op", m.group(3)))
        pos = m.end()
    coeffs = [Fraction(0)] * len(names)
    const = Fraction(0)
    i = 0
    sign = 1
    expect_term = True
    while i < len(toks):
        kind, val = toks[i]
        if expect_term and kind == "op" and val in "+-":
            sign *= -1 if val == "-" else 1
            i += 1
            continue
        if not expect_term:
            if kind == "op" and val in "+-":
                sign = -1 if val == "-" else 1
                expect_term = True
                i += 1
                continue
            raise SpecSyntaxError(f"unexpected {val!r} in {text!r}")
        coef = Fraction(1)
        var = None
        while True:
            kind, val = toks[i] if i < len(toks) else (None, None)
            if kind == "num":
                num = Fraction(val)
                i += 1
                if i + 1 < len(toks) and toks[i] == ("op", "/") and toks[i + 1][0] == "num":
                    num /= Fraction(toks[i + 1][1])
                    i += 2
                coef *= num
            elif kind == "id":
                if var is not None:
                    raise SpecSyntaxError(f"non-linear term in {text!r}")
                if val not in names:
                    raise SpecSyntaxError(f"unknown variable {val!r} in {text!r}")
                var = val
                i += 1
            else:
                raise SpecSyntaxError(f"expected a term in {text!r}")
            if i < len(toks) and toks[i] == ("op", "*"):
                i += 1
                continue
            break
        if var is None:
            const += sign * coef
        else:
            coeffs[names.index(var)] += sign * coef
        sign = 1
        expect_term = False
    if expect_term:
        raise SpecSyntaxError(f"dangling operator in {text!r}")
    return coeffs, const


def parse_constraint(text: str, names: Sequence[str]) -> LinearConstraint:
    m = re.fullmatch(r"(.*?)(<=|>=)(.*)", text.strip())
    if not m or re.search(r"<=|>=|<|>|==|=", m.group(1) + m.group(3)):
        raise SpecSyntaxError(f"constraint must contain exactly one '<=' or '>=': {text!r}")
    lc, lk = _parse_linear(m.group(1), names)
    rc, rk = _parse_linear(m.group(3), names)
    coeffs = [a - b for a, b in zip(lc, rc)]
    bound = rk - lk
    if m.group(2) == ">=":
        coeffs = [-a for a in coeffs]
        bound = -bound
    return LinearConstraint(tuple(coeffs), bound, text.strip())


def _parse_steps(raw, names) -> DiscreteDist:
    if not isinstance(raw, list) or not raw:
        raise SpecSyntaxError("each [[branch]] needs at least one [[branch.step]]")
    pairs = []
    for st in raw:
        if not isinstance(st, dict):
            raise SpecSyntaxError("malformed [[branch.step]]")
        extra = set(st) - {"prob", "delta"}
        if extra & {"assign", "set", "value"}:
            raise NonIncremental(f"only incremental updates x := x + delta are supported, got {sorted(extra)}")
        if extra:
            raise SpecSyntaxError(f"unknown keys in [[branch.step]]: {sorted(extra)}")
        if "prob" not in st:
            raise SpecSyntaxError("[[branch.step]] needs prob")
        p = to_fraction(st["prob"])
        delta = [Fraction(0)] * len(names)
        for k, v in (st.get("delta") or {}).items():
            if k not in names:
                raise SpecSyntaxError(f"delta refers to unknown variable {k!r}")
            if isinstance(v, str) and re.search(r"[A-Za-z]", v):
                raise NonIncremental(f"delta for {k!r} must be a constant, got {v!r}")
            delta[names.index(k)] = to_fraction(v)
        pairs.append((tuple(delta), p))
    try:
        return DiscreteDist.merged(pairs)
    except BadDistribution:
        raise
    except TypeError as exc:  # pragma: no cover - defensive
        raise BadDistribution(str(exc)) from None


def parse_loop_spec(data: Union[bytes, str], check_coverage: bool = True) -> LoopSpec:
    doc = load_toml(data)
    if "loop" not in doc:
        raise SpecSyntaxError("missing [loop] section")
    sec = doc["loop"]
    extra = set(sec) - {"name", "vars", "guard", "init"}
    if extra:
        raise SpecSyntaxError(f"unknown keys in [loop]: {sorted(extra)}")
    names = sec.get("vars")
    if not isinstance(names, list) or not names or not all(isinstance(v, str) for v in names):
        raise SpecSyntaxError("[loop] vars must be a non-empty list of names")
    if len(set(names)) != len(names):
        raise SpecSyntaxError("duplicate variable names")
    guard = tuple(parse_constraint(g, names) for g in sec.get("guard", []))
    init = [Fraction(0)] * len(names)
    for k, v in (sec.get("init") or {}).items():
        if k not in names:
            raise SpecSyntaxError(f"init refers to unknown variable {k!r}")
        init[names.index(k)] = to_fraction(v)
    raw_branches = doc.get("branch")
    if not isinstance(raw_branches, list) or not raw_branches:
        raise SpecSyntaxError("at least one [[branch]] is required")
    branches = []
    for rb in raw_branches:
        extra = set(rb) - {"region", "step"}
        if extra:
            raise SpecSyntaxError(f"unknown keys in [[branch]]: {sorted(extra)}")
        region = rb.get("region")
        region = None if not region else tuple(parse_constraint(r, names) for r in region)
        branches.append(Branch(region, _parse_steps(rb.get("step"), names)))
    spec = LoopSpec(str(sec.get("name", "loop")), tuple(names), guard, tuple(branches), tuple(init))
    if check_coverage:
        gap = coverage_gap(spec)
        if gap is not None:
            raise NoBranchCovers(f"no branch region covers the guard point {[str(v) for v in gap]}")
    return spec


# ---------------------------------------------------------------------------
# polyhedral helpers


def _rows(cons) -> tuple:
    return [list(c.coeffs) for c in cons], [c.bound for c in cons]


def feasible_point(cons: Sequence[LinearConstraint], nvars: int, strict: Sequence[LinearConstraint] = ()) -> Optional[list]:
    """A point of {cons} that satisfies every ``strict`` constraint with slack > 0, if any."""
    A, b = _rows(cons)
    if not strict:
        res = linprog_exact([0] * nvars, A, b, bounds=[(None, None)] * nvars)
        return res.x if res.status == OPTIMAL else None
    # maximise t with  a.x >= b + t  for each strict row, t <= 1
    A2 = [row + [0] for row in A]
    b2 = list(b)
    for c in strict:
        A2.append([-a for a in c.coeffs] + [1])
        b2.append(-c.bound)
    res = linprog_exact([0] * nvars + [-1], A2, b2, bounds=[(None, None)] * nvars + [(None, 1)])
    if res.status == OPTIMAL and res.x[-1] > 0:
        return res.x[:-1]
    return None


def branch_live(spec: LoopSpec, branch: Branch) -> bool:
    """True when the branch region meets the guard polyhedron."""
    cons = list(spec.guard) + list(branch.region or ())
    return feasible_point(cons, len(spec.vars)) is not None


def coverage_gap(spec: LoopSpec) -> Optional[list]:
    """A guard point outside every branch region (reals), or None."""
    if any(b.region is None for b in spec.branches):
        return None
    if feasible_point(spec.guard, len(spec.vars)) is None:
        return None
    regions = [b.region for b in spec.branches]
    combos = 1
    for r in regions:
        combos *= len(r)
    if combos > COVERAGE_MAX_COMBOS:
        return None
    for pick in itertools.product(*regions):
        pt = feasible_point(spec.guard, len(spec.vars), strict=pick)
        if pt is not None:
            return pt
    return None


# ---------------------------------------------------------------------------
# simulation


def _pick_branch(spec: LoopSpec, x) -> Branch:
    for b in spec.branches:
        if b.matches(x):
            return b
    raise NoBranchCovers(f"no branch covers valuation {list(x)}")


def _cum(dist: DiscreteDist) -> np.ndarray:
    c = np.cumsum([float(p) for p in dist.probs()])
    c[-1] = 1.0
    return c


def run_trial(spec: LoopSpec, stream=None, cap: int = DEFAULT_CAP, init: Optional[Sequence] = None) -> LoopTrace:
    """One execution; raises CapExceeded instead of reporting a truncated run."""
    stream = stream if stream is not None else rng.Stream(0, 0)
    x = [float(v) for v in (spec.init if init is None else init)]
    t = 0
    while spec.in_guard(x):
        if t >= cap:
            raise CapExceeded(f"loop still running after {cap} iterations")
        br = _pick_branch(spec, x)
        u = stream.uniform()
        k = int(np.searchsorted(_cum(br.steps), u, side="right"))
        delta = br.steps.support[k][0]
        x = [xi + float(d) for xi, d in zip(x, delta)]
        t += 1
    return LoopTrace(t, tuple(x))


def _guard_mask(cons, X: np.ndarray) -> np.ndarray:
    ok = np.ones(X.shape[0], dtype=bool)
    for c in cons:
        s = np.zeros(X.shape[0])
        for j, a in enumerate(c.coeffs):
            if a:
                s = s + float(a) * X[:, j]
        ok &= s <= float(c.bound) + GUARD_ATOL
    return ok


@dataclass
class LoopSample:
    iterations: np.ndarray  # T per trial (clipped at horizon)
    capped: np.ndarray  # bool: still running at the cap


def simulate_loop(spec: LoopSpec, trials: int, seed: int = 0, init: Optional[Sequence] = None,
                  cap: int = DEFAULT_CAP, horizon: Optional[int] = None, first_trial: int = 0) -> LoopSample:
    """Vectorised ``run_trial``.  Trials reaching ``horizon`` stop early with T = horizon."""
    d = len(spec.vars)
    x0 = np.array([float(v) for v in (spec.init if init is None else init)])
    X = np.tile(x0, (trials, 1))
    T = np.zeros(trials, dtype=np.int64)
    keys = rng.trial_keys(seed, np.arange(first_trial, first_trial + trials, dtype=np.uint64))
    cums = [_cum(b.steps) for b in spec.branches]
    deltas = [np.array([[float(v) for v in dv] for dv in b.steps.values()]).reshape(-1, d) for b in spec.branches]
    stop = cap if horizon is None else min(cap, horizon)
    live = np.nonzero(_guard_mask(spec.guard, X))[0]
    while live.size and T[live[0]] < stop:
        Xl = X[live]
        which = np.full(live.size, -1)
        for bi, b in enumerate(spec.branches):
            free = which < 0
            if b.region is None:
                which[free] = bi
            else:
                which[free & _guard_mask(b.region, Xl)] = bi
        if (which < 0).any():
            bad = Xl[np.argmax(which < 0)]
            raise NoBranchCovers(f"no branch covers valuation {bad.tolist()}")
        u = rng.uniforms(keys[live], T[live].astype(np.uint64))
        for bi in range(len(spec.branches)):
            rows = np.nonzero(which == bi)[0]
            if rows.size:
                k = np.searchsorted(cums[bi], u[rows], side="right")
                X[live[rows]] = Xl[rows] + deltas[bi][k]
        T[live] += 1
        live = live[_guard_mask(spec.guard, X[live])]
    capped = np.zeros(trials, dtype=bool)
    if live.size and (horizon is None or cap < horizon):
        capped[live] = True
    return LoopSample(T, capped)


def branch_delta_projection(spec: LoopSpec, eta) -> list:
    """Per-branch law of <eta, delta> (eta: coefficient vector or RsmMap)."""
    coeffs = getattr(eta, "coeffs", eta)
    coeffs = [to_fraction(c) for c in coeffs]
    out = []
    for b in spec.branches:
        out.append(DiscreteDist.merged(
            (sum((c * d for c, d in zip(coeffs, dv)), Fraction(0)), p) for dv, p in b.steps.support))
    return out


def sample_guard_points(spec: LoopSpec, count: int = 1000, seed: int = 0, radius: float = 50.0) -> np.ndarray:
    """Points of G drawn from a box around the initial valuation (rejection sampling)."""
    gen = np.random.default_rng(seed)
    x0 = np.array([float(v) for v in spec.init])
    got = []
    for _ in range(200):
        cand = x0 + gen.uniform(-radius, radius, size=(4 * count, len(x0)))
        got.append(cand[_guard_mask(spec.guard, cand)])
        if sum(len(g) for g in got) >= count:
            break
    pts = np.concatenate(got) if got else np.empty((0, len(x0)))
    return pts[:count]
