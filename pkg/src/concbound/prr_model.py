"""Probabilistic recurrence relations and their stack-machine semantics.

A recurrence ``T(n) = a(n) + T(h1) [+ T(h2)]`` is executed as a Markov chain
over a stack of pending sizes.  Popping a size ``m >= 2`` charges ``a(m)`` and
pushes the sampled children; sizes 0 and 1 cost nothing.
"""
from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from . import rng
from .errors import (
    DomainError,
    InvariantViolation,
    RuntimeCapExceeded,
    SpecSyntaxError,
    TerminalState,
    TooLarge,
)
from .expr import Basis, LinLogExpr, eval_linlog, parse_linlog
from .tomlio import load_toml

SYMBOLIC = "symbolic"
EXACT_MAX_N = 14
TRIAL_STEP_CAP = 10**9
KAPPA_RTOL = 1e-9  # cost >= kappa is tested as cost >= kappa - KAPPA_RTOL*max(1, |kappa|)


class ShapeKind(enum.Enum):
    UNIFORM = "uniform"
    HALFSPLIT = "halfsplit"
    MIXED = "mixed"
    TWOCALL_SPLIT = "twocall_split"


@dataclass(frozen=True)
class RecursionShape:
    kind: ShapeKind
    gamma: Fraction = Fraction(1)

    @property
    def arity(self) -> int:
        return 2 if self.kind is ShapeKind.TWOCALL_SPLIT else 1

    @property
    def halfsplit_weight(self) -> Fraction:
        """Weight of the half-split component (the gamma of the blend)."""
        return {
            ShapeKind.UNIFORM: Fraction(0),
            ShapeKind.HALFSPLIT: Fraction(1),
            ShapeKind.MIXED: self.gamma,
        }.get(self.kind, Fraction(0))

    def __str__(self) -> str:
        if self.kind is ShapeKind.MIXED:
            return f"mixed({self.gamma})"
        return self.kind.value


UNIFORM = RecursionShape(ShapeKind.UNIFORM, Fraction(0))
HALFSPLIT = RecursionShape(ShapeKind.HALFSPLIT, Fraction(1))
TWOCALL_SPLIT = RecursionShape(ShapeKind.TWOCALL_SPLIT, Fraction(0))


def mixed(gamma) -> RecursionShape:
    g = _to_fraction(gamma)
    if not 0 <= g <= 1:
        raise InvariantViolation(f"gamma={gamma} outside [0, 1]")
    return RecursionShape(ShapeKind.MIXED, g)


@dataclass(frozen=True)
class PrrSpec:
    name: str
    toll: LinLogExpr
    shape: RecursionShape
    f: LinLogExpr
    kappa: LinLogExpr
    nstar: Union[int, str] = SYMBOLIC
    B: int = 0

    @property
    def symbolic(self) -> bool:
        return self.nstar == SYMBOLIC

    def with_nstar(self, nstar: Optional[int]) -> "PrrSpec":
        return self if nstar is None else replace(self, nstar=int(nstar))

    def toll_at(self, n: int) -> float:
        return eval_linlog(self.toll, n) if n >= 2 else 0.0

    def f_tilde(self, n: int) -> float:
        """f with the convention f(0) = f(1) = 0 used for leaf children."""
        return eval_linlog(self.f, n) if n >= 2 else 0.0


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(str(x).strip())


def _check_nonneg(e: LinLogExpr, what: str, upto: int = 4096) -> None:
    # leading coefficient governs large n; a grid covers the rest
    if not e.is_zero() and e.terms[0][1] < 0:
        raise InvariantViolation(f"{what} = {e} is eventually negative")
    for n in list(range(1, 65)) + [int(x) for x in np.geomspace(65, upto, 40)]:
        if eval_linlog(e, n) < -1e-12:
            raise InvariantViolation(f"{what} = {e} is negative at n={n}")


def validate_prr(spec: PrrSpec) -> PrrSpec:
    _check_nonneg(spec.toll, "toll")
    _check_nonneg(spec.f, "f")
    if spec.f.is_zero() or spec.f.terms[0][1] <= 0:
        raise InvariantViolation("f needs a positive leading coefficient")
    if spec.kappa.is_zero() or spec.kappa.terms[0][1] <= 0:
        raise InvariantViolation("kappa needs a positive leading coefficient")
    if spec.shape.kind is ShapeKind.MIXED and not 0 <= spec.shape.gamma <= 1:
        raise InvariantViolation("gamma outside [0, 1]")
    if spec.B < 0:
        raise InvariantViolation("B must be >= 0")
    if spec.symbolic:
        diff = spec.kappa - spec.f
        if not diff.is_zero() and diff.terms[0][1] < 0:
            raise InvariantViolation(f"kappa = {spec.kappa} falls below f = {spec.f} for large n*")
    else:
        if int(spec.nstar) < 1:
            raise InvariantViolation("nstar must be a positive integer")
        if eval_linlog(spec.kappa, spec.nstar) < eval_linlog(spec.f, spec.nstar) - 1e-9:
            raise InvariantViolation(f"kappa({spec.nstar}) < f({spec.nstar})")
    return spec


def parse_prr_spec(data: Union[bytes, str]) -> PrrSpec:
    """Parse and validate a ``[prr]`` spec file."""
    doc = load_toml(data)
    if "prr" not in doc:
        raise SpecSyntaxError("missing [prr] section")
    sec = doc["prr"]
    known = {"name", "toll", "shape", "gamma", "f", "kappa", "nstar", "B"}
    extra = set(sec) - known
    if extra:
        raise SpecSyntaxError(f"unknown keys in [prr]: {sorted(extra)}")
    for key in ("toll", "shape", "f", "kappa"):
        if key not in sec:
            raise SpecSyntaxError(f"[prr] is missing {key!r}")
    try:
        kind = ShapeKind(str(sec["shape"]).lower())
    except ValueError:
        raise SpecSyntaxError(f"unknown shape {sec['shape']!r}") from None
    if kind is ShapeKind.MIXED:
        if "gamma" not in sec:
            raise SpecSyntaxError("shape 'mixed' requires gamma")
        shape = mixed(sec["gamma"])
    else:
        if "gamma" in sec:
            raise SpecSyntaxError("gamma is only allowed with shape 'mixed'")
        shape = {ShapeKind.UNIFORM: UNIFORM, ShapeKind.HALFSPLIT: HALFSPLIT,
                 ShapeKind.TWOCALL_SPLIT: TWOCALL_SPLIT}[kind]
    nstar = sec.get("nstar", SYMBOLIC)
    if isinstance(nstar, str):
        if nstar.strip().lower() != SYMBOLIC:
            raise SpecSyntaxError(f"nstar must be an integer or 'symbolic', got {nstar!r}")
        nstar = SYMBOLIC
    elif isinstance(nstar, bool) or not isinstance(nstar, int):
        raise SpecSyntaxError("nstar must be an integer")
    B = sec.get("B", 0)
    if isinstance(B, bool) or not isinstance(B, int):
        raise SpecSyntaxError("B must be an integer")
    spec = PrrSpec(
        name=str(sec.get("name", "prr")),
        toll=parse_linlog(str(sec["toll"])),
        shape=shape,
        f=parse_linlog(str(sec["f"])),
        kappa=parse_linlog(str(sec["kappa"])),
        nstar=nstar,
        B=B,
    )
    return validate_prr(spec)


# ---------------------------------------------------------------------------
# child distributions


def _halfsplit_counts(n: int) -> dict:
    counts: dict = defaultdict(int)
    for i in range(-(-n // 2), n):
        counts[i] += 1
    for i in range(n // 2, n):
        counts[i] += 1
    return counts


def child_distribution(shape: RecursionShape, n: int) -> dict:
    """Exact law of the child sizes: ``{size or (h1, h2): Fraction}``."""
    if n < 2:
        raise DomainError("child distribution needs n >= 2")
    if shape.kind is ShapeKind.TWOCALL_SPLIT:
        return {(i, n - 1 - i): Fraction(1, n) for i in range(n)}
    gamma = shape.halfsplit_weight
    out: dict = defaultdict(Fraction)
    if gamma:
        for i, k in _halfsplit_counts(n).items():
            out[i] += gamma * Fraction(k, n)
    if gamma != 1:
        for i in range(n):
            out[i] += (1 - gamma) * Fraction(1, n)
    return {k: v for k, v in sorted(out.items()) if v}


def _sample_children(shape: RecursionShape, n: int, stream) -> tuple:
    """Children of one node; draw order matches the vectorised engine."""
    if shape.kind is ShapeKind.TWOCALL_SPLIT:
        i = min(int(stream.uniform() * n), n - 1)
        return (i, n - 1 - i)
    if shape.kind is ShapeKind.UNIFORM:
        use_half = False
    elif shape.kind is ShapeKind.HALFSPLIT:
        use_half = True
    else:
        use_half = stream.uniform() < float(shape.gamma)
    k = min(int(stream.uniform() * n), n - 1)
    return (_halfsplit_index(n, k) if use_half else k,)


def _halfsplit_index(n, k):
    # first range {ceil(n/2)..n-1} holds floor(n/2) items, then {floor(n/2)..n-1}
    lo = n // 2
    hi = n - lo
    return np.where(k < lo, hi + k, lo + (k - lo)) if isinstance(k, np.ndarray) else (hi + k if k < lo else k)


# ---------------------------------------------------------------------------
# stack chain


@dataclass(frozen=True)
class ChainState:
    pending: tuple  # top of stack first
    accumulated_cost: float = 0.0

    @property
    def k(self) -> int:
        return len(self.pending)

    @property
    def terminal(self) -> bool:
        return not self.pending

    @classmethod
    def initial(cls, nstar: int) -> "ChainState":
        return cls((int(nstar),), 0.0)


def step(state: ChainState, spec: PrrSpec, stream) -> ChainState:
    """One transition: pop the top size, charge its toll and push its children."""
    if state.terminal:
        raise TerminalState("stack is empty")
    n, rest = state.pending[0], state.pending[1:]
    if n <= 1:
        return ChainState(rest, state.accumulated_cost)
    children = tuple(h for h in _sample_children(spec.shape, n, stream) if h >= 1)
    return ChainState(children + rest, state.accumulated_cost + spec.toll_at(n))


def run_trial(spec: PrrSpec, nstar: Optional[int] = None, stream=None, cap: int = TRIAL_STEP_CAP) -> float:
    """Total cost of one execution from ``(1, <nstar>)``."""
    n0 = _resolve_nstar(spec, nstar)
    stream = stream if stream is not None else rng.Stream(0, 0)
    state = ChainState.initial(n0)
    steps = 0
    while not state.terminal:
        state = step(state, spec, stream)
        steps += 1
        if steps > cap:
            raise RuntimeCapExceeded(f"trial exceeded {cap} steps")
    return state.accumulated_cost


def _resolve_nstar(spec: PrrSpec, nstar) -> int:
    if nstar is None:
        if spec.symbolic:
            raise ValueError("a concrete n* is required")
        nstar = spec.nstar
    nstar = int(nstar)
    if nstar < 0:
        raise DomainError("n* must be non-negative")
    return nstar


def toll_table(spec: PrrSpec, nmax: int) -> np.ndarray:
    return np.array([spec.toll_at(m) for m in range(nmax + 1)], dtype=np.float64)


def simulate_costs(spec: PrrSpec, nstar: Optional[int], trials: int, seed: int = 0,
                   first_trial: int = 0, chunk: int = 1 << 18) -> np.ndarray:
    """Vectorised ``run_trial`` for trials ``first_trial .. first_trial+trials-1``.

    Bit-identical to calling ``run_trial`` with ``rng.Stream(seed, t)``.
    """
    n0 = _resolve_nstar(spec, nstar)
    tolls = toll_table(spec, max(n0, 1))
    out = np.empty(trials, dtype=np.float64)
    for start in range(0, trials, chunk):
        stop = min(trials, start + chunk)
        idx = np.arange(first_trial + start, first_trial + stop, dtype=np.uint64)
        keys = rng.trial_keys(seed, idx)
        if spec.shape.arity == 1:
            out[start:stop] = _run_single(spec.shape, tolls, n0, keys)
        else:
            out[start:stop] = _run_twocall(tolls, n0, keys)
    return out


def _run_single(shape: RecursionShape, tolls: np.ndarray, n0: int, keys: np.ndarray) -> np.ndarray:
    m = keys.shape[0]
    cost = np.zeros(m)
    size = np.full(m, n0, dtype=np.int64)
    ctr = np.zeros(m, dtype=np.uint64)
    live = np.nonzero(size >= 2)[0]
    gamma = float(shape.gamma)
    while live.size:
        n = size[live]
        cost[live] += tolls[n]
        k_keys = keys[live]
        if shape.kind is ShapeKind.MIXED:
            half = rng.uniforms(k_keys, ctr[live]) < gamma
            ctr[live] += np.uint64(1)
        else:
            half = np.full(live.size, shape.kind is ShapeKind.HALFSPLIT)
        u = rng.uniforms(k_keys, ctr[live])
        ctr[live] += np.uint64(1)
        k = np.minimum((u * n).astype(np.int64), n - 1)
        child = np.where(half, _halfsplit_index(n, k), k)
        size[live] = child
        live = live[child >= 2]
    return cost


def _run_twocall(tolls: np.ndarray, n0: int, keys: np.ndarray) -> np.ndarray:
    m = keys.shape[0]
    cost = np.zeros(m)
    if n0 < 2:
        return cost
    stack = np.zeros((m, n0 + 1), dtype=np.int64)
    top = np.zeros(m, dtype=np.int64)  # number of entries
    stack[:, 0] = n0
    top[:] = 1
    ctr = np.zeros(m, dtype=np.uint64)
    live = np.arange(m)
    while live.size:
        t = top[live] - 1
        n = stack[live, t]
        top[live] = t
        cost[live] += tolls[n]
        u = rng.uniforms(keys[live], ctr[live])
        ctr[live] += np.uint64(1)
        i = np.minimum((u * n).astype(np.int64), n - 1)
        j = n - 1 - i
        # push second child first so the first child is processed next
        for child in (j, i):
            push = child >= 2
            rows = live[push]
            stack[rows, top[rows]] = child[push]
            top[rows] += 1
        live = live[top[live] > 0]
    return cost


def hits_at(costs: np.ndarray, kappa: float) -> int:
    return int(np.count_nonzero(costs >= kappa - KAPPA_RTOL * max(1.0, abs(kappa))))


# ---------------------------------------------------------------------------
# exact law


def cost_distribution(spec: PrrSpec, nstar: int) -> dict:
    """Exact law of T(n*) as ``{cost: Fraction}`` (costs rounded to 12 digits)."""
    if nstar > EXACT_MAX_N:
        raise TooLarge(f"exact distribution limited to n* <= {EXACT_MAX_N}")
    dists = [{0.0: Fraction(1)}, {0.0: Fraction(1)}]
    for n in range(2, nstar + 1):
        toll = spec.toll_at(n)
        acc: dict = defaultdict(Fraction)
        for kids, p in child_distribution(spec.shape, n).items():
            kids = kids if isinstance(kids, tuple) else (kids,)
            law = {0.0: Fraction(1)}
            for h in kids:
                law = _convolve(law, dists[h])
            for c, q in law.items():
                acc[round(c + toll, 12)] += p * q
        dists.append(dict(acc))
    return dict(sorted(dists[nstar].items()))


def _convolve(a: dict, b: dict) -> dict:
    out: dict = defaultdict(Fraction)
    for x, p in a.items():
        for y, q in b.items():
            out[round(x + y, 12)] += p * q
    return out


def exact_tail(spec: PrrSpec, nstar: int, kappa: float) -> Fraction:
    """Pr[T(n*) >= kappa] exactly."""
    law = cost_distribution(spec, nstar)
    thr = kappa - KAPPA_RTOL * max(1.0, abs(kappa))
    return sum((p for c, p in law.items() if c >= thr), Fraction(0))
