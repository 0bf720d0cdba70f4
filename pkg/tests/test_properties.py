"""Hypothesis property suites; every tolerance is pinned next to its use."""
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from concbound import rng
from concbound.expr import (
    Basis,
    LinLogExpr,
    PsiExpr,
    parse_linlog,
    parse_psi,
    psi_derive,
    psi_eval,
    psi_simplify_divide,
)
from concbound.loop_model import DiscreteDist, branch_delta_projection, parse_loop_spec, run_trial, simulate_loop
from concbound.loop_synth import branch_residual, closed_form_beta, search_beta_alpha
from concbound.oracle import estimate_tail
from concbound.prr_model import HALFSPLIT, TWOCALL_SPLIT, UNIFORM, PrrSpec, child_distribution, mixed
from concbound.prr_synth import derive_bound, find_cstar, prove_separable, verify_condition_numeric

from conftest import prr

FD_RTOL = 1e-6
GRID_RTOL = 1e-9

nus = st.integers(-12, 16).map(lambda k: k / 4)
mus = st.integers(-20, 20).filter(bool).map(lambda k: k / 2)
psi_terms = st.lists(st.tuples(mus, nus, st.integers(0, 1)), min_size=1, max_size=5)


@settings(max_examples=200, deadline=None)
@given(psi_terms, st.floats(1.05, 6.0))
def test_derivative_matches_central_difference(terms, c):
    psi = PsiExpr.of(terms)
    assume(not psi.is_zero())
    h = 1e-5 * c
    fd = (psi_eval(psi, c + h) - psi_eval(psi, c - h)) / (2 * h)
    exact = psi_eval(psi_derive(psi), c)
    # scale: magnitudes of the derivative's terms, so cancellation cannot hide errors
    scale = sum(abs(t.value(c)) for t in psi_derive(psi).terms) + sum(abs(t.value(c)) for t in psi.terms) / c
    assert abs(fd - exact) <= FD_RTOL * scale


@settings(max_examples=200, deadline=None)
@given(psi_terms)
def test_psi_string_roundtrip(terms):
    psi = PsiExpr.of(terms)
    assert parse_psi(str(psi)) == psi


fracs = st.fractions(min_value=-20, max_value=20, max_denominator=12)


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.sampled_from(list(Basis)), fracs, max_size=4))
def test_linlog_string_roundtrip(mapping):
    e = LinLogExpr.of(mapping)
    assert parse_linlog(str(e)) == e


@settings(max_examples=200, deadline=None)
@given(psi_terms, st.floats(1.0, 50.0))
def test_simplify_divide_preserves_sign(terms, c):
    psi = PsiExpr.of(terms)
    assume(not psi.is_zero())
    v, w = psi_eval(psi, c), psi_eval(psi_simplify_divide(psi), c)
    scale = sum(abs(t.value(c)) for t in psi.terms)
    assume(abs(v) > 1e-9 * scale)
    assert math.copysign(1, v) == math.copysign(1, w)


@settings(max_examples=300, deadline=None)
@given(psi_terms)
def test_successful_traces_are_semantically_separable(terms):
    psi = PsiExpr.of(terms)
    assume(not psi.is_zero())
    trace = prove_separable(psi)
    assert trace.max_depth <= psi.count_terms() + psi.count_log_terms() + 1
    if not trace.success:
        return
    grid = np.geomspace(1.0, 1e3, 600)
    vals = [psi_eval(psi, c) for c in grid]
    scales = [sum(abs(t.value(c)) for t in psi.terms) for c in grid]
    went_negative = False
    for v, s in zip(vals, scales):
        if v < -GRID_RTOL * s:
            went_negative = True
        elif v > GRID_RTOL * s:
            assert not went_negative, f"psi turns positive again: {psi}"
    cstar = find_cstar(psi, trace)
    for c in np.linspace(1.0, min(cstar, 1e3), 50):
        assert psi_eval(psi, c) >= -GRID_RTOL * sum(abs(t.value(c)) for t in psi.terms)


TOLLS = {"1": ["{k}*ln(n)", "{k}*n"], "n": ["{k}*n", "{k}*n*ln(n)"], "n - 1": ["{k}*n"],
         "2*n + 3": ["{k}*n", "{k}*n*ln(n)"], "ln(n)": ["{k}*n"], "n*ln(n)": ["{k}*n*ln(n)"],
         "ln(n) + 1": ["{k}*n"]}
SHAPES = [UNIFORM, HALFSPLIT, mixed(Fraction(1, 3)), mixed(Fraction(3, 4))]


@st.composite
def prr_specs(draw):
    toll = draw(st.sampled_from(sorted(TOLLS)))
    f = draw(st.sampled_from(TOLLS[toll])).format(k=draw(st.sampled_from([2, 3, 5, 8, 12, 20])))
    nstar = draw(st.integers(2, 300))
    shape = draw(st.sampled_from(SHAPES))
    return PrrSpec("random", parse_linlog(toll), shape, parse_linlog(f), parse_linlog(f), nstar)


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(prr_specs(), st.data())
def test_soundness_chain(spec, data):
    """A derived alpha satisfies the recurrence inequality by direct expectation for 2 <= n <= n*."""
    b = derive_bound(spec)
    if b.trivial:
        return
    res = verify_condition_numeric(spec, b.alpha(), int(spec.nstar))
    assert res.holds, (str(spec.toll), str(spec.f), str(spec.shape), spec.nstar, b.strategy, b.cstar)
    # a smaller instance reuses the same symbolic c*; its alpha must also satisfy the inequality
    m = data.draw(st.integers(2, int(spec.nstar)))
    assert verify_condition_numeric(spec.with_nstar(m), b.alpha(m), m).holds


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 200), st.fractions(0, 1, max_denominator=50))
def test_child_mass_exact(n, gamma):
    for shape in (UNIFORM, HALFSPLIT, mixed(gamma), TWOCALL_SPLIT):
        dist = child_distribution(shape, n)
        assert sum(dist.values()) == 1
        assert all(p > 0 for p in dist.values())


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(1, 20)), min_size=1, max_size=6),
       st.integers(-3, 3))
def test_projection_mass_exact(steps, eta):
    total = sum(w for _, w in steps)
    pairs = [((Fraction(d),), Fraction(w, total)) for d, w in steps]
    dist = DiscreteDist.merged(pairs)
    from concbound.loop_model import Branch, LoopSpec, parse_constraint
    spec = LoopSpec("p", ("x",), (parse_constraint("x >= 0", ["x"]),), (Branch(None, dist),), (Fraction(0),))
    (proj,) = branch_delta_projection(spec, [eta])
    assert sum(proj.probs()) == 1


@settings(max_examples=100, deadline=None)
@given(st.fractions(Fraction(51, 100), Fraction(99, 100), max_denominator=100), st.integers(1, 4))
def test_beta_identity_random(p, a):
    d = DiscreteDist(((Fraction(-a), p), (Fraction(a), 1 - p)))
    beta, alpha = search_beta_alpha([d])
    assert beta == pytest.approx(closed_form_beta(p, 1 - p), rel=1e-3)
    assert branch_residual(d, alpha, beta) <= 1 + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["quickselect", "randomsearch", "l1diameter", "quicksort"]),
       st.integers(2, 40))
def test_prr_serial_vector_equal(seed, name, nstar):
    from concbound.prr_model import run_trial as prr_trial, simulate_costs
    spec = prr(name)
    vec = simulate_costs(spec, nstar, 20, seed=seed)
    assert vec.tolist() == [prr_trial(spec, nstar, rng.Stream(seed, t)) for t in range(20)]


WALK = """
[loop]
vars = ["x"]
guard = ["x >= 0"]
init = {{ x = {x0} }}
[[branch]]
[[branch.step]]
prob = "{p}"
delta = {{ x = -{a} }}
[[branch.step]]
prob = "{q}"
delta = {{ x = {b} }}
"""


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 15), st.fractions(Fraction(3, 5), Fraction(19, 20), max_denominator=20))
def test_loop_serial_vector_equal_and_monotone(seed, x0, p):
    spec = parse_loop_spec(WALK.format(x0=x0, p=p, q=1 - p, a=1, b=1))
    vec = simulate_loop(spec, 30, seed=seed)
    assert vec.iterations.tolist() == [run_trial(spec, rng.Stream(seed, t)).iterations for t in range(30)]
    ests = estimate_tail(spec, None, [1, 5, 10, 20, 40], trials=500, seed=seed)
    pts = [e.point for e in ests]
    assert pts == sorted(pts, reverse=True)
