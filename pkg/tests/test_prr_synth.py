import math

import pytest
from scipy.optimize import brentq

from concbound.errors import KappaBelowF, SpecSyntaxError, TrivialBound, UnsupportedShape
from concbound.expr import Basis, parse_linlog, psi_eval
from concbound.prr_synth import (
    BLOCK,
    CSTAR_RTOL,
    LINEAR,
    LOG,
    bound_formula,
    bound_from_cstar,
    derive_bound,
    eval_alpha,
    eval_bound,
    find_cstar,
    gen_condition,
    nstar_power,
    overapprox_sums,
    prove_separable,
    solve_alpha,
    substitute_simplify,
    verify_condition_numeric,
)

from conftest import prr

# c* values cross-checked with an independent bracketing root finder on psi
QS_CSTAR = 2.7418077
L1_CSTAR = 12.713264
RS_ALPHA = 3.9531475


def _root(psi, lo, hi):
    return brentq(lambda c: psi_eval(psi, c), lo, hi, xtol=1e-12, rtol=1e-14)


def test_quickselect_psi_and_cstar(quickselect):
    b = derive_bound(quickselect)
    assert b.strategy == LINEAR
    assert str(b.psi) == "-2*c^2.5 + 5*c^1.5*ln(c) + 2"
    assert b.trace.success
    ref = _root(b.psi, 2.0, 4.0)
    assert ref == pytest.approx(QS_CSTAR, rel=1e-6)
    assert b.cstar <= ref and b.cstar == pytest.approx(ref, rel=2 * CSTAR_RTOL)


def test_quickselect_bounds(quickselect):
    b = derive_bound(quickselect)
    assert eval_bound(b, parse_linlog("12*n"), 100) == pytest.approx(QS_CSTAR ** -7, rel=1e-5)
    assert eval_bound(b, parse_linlog("11*n"), 100) == pytest.approx(QS_CSTAR ** -6, rel=1e-5)
    assert bound_formula(b) == "2.74181^(-7)"


def test_randomsearch_power_law():
    b = derive_bound(prr("randomsearch"))
    assert b.strategy == LOG
    assert _root(b.psi, 2.0, 8.0) == pytest.approx(RS_ALPHA, rel=1e-6)
    e = nstar_power(b, parse_linlog("11*ln(n)"))
    assert e == pytest.approx(6 * math.log(RS_ALPHA), rel=1e-5)
    assert bound_formula(b, parse_linlog("11*ln(n)")).startswith("(n*)^(-8.247")


def test_l1diameter():
    b = derive_bound(prr("l1diameter"))
    assert str(b.psi) == "-c^5 + 5*c^4*ln(c) + 1"
    assert _root(b.psi, 2.0, 32.0) == pytest.approx(L1_CSTAR, rel=1e-6)
    assert eval_bound(b, parse_linlog("13*n"), 1000) == pytest.approx(L1_CSTAR ** -8, rel=1e-5)


def test_l2diameter_block2_is_trivial_with_reason():
    b = derive_bound(prr("l2diameter"))
    assert b.trivial and b.B_used == 2
    assert "c* = 1" in b.reason
    # the block-2 condition collapses: psi(1) = 0 and psi'(1) < 0
    assert psi_eval(b.psi, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert psi_eval(b.psi, 1.01) < 0


def test_l2diameter_block4():
    b = derive_bound(prr("l2diameter"), B=4)
    assert b.strategy == BLOCK and b.B_used == 4
    v = eval_bound(b, parse_linlog("20*n*ln(n)"), 1000)
    assert 2.07e-7 <= v <= 2.07e-5


def test_every_step_renders(quickselect):
    cond = gen_condition(quickselect)
    assert "sum_{i=ceil(n/2)}^{n-1}" in cond.render()
    over = overapprox_sums(cond, strategy=LINEAR)
    assert over.sum_free
    assert "ln(alpha)" in over.render()
    assert str(substitute_simplify(over, Basis.N)) == "-2*c^2.5 + 5*c^1.5*ln(c) + 2"


def test_separability_depth_bound():
    for name in ("quickselect", "randomsearch", "l1diameter"):
        b = derive_bound(prr(name))
        assert b.trace.max_depth <= b.psi.count_terms() + b.psi.count_log_terms()


def test_find_cstar_returns_feasible_endpoint(quickselect):
    b = derive_bound(quickselect)
    c = find_cstar(b.psi, b.trace)
    assert psi_eval(b.psi, c) >= 0
    assert psi_eval(b.psi, c * (1 + 2 * CSTAR_RTOL)) < 0


def test_solve_alpha_forms():
    assert solve_alpha(2.74, Basis.N, "symbolic") == "2.74^(1/n*)"
    assert solve_alpha(2.0, Basis.N, 4) == pytest.approx(2 ** 0.25, rel=1e-15)
    with pytest.raises(TrivialBound):
        solve_alpha(1.0, Basis.N, 10)


def test_kappa_below_f_rejected(quickselect):
    b = derive_bound(quickselect)
    with pytest.raises(KappaBelowF):
        eval_bound(b, parse_linlog("4*n"), 50)


def test_quicksort_is_verify_only():
    with pytest.raises(UnsupportedShape):
        derive_bound(prr("quicksort"))


def test_quicksort_verify_holds_and_breaks():
    qs = prr("quicksort")
    ok = verify_condition_numeric(qs, "2.3^(1/nstar)", 200)
    assert ok.holds and ok.first_violation is None
    bad = verify_condition_numeric(qs, 3.0, 200)
    assert not bad.holds and bad.first_violation == 48
    assert verify_condition_numeric(qs, "2.3^(1/nstar)", 1).holds


@pytest.mark.parametrize("k1, k2", [(2, 12), (1, 1)])
def test_quicksort_bound_family(k1, k2):
    f = parse_linlog("9*n*ln(n)")
    kappa = parse_linlog(f"{9 + k1}*n*ln(n) + {k2}*n")
    b = bound_from_cstar(2.3, f, Basis.N, kappa, nstar=200, name="QuickSort")
    assert eval_bound(b) == pytest.approx(2.3 ** (-k1 * math.log(200) - k2), rel=1e-12)
    assert bound_formula(b) == (f"2.3^(-{k1}*ln(n*) - {k2})" if k1 > 1 else f"2.3^(-ln(n*) - {k2})")


@pytest.mark.parametrize("text, nstar, value", [
    ("2.3^(1/nstar)", 200, 2.3 ** (1 / 200)),
    ("2.3^(1/n*)", 200, 2.3 ** (1 / 200)),
    ("exp(ln(2)/4)", None, 2 ** 0.25),
    (1.5, None, 1.5),
])
def test_eval_alpha(text, nstar, value):
    assert eval_alpha(text, nstar) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text", ["__import__('os')", "nstar", "2**"])
def test_eval_alpha_rejects(text):
    with pytest.raises(SpecSyntaxError):
        eval_alpha(text)


def test_concrete_nstar_bound_dominates_numeric_condition(quickselect):
    spec = quickselect.with_nstar(80)
    b = derive_bound(spec)
    assert verify_condition_numeric(spec, b.alpha(), 80).holds


def test_prove_separable_rejects_negative_at_one():
    from concbound.expr import parse_psi
    t = prove_separable(parse_psi("c - 3"))
    assert not t.success
