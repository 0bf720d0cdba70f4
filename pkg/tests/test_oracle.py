import io
import math

import pytest

from concbound.errors import UnknownReference
from concbound.oracle import (
    FAIL,
    PASS,
    WARN,
    TailEstimate,
    check_dominance,
    estimate_tail,
    karp_reference,
    wilson_upper,
    write_csv,
    dominance_rows,
)
from concbound.prr_model import exact_tail

from conftest import loop, prr


def test_quickselect_two_always_costs_one(quickselect):
    (e,) = estimate_tail(quickselect, 2, [1.0], trials=50)
    assert e.point == 1.0


def test_kappa_zero_is_certain(quickselect):
    (e,) = estimate_tail(quickselect, 30, [0.0], trials=100)
    assert e.point == 1.0 and e.wilson_upper_99 == 1.0


def test_quicksort_three_matches_exact():
    qs = prr("quicksort")
    exact = float(exact_tail(qs, 3, 3))
    assert exact == pytest.approx(2 / 3, rel=1e-15)
    (e,) = estimate_tail(qs, 3, [3.0], trials=10**6, seed=0)
    assert abs(e.point - exact) <= 3 * math.sqrt(exact * (1 - exact) / 10**6)


@pytest.mark.parametrize("name", ["quickselect", "randomsearch", "l1diameter", "quicksort"])
@pytest.mark.parametrize("nstar", [4, 7, 10])
def test_monte_carlo_agrees_with_exact_dp(name, nstar):
    spec = prr(name)
    trials = 200_000
    from concbound.prr_model import cost_distribution
    support = sorted(cost_distribution(spec, nstar))
    kappas = support[len(support) // 2: len(support) // 2 + 3]
    for kappa, est in zip(kappas, estimate_tail(spec, nstar, kappas, trials, seed=nstar)):
        p = float(exact_tail(spec, nstar, kappa))
        assert abs(est.point - p) <= 4 * math.sqrt(max(p * (1 - p), 1e-12) / trials)


def test_tails_monotone_in_kappa(quickselect):
    ests = estimate_tail(quickselect, 40, [40, 80, 120, 160, 200, 240], trials=20_000, seed=1)
    pts = [e.point for e in ests]
    assert pts == sorted(pts, reverse=True)
    assert all(0 <= e.point <= e.wilson_upper_99 <= 1 for e in ests)


def test_loop_estimates_and_caps():
    ests = estimate_tail(loop("countdown"), None, [6, 7, 10], trials=1000)
    assert [e.point for e in ests] == [1.0, 0.0, 0.0]
    capped = estimate_tail(loop("zerodrift"), None, [5, 50], trials=200, cap=20)
    assert capped[0].capped > 0
    assert capped[1].hits == 0  # capped runs never count as hits


def test_dominance_verdicts():
    e = TailEstimate(1.0, 1000, 5, 0.005, wilson_upper(5, 1000))
    assert check_dominance([1.0], [e]) == [PASS]
    assert check_dominance([0.006], [e]) == [WARN]
    assert check_dominance([1e-9], [e]) == [FAIL]


def test_corrupted_bound_fails(quickselect):
    (e,) = estimate_tail(quickselect, 60, [300.0], trials=10_000)
    assert check_dominance([1e-9], [e]) == [FAIL]


def test_wilson_limits():
    assert wilson_upper(0, 100) == pytest.approx(0.0513, abs=1e-4)
    assert wilson_upper(100, 100) == 1.0
    with pytest.raises(ValueError):
        wilson_upper(0, 0)


@pytest.mark.parametrize("name, tail, value", [
    ("QuickSelect", "17n*", 0.75 ** 13),
    ("QuickSelect", "24 n*", 0.75 ** 20),
    ("L1Diameter", "13n*", 0.5 ** 11),
    ("RandomSearch", "11ln(n*)", 0.75 ** (11 - 1 / math.log(4 / 3))),
    ("L2Diameter", "20 n* ln(n*)", 0.5 ** 18),
])
def test_karp_reference(name, tail, value):
    assert karp_reference(name, tail) == pytest.approx(value, rel=1e-15)


def test_karp_reference_values_rounded():
    assert karp_reference("QuickSelect", "17n*") == pytest.approx(0.024, abs=5e-4)
    # quoted figures are loosely rounded: (3/4)^20 = 0.0031712, (1/2)^11 = 4.8828e-4
    assert karp_reference("QuickSelect", "24n*") == pytest.approx(0.00318, rel=2e-2)
    assert karp_reference("L1Diameter", "13n*") == pytest.approx(4.89e-4, rel=2e-2)


def test_karp_unknown():
    with pytest.raises(UnknownReference):
        karp_reference("QuickSort", "17n*")


def test_csv_columns():
    e = TailEstimate(3.0, 10, 1, 0.1, 0.5)
    buf = io.StringIO()
    write_csv(dominance_rows([0.2], [e]), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "kappa,bound,empirical,wilson_upper_99,verdict"
    assert lines[1] == "3.0,0.2,0.1,0.5,WARN"
