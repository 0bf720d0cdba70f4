import math
from fractions import Fraction

import numpy as np
import pytest

from concbound import rng
from concbound.errors import InvariantViolation, SpecSyntaxError, TerminalState, TooLarge
from concbound.expr import parse_linlog
from concbound.prr_model import (
    HALFSPLIT,
    TWOCALL_SPLIT,
    UNIFORM,
    ChainState,
    PrrSpec,
    child_distribution,
    cost_distribution,
    exact_tail,
    hits_at,
    mixed,
    parse_prr_spec,
    run_trial,
    simulate_costs,
    step,
)

from conftest import prr

QS_TOML = """
[prr]
name = "QuickSelect"
toll = "n - 1"
shape = "halfsplit"
f = "5*n"
kappa = "12*n"
"""


def test_parse_quickselect():
    spec = parse_prr_spec(QS_TOML)
    assert spec.name == "QuickSelect"
    assert str(spec.toll) == "n - 1"
    assert spec.shape == HALFSPLIT
    assert spec.symbolic


@pytest.mark.parametrize("body, exc", [
    ('toll = "n"\nshape = "halfsplit"\nf = "5*n"', SpecSyntaxError),  # no kappa
    ('toll = "n"\nshape = "spiral"\nf = "5*n"\nkappa = "6*n"', SpecSyntaxError),
    ('toll = "n"\nshape = "mixed"\nf = "5*n"\nkappa = "6*n"', SpecSyntaxError),
    ('toll = "n"\nshape = "uniform"\nf = "5*n"\nkappa = "6*n"\ncolour = 1', SpecSyntaxError),
    ('toll = "n"\nshape = "uniform"\nf = "5*n"\nkappa = "4*n"', InvariantViolation),
    ('toll = "n"\nshape = "uniform"\nf = "-5*n"\nkappa = "6*n"', InvariantViolation),
    ('toll = "n"\nshape = "mixed"\ngamma = 1.5\nf = "5*n"\nkappa = "6*n"', InvariantViolation),
    ('toll = "n"\nshape = "uniform"\nf = "5*n\nkappa = "6*n"', SpecSyntaxError),
])
def test_parse_errors(body, exc):
    with pytest.raises(exc):
        parse_prr_spec("[prr]\n" + body)


@pytest.mark.parametrize("shape", [UNIFORM, HALFSPLIT, mixed(Fraction(1, 3)), TWOCALL_SPLIT])
@pytest.mark.parametrize("n", [2, 3, 4, 7, 10, 33])
def test_child_distribution_mass_is_exact(shape, n):
    dist = child_distribution(shape, n)
    assert sum(dist.values()) == 1
    assert all(isinstance(p, Fraction) and p > 0 for p in dist.values())


def test_halfsplit_multiset():
    # n = 5: {3, 4} from ceil(n/2).., {2, 3, 4} from floor(n/2)..
    assert child_distribution(HALFSPLIT, 5) == {2: Fraction(1, 5), 3: Fraction(2, 5), 4: Fraction(2, 5)}


def test_quickselect_two_costs_one(quickselect):
    assert run_trial(quickselect, 2) == 1.0


def test_step_terminal_raises(quickselect):
    with pytest.raises(TerminalState):
        step(ChainState((), 0.0), quickselect, rng.Stream(0, 0))


def test_forced_quicksort_trajectory():
    qs = prr("quicksort")
    # n = 4: u = 0 -> split (0, 3); n = 3: u = 0.99 -> (2, 0); n = 2: u = 0 -> (0, 1)
    cost = run_trial(qs, 4, rng.ForcedStream([0.0, 0.99, 0.0]))
    assert cost == 3 + 2 + 1


@pytest.mark.parametrize("name, nstar", [("quickselect", 40), ("randomsearch", 50), ("l1diameter", 30),
                                         ("quicksort", 25), ("l2diameter", 20)])
def test_serial_and_vectorised_are_bit_identical(name, nstar):
    spec = prr(name)
    vec = simulate_costs(spec, nstar, 300, seed=7)
    ser = np.array([run_trial(spec, nstar, rng.Stream(7, t)) for t in range(300)])
    assert np.array_equal(vec, ser)


def test_chunking_and_offsets_do_not_change_costs(quickselect):
    full = simulate_costs(quickselect, 30, 1000, seed=3)
    parts = np.concatenate([simulate_costs(quickselect, 30, 400, seed=3, first_trial=0, chunk=64),
                            simulate_costs(quickselect, 30, 600, seed=3, first_trial=400, chunk=100)])
    assert np.array_equal(full, parts)


def test_exact_tail_quicksort_small():
    qs = prr("quicksort")
    assert exact_tail(qs, 3, 3) == Fraction(2, 3)
    assert cost_distribution(qs, 3) == {2.0: Fraction(1, 3), 3.0: Fraction(2, 3)}


def test_cost_distribution_refuses_large():
    with pytest.raises(TooLarge):
        cost_distribution(prr("quicksort"), 15)


@pytest.mark.parametrize("name", ["quickselect", "randomsearch", "l1diameter", "quicksort"])
def test_cost_distribution_mass_is_exact(name):
    assert sum(cost_distribution(prr(name), 9).values()) == 1


def test_hits_at_boundary():
    costs = np.array([1.0, 2.0, 3.0 - 1e-12])
    assert hits_at(costs, 3.0) == 1
    assert hits_at(costs, 0.0) == 3


def test_toll_and_ftilde_vanish_below_two():
    spec = PrrSpec("t", parse_linlog("n + 4"), UNIFORM, parse_linlog("6*n"), parse_linlog("6*n"))
    assert spec.toll_at(1) == 0 and spec.toll_at(0) == 0
    assert spec.f_tilde(1) == 0 and spec.f_tilde(3) == 18
    assert math.isclose(spec.toll_at(3), 7)
