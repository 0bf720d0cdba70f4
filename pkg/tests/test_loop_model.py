from fractions import Fraction

import numpy as np
import pytest

from concbound import rng
from concbound.errors import BadDistribution, CapExceeded, NoBranchCovers, NonIncremental, SpecSyntaxError
from concbound.loop_model import (
    DiscreteDist,
    branch_delta_projection,
    coverage_gap,
    parse_constraint,
    parse_loop_spec,
    run_trial,
    simulate_loop,
)

from conftest import loop

RDWALK1 = """
[loop]
vars = ["x"]
guard = ["x >= 0"]
init = { x = 10 }
[[branch]]
[[branch.step]]
prob = 0.75
delta = { x = -1 }
[[branch.step]]
prob = "1/4"
delta = { x = 1 }
"""

ADV2D = """
[loop]
vars = ["x", "y"]
guard = ["x >= 0", "y <= 5", "y >= 0"]
init = { x = 4, y = 1 }
[[branch]]
region = ["x >= y"]
[[branch.step]]
prob = "2/3"
delta = { x = -1 }
[[branch.step]]
prob = "1/3"
delta = { y = 1 }
[[branch]]
region = ["x <= y"]
[[branch.step]]
prob = 1
delta = { x = -1, y = "-1/2" }
"""


def test_parse_rdwalk1():
    spec = parse_loop_spec(RDWALK1)
    assert spec.vars == ("x",)
    assert spec.init == (10,)
    assert spec.branches[0].steps.support == (((Fraction(-1),), Fraction(3, 4)), ((Fraction(1),), Fraction(1, 4)))


def test_parse_two_variable_regions():
    spec = parse_loop_spec(ADV2D)
    assert len(spec.branches) == 2
    assert coverage_gap(spec) is None


def test_bad_distribution():
    with pytest.raises(BadDistribution):
        parse_loop_spec(RDWALK1.replace('"1/4"', "0.2").replace("0.75", "0.7"))


def test_non_incremental():
    with pytest.raises(NonIncremental):
        parse_loop_spec(RDWALK1.replace('delta = { x = 1 }', 'assign = { x = 0 }'))
    with pytest.raises(NonIncremental):
        parse_loop_spec(RDWALK1.replace('delta = { x = 1 }', 'delta = { x = "x" }'))


def test_region_gap_is_rejected():
    gap = ADV2D.replace('region = ["x <= y"]', 'region = ["x <= y - 1"]')
    with pytest.raises(NoBranchCovers):
        parse_loop_spec(gap)


@pytest.mark.parametrize("text, coeffs, bound", [
    ("x >= 0", (-1,), 0),
    ("2*x + 3 <= 7", (2,), 4),
    ("x <= 1/2*x + 1", (Fraction(1, 2),), 1),
])
def test_parse_constraint(text, coeffs, bound):
    c = parse_constraint(text, ["x"])
    assert c.coeffs == tuple(Fraction(v) for v in coeffs)
    assert c.bound == bound


@pytest.mark.parametrize("text", ["x < 0", "x*x <= 1", "x <= 1 <= 2", "z >= 0"])
def test_parse_constraint_errors(text):
    with pytest.raises(SpecSyntaxError):
        parse_constraint(text, ["x"])


def test_forced_draw_exits_immediately():
    spec = loop("rdwalk1")
    tr = run_trial(spec, rng.ForcedStream([0.1]), init=[0])
    assert tr.iterations == 1 and tr.final == (-1.0,)


def test_countdown_runs_six_times():
    tr = run_trial(loop("countdown"), rng.Stream(0, 0))
    assert tr.iterations == 6
    assert not loop("countdown").in_guard(tr.final)


def test_cap_is_distinct():
    with pytest.raises(CapExceeded):
        run_trial(loop("zerodrift"), rng.Stream(0, 0), cap=3)
    s = simulate_loop(loop("zerodrift"), 50, seed=1, cap=3)
    assert s.capped.any()


@pytest.mark.parametrize("name", ["rdwalk1", "rdwalk3", "prspeed", "countdown"])
def test_serial_and_vectorised_are_bit_identical(name):
    spec = loop(name)
    vec = simulate_loop(spec, 200, seed=11)
    ser = [run_trial(spec, rng.Stream(11, t)).iterations for t in range(200)]
    assert vec.iterations.tolist() == ser
    assert not vec.capped.any()


def test_rdwalk1_mean_hitting_time():
    # drift -1/2 from x0 = 10, exit below 0: E[T] = (x0 + 1) / (1/2) = 22
    s = simulate_loop(loop("rdwalk1"), 200_000, seed=0)
    t = s.iterations
    se = t.std() / np.sqrt(len(t))
    assert abs(t.mean() - 22.0) <= 4 * se


def test_projection_masses():
    spec = loop("rdwalk1")
    (d,) = branch_delta_projection(spec, [2])
    assert d.support == ((-2, Fraction(3, 4)), (2, Fraction(1, 4)))
    (c,) = branch_delta_projection(loop("countdown"), [1])
    assert c.support == ((-1, 1),)
    for dist in branch_delta_projection(loop("prspeed"), [Fraction(-2, 3), -2]):
        assert sum(dist.probs()) == 1


def test_discrete_dist_rejects_nonpositive():
    with pytest.raises(BadDistribution):
        DiscreteDist(((0, Fraction(1)), (1, Fraction(0))))


def test_guard_exit_invariant():
    spec = parse_loop_spec(ADV2D)
    for t in range(100):
        tr = run_trial(spec, rng.Stream(5, t))
        assert not spec.in_guard(tr.final)
