import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hetreuse.allocator import (InfeasibleAllocation, fw_gap, log_utility, maximize_log_mixture,
                                optimize_allocation, truncate, utility, write_trace)
from hetreuse.oracle import grid_allocation, random_instance
from hetreuse.rates import RateTensor

W = 10e6


def exclusive_pair(c=3.0):
    # user 1 on cell 1, user 2 on cell 2; pattern i only serves user i
    rbar = np.zeros((2, 2, 2))
    rbar[0, 0, 0] = c
    rbar[1, 1, 1] = c
    return RateTensor.from_array(rbar, W), np.array([0, 1])


def test_utility_unit_case():
    rates = RateTensor.from_array(np.full((1, 1, 1), math.e), 1.0)
    rep = utility(np.array([0]), np.array([1.0]), rates, np.ones(1))
    assert rep.value == pytest.approx(1.0)
    assert rep.feasible


def test_utility_zero_rate_is_infeasible():
    rates, serving = exclusive_pair()
    rep = utility(serving, np.array([1.0, 0.0]), rates, np.ones(2))
    assert rep.value == -math.inf and not rep.feasible


def test_utility_dimension_checks():
    rates, serving = exclusive_pair()
    with pytest.raises(ValueError):
        utility(serving, np.array([1.0]), rates, np.ones(2))
    with pytest.raises(ValueError):
        utility(serving[:1], np.array([0.5, 0.5]), rates, np.ones(2))


def test_log_base():
    assert log_utility(np.array([8.0]), np.ones(1), log_base=2) == pytest.approx(3.0)


def test_symmetric_split():
    rates, serving = exclusive_pair()
    alloc = optimize_allocation(serving, rates, np.ones(2), tol=1e-10)
    assert alloc.pi == pytest.approx([0.5, 0.5], abs=1e-8)
    assert alloc.converged


def test_weighted_split():
    rates, serving = exclusive_pair()
    alloc = optimize_allocation(serving, rates, np.array([2.0, 1.0]), tol=1e-10)
    assert alloc.pi == pytest.approx([2 / 3, 1 / 3], abs=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_matches_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 5, 3, 3)
    rates = inst.tensor()
    serving = inst.rbar.max(axis=2).argmax(axis=1)
    alloc = optimize_allocation(serving, rates, inst.weights, tol=1e-10)
    grid = grid_allocation(serving, rates, inst.weights, 1e-3)
    gval = utility(serving, grid, rates, inst.weights).value
    assert alloc.value >= gval - 1e-9
    assert alloc.value - gval <= 1e-4
    assert alloc.gap <= 1e-6


@pytest.mark.parametrize("pi,grad,gap", [
    ([0.25, 0.25, 0.5], [3.0, 3.0, 3.0], 0.0),
    ([0.0, 1.0], [1.0, 2.0], 0.0),
    ([1.0, 0.0], [1.0, 2.0], 1.0),
])
def test_fw_gap_examples(pi, grad, gap):
    assert fw_gap(np.array(pi), np.array(grad)) == pytest.approx(gap)


def test_infeasible_user_raises():
    C = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(InfeasibleAllocation) as err:
        maximize_log_mixture(C, np.ones(2))
    assert err.value.user == 1


def test_ascent_trace(tmp_path):
    rng = np.random.default_rng(8)
    C = rng.random((30, 12)) * (rng.random((30, 12)) < 0.5) + 1e-3 * np.eye(30, 12)
    C[:, 0] += 1e-3
    alloc = maximize_log_mixture(C, np.ones(30), tol=1e-9, keep_trace=True)
    values = [v for _, v, _ in alloc.trace]
    assert np.all(np.diff(values) >= -1e-9)
    assert alloc.trace[-1][2] <= 1e-9 * max(1, abs(alloc.value))
    assert len(write_trace(alloc, tmp_path / "t.csv").read_text().splitlines()) == len(values) + 1


def test_plain_frank_wolfe_reaches_same_point():
    rng = np.random.default_rng(1)
    C = rng.random((8, 4)) + 0.01
    a = maximize_log_mixture(C, np.ones(8), tol=1e-9)
    b = maximize_log_mixture(C, np.ones(8), tol=1e-9, newton=False, max_iters=200_000)
    assert a.value == pytest.approx(b.value, abs=1e-7)


def test_warm_start_keeps_optimum():
    rng = np.random.default_rng(2)
    C = rng.random((10, 5))
    a = maximize_log_mixture(C, np.ones(10), tol=1e-10)
    b = maximize_log_mixture(C, np.ones(10), tol=1e-10, init=a.pi)
    assert b.value == pytest.approx(a.value, abs=1e-9)
    assert b.iterations <= 2


def test_many_patterns_start_from_vertex():
    rng = np.random.default_rng(4)
    C = rng.random((20, 100)) * (rng.random((20, 100)) < 0.3)
    C[:, 0] += 0.05
    alloc = maximize_log_mixture(C, np.ones(20), tol=1e-8)
    assert alloc.converged
    assert np.sum(alloc.pi > 1e-4) <= 20 + 1


def test_truncate():
    out = truncate(np.array([0.5, 0.5 - 1e-10, 1e-10]))
    assert out[2] == 0.0 and out.sum() == pytest.approx(1.0)


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6))
def test_solution_on_simplex(seed, K, I):
    rng = np.random.default_rng(seed)
    C = rng.random((K, I)) * (rng.random((K, I)) < 0.7)
    C[:, rng.integers(I)] += 0.1
    alloc = maximize_log_mixture(C, rng.uniform(0.5, 2, K), tol=1e-9)
    assert np.all(alloc.pi >= 0)
    assert alloc.pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert alloc.converged
