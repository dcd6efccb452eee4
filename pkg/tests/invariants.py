"""Randomised invariant checks shared by the property tests and the acceptance run.

Each check draws one case from an integer seed and raises AssertionError on
violation. ``run_property`` drives a check with hypothesis.
"""
from __future__ import annotations

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from hetreuse.allocator import log_utility, maximize_log_mixture, optimize_allocation, truncate, utility
from hetreuse.config import SearchParams
from hetreuse.harness import nearest_rank
from hetreuse.oracle import random_instance
from hetreuse.rates import FadingModel, RateTensor, aggregate_rate, user_rates
from hetreuse.search import TabuList, make_solution, reassign_deltas, tabu_search

W = 10e6


def _physical(rng, K=None, B=None, I=None, **kw):
    K = K or int(rng.integers(1, 9))
    B = B or int(rng.integers(1, 5))
    I = I or int(rng.integers(1, 2 ** B))
    codes = rng.choice(np.arange(1, 2 ** B), size=min(I, 2 ** B - 1), replace=False)
    active = ((codes[:, None] >> np.arange(B)[None, :]) & 1).astype(bool)
    received = 10 ** rng.uniform(-3, 1, (K, B))
    return RateTensor(received, active, float(10 ** rng.uniform(-2, 0)), W, **kw)


def _feasible_serving(rng, rates):
    serv = rates.servable()
    return np.array([rng.choice(np.flatnonzero(row)) for row in serv])


def check_simplex_feasibility(seed):
    rng = np.random.default_rng(seed)
    K, I = int(rng.integers(1, 12)), int(rng.integers(1, 20))
    C = rng.random((K, I)) * (rng.random((K, I)) < 0.5)
    C[np.arange(K), rng.integers(0, I, K)] += rng.random(K) + 1e-3
    alloc = maximize_log_mixture(C, rng.uniform(0.2, 3.0, K), tol=1e-9)
    assert np.all(alloc.pi >= 0)
    assert abs(alloc.pi.sum() - 1.0) <= 1e-12
    assert alloc.converged and alloc.gap >= 0


def check_interference_monotonicity(seed):
    rng = np.random.default_rng(seed)
    K, B = int(rng.integers(1, 6)), int(rng.integers(2, 6))
    received = 10 ** rng.uniform(-3, 1, (K, B))
    base = rng.random(B) < 0.5
    base[rng.integers(B)] = True
    extra = base.copy()
    off = np.flatnonzero(~base)
    if len(off):
        extra[rng.choice(off)] = True
    rates = RateTensor(received, np.array([base, extra]), 0.1, W)
    T = rates.table.total_rx
    assert np.all(T[:, 1] >= T[:, 0])
    for b in np.flatnonzero(base):
        assert np.all(rates.cell_rates(b)[:, 1] <= rates.cell_rates(b)[:, 0] + 1e-15)


def check_incremental_vs_full(seed):
    rng = np.random.default_rng(seed)
    K, B, I = int(rng.integers(1, 9)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
    rbar = rng.random((K, B, I)) * (rng.random((K, B, I)) < 0.6) * 5
    rbar[:, :, 0] += 0.01
    rates = RateTensor.from_array(rbar, W)
    w = rng.uniform(0.5, 2.0, K)
    sol = make_solution(rng.integers(0, B, K), rng.dirichlet(np.ones(I)), rates, w)
    delta = reassign_deltas(sol, w)
    for u in range(K):
        for m in range(B):
            if m == sol.serving[u]:
                assert np.isnan(delta[u, m])
                continue
            serving = sol.serving.copy()
            serving[u] = m
            full = utility(serving, sol.pi, rates, w).value
            if full == -np.inf:
                assert delta[u, m] == -np.inf
            else:
                assert abs(sol.utility + delta[u, m] - full) <= 1e-9


def _small_search(seed, check=True):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 8))
    B = int(rng.integers(2, 5))
    inst = random_instance(rng, K, B, int(rng.integers(1, min(4, 2 ** B - 1) + 1)))
    params = SearchParams(tenure=int(rng.integers(1, 4)), max_iter_inner=int(rng.integers(1, 5)),
                          max_iter_total=int(rng.integers(5, 40)),
                          diversification=int(rng.integers(0, K + 1)), seed=seed)
    return tabu_search(inst.tensor(), inst.weights, params, check=check), params


def check_incumbent_monotonicity(seed):
    res, params = _small_search(seed)
    best = [row.best for row in res.trace]
    assert all(b1 >= b0 for b0, b1 in zip(best, best[1:]))
    assert res.best.utility == best[-1] >= res.initial.utility
    for row in res.trace:
        if row.tabu:
            assert row.aspiration and row.utility > row.best_before
        assert row.tabu_moves <= params.tenure


def check_tabu_expiry(seed):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, 6))
    tl = TabuList(r)
    added = []
    for t in range(30):
        tl.expire(t)
        for key, t0 in added:
            assert tl.is_tabu(key, t) == (t0 <= t < t0 + r)
        if rng.random() < 0.6:
            key = (int(rng.integers(1, 4)), int(rng.integers(0, 4)))
            added = [(k, t0) for k, t0 in added if k != key]
            tl.add(key, t + 1)
            added.append((key, t + 1))
        assert len(tl.live(t)) <= r


def check_determinism(seed):
    a, _ = _small_search(seed, check=False)
    b, _ = _small_search(seed, check=False)
    assert a.trace == b.trace
    assert np.array_equal(a.best.serving, b.best.serving) and np.array_equal(a.best.pi, b.best.pi)


def check_mc_zero_variance(seed):
    rng = np.random.default_rng(seed)
    det = _physical(rng, K=int(rng.integers(1, 4)), B=int(rng.integers(1, 4)))
    mc = RateTensor(det.received, det.active, det.noise, W,
                    fading=FadingModel("rayleigh_mc", mc_samples=int(rng.integers(1, 5)),
                                       seed=seed, distribution="none"))
    for b in range(det.n_cells):
        a, m = det.cell_rates(b), mc.cell_rates(b)
        assert np.all(np.abs(a - m) <= 1e-12 * np.maximum(1.0, np.abs(a)))


def check_dense_vs_ondemand(seed):
    rng = np.random.default_rng(seed)
    dense = _physical(rng)
    lazy = RateTensor(dense.received, dense.active, dense.noise, W, dense_limit=0)
    serving = rng.integers(0, dense.n_cells, dense.n_users)
    pi = rng.dirichlet(np.ones(dense.n_patterns))
    assert np.array_equal(dense.serving_rates(serving), lazy.serving_rates(serving))
    assert np.allclose(dense.mix(pi), lazy.mix(pi), rtol=1e-13, atol=0)


def check_linearity_in_pi(seed):
    rng = np.random.default_rng(seed)
    rates = _physical(rng)
    serving = rng.integers(0, rates.n_cells, rates.n_users)
    p, q = rng.dirichlet(np.ones(rates.n_patterns), size=2)
    lam = rng.random()
    mixed = user_rates(rates, serving, lam * p + (1 - lam) * q)
    expect = lam * user_rates(rates, serving, p) + (1 - lam) * user_rates(rates, serving, q)
    assert np.allclose(mixed, expect, rtol=1e-12, atol=1e-6)
    k = int(rng.integers(rates.n_users))
    assert np.isclose(aggregate_rate(rates, serving, p, k), user_rates(rates, serving, p)[k],
                      rtol=1e-12, atol=1e-6)


def check_concavity(seed):
    rng = np.random.default_rng(seed)
    rates = _physical(rng)
    serving = _feasible_serving(rng, rates)
    w = rng.uniform(0.5, 2.0, rates.n_users)
    p, q = rng.dirichlet(np.ones(rates.n_patterns), size=2)
    lam = rng.random()
    u = lambda x: utility(serving, x, rates, w).value
    mid = u(lam * p + (1 - lam) * q)
    assert mid >= lam * u(p) + (1 - lam) * u(q) - 1e-9 * max(1.0, abs(mid))


def check_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    rates = _physical(rng)
    serving = _feasible_serving(rng, rates)
    w = rng.uniform(0.5, 2.0, rates.n_users)
    perm = rng.permutation(rates.n_users)
    shuffled = RateTensor(rates.received[perm], rates.active, rates.noise, W)
    a = optimize_allocation(serving, rates, w, tol=1e-10).value
    b = optimize_allocation(serving[perm], shuffled, w[perm], tol=1e-10).value
    assert abs(a - b) <= 1e-7 * max(1.0, abs(a))


def check_truncation(seed):
    rng = np.random.default_rng(seed)
    pi = rng.dirichlet(np.full(int(rng.integers(1, 30)), 0.2))
    out = truncate(pi, 1e-4) if (pi >= 1e-4).any() else pi
    assert np.all(out >= 0) and abs(out.sum() - 1.0) <= 1e-12
    assert np.all((out == 0) | (pi >= 1e-4) | (out == pi))


def check_nearest_rank(seed):
    rng = np.random.default_rng(seed)
    v = rng.random(int(rng.integers(1, 200)))
    for p in (5, 50, 95):
        x = nearest_rank(v, p)
        assert np.sum(v <= x) >= p / 100 * len(v) - 1e-9
        assert np.sum(v < x) < p / 100 * len(v)
    assert log_utility(v + 1, np.ones(len(v))) > -np.inf


PROPERTIES = {
    "simplex_feasibility": (check_simplex_feasibility, 240),
    "interference_monotonicity": (check_interference_monotonicity, 300),
    "incremental_vs_full": (check_incremental_vs_full, 300),
    "incumbent_monotonicity": (check_incumbent_monotonicity, 120),
    "tabu_expiry": (check_tabu_expiry, 300),
    "determinism": (check_determinism, 80),
    "mc_zero_variance": (check_mc_zero_variance, 200),
    "dense_vs_ondemand": (check_dense_vs_ondemand, 200),
    "linearity_in_pi": (check_linearity_in_pi, 200),
    "concavity": (check_concavity, 200),
    "permutation_invariance": (check_permutation_invariance, 100),
    "truncation": (check_truncation, 200),
    "nearest_rank": (check_nearest_rank, 200),
}


def run_property(check, n_examples: int, derandomize: bool = False) -> int:
    """Run ``check`` under hypothesis; returns the number of cases executed."""
    calls = 0

    @settings(max_examples=n_examples, deadline=None, database=None, derandomize=derandomize,
              suppress_health_check=[HealthCheck.too_slow])
    @given(st.integers(0, 2 ** 32 - 1))
    def prop(seed):
        nonlocal calls
        calls += 1
        check(seed)

    prop()
    return calls
