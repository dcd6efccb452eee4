"""Exhaustive references for desk-scale instances.

``brute_force_joint`` enumerates every association (B^K of them) and solves
the split for each; ``grid_allocation`` scans the simplex on a regular grid.
Neither shares code paths with the tabu search beyond the rate container.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .allocator import log_utility, optimize_allocation
from .rates import RateTensor, loads_of

MAX_USERS, MAX_CELLS, MAX_PATTERNS = 8, 4, 4


@dataclass(frozen=True)
class SmallInstance:
    rbar: np.ndarray        # K x B x I, bit/s/Hz
    weights: np.ndarray
    bandwidth: float = 10e6

    def __post_init__(self):
        K, B, I = self.rbar.shape
        if K > MAX_USERS or B > MAX_CELLS or I > MAX_PATTERNS:
            raise ValueError(f"instance {K}x{B}x{I} exceeds oracle limits "
                             f"{MAX_USERS}x{MAX_CELLS}x{MAX_PATTERNS}")
        if np.any(self.rbar < 0) or not np.all(np.isfinite(self.rbar)):
            raise ValueError("rates must be finite and non-negative")
        if self.weights.shape != (K,):
            raise ValueError("one weight per user")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.rbar.shape

    def tensor(self) -> RateTensor:
        return RateTensor.from_array(self.rbar, self.bandwidth)


def random_instance(rng: np.random.Generator, n_users: int, n_cells: int = 3,
                    n_patterns: int = 3, weights=None) -> SmallInstance:
    """Random activity patterns (every cell ON somewhere) with SINR-like efficiencies.

    Efficiencies shrink with the number of active cells, mimicking interference.
    """
    if not 1 <= n_patterns <= 2 ** n_cells - 1:
        raise ValueError(f"{n_cells} cells admit at most {2 ** n_cells - 1} distinct patterns")
    while True:
        active = rng.random((n_patterns, n_cells)) < 0.6
        if active.any(axis=1).all() and active.any(axis=0).all() \
                and len(np.unique(active, axis=0)) == n_patterns:
            break
    quality = rng.lognormal(mean=1.0, sigma=0.8, size=(n_users, n_cells))
    crowd = active.sum(axis=1)
    rbar = quality[:, :, None] * active.T[None, :, :] / (0.5 + 0.5 * crowd)[None, None, :]
    rbar *= rng.uniform(0.8, 1.2, size=rbar.shape)
    w = np.ones(n_users) if weights is None else np.asarray(weights, float)
    return SmallInstance(rbar, w)


def grid_allocation(serving, rates: RateTensor, weights, resolution: float = 1e-3) -> np.ndarray:
    """Best point of the simplex grid with spacing ``resolution`` (I <= 3)."""
    I = rates.n_patterns
    if I > 3:
        raise ValueError(f"grid oracle supports at most 3 patterns, got {I}")
    n = int(round(1.0 / resolution))
    serving = np.asarray(serving)
    C = rates.serving_rates(serving) * (rates.bandwidth / loads_of(serving, rates.n_cells)[serving])[:, None]
    w = np.asarray(weights, float)
    if I == 1:
        return np.ones(1)
    best_val, best_pi = -math.inf, None
    a = np.arange(n + 1)
    if I == 2:
        grid = np.column_stack([a, n - a]) / n
        chunks = [grid]
    else:
        chunks = []
        for i in range(n + 1):
            j = np.arange(n - i + 1)
            chunks.append(np.column_stack([np.full(len(j), i), j, n - i - j]) / n)
    for pts in chunks:
        R = pts @ C.T
        with np.errstate(divide="ignore"):
            vals = np.where((R > 0).all(axis=1), np.log(np.where(R > 0, R, 1.0)) @ w, -math.inf)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_pi = vals[k], pts[k]
    return best_pi


def brute_force_joint(instance: SmallInstance, pi_resolution: float | None = None,
                      tol: float = 1e-9):
    """Exhaustive joint optimum: (serving, pi, utility).

    With ``pi_resolution`` set and I <= 3, every split is cross-checked
    against the grid oracle (the solver must not lose to the grid).
    """
    rates = instance.tensor()
    K, B, I = instance.shape
    w = instance.weights
    best = (None, None, -math.inf)
    for combo in itertools.product(range(B), repeat=K):
        serving = np.array(combo)
        C = rates.serving_rates(serving)
        if not (C > 0).any(axis=1).all():
            continue
        alloc = optimize_allocation(serving, rates, w, tol=tol)
        if pi_resolution is not None and I <= 3:
            grid_pi = grid_allocation(serving, rates, w, pi_resolution)
            R = (C @ grid_pi) * rates.bandwidth / loads_of(serving, B)[serving]
            if log_utility(R, w) > alloc.value + 1e-9 * max(1.0, abs(alloc.value)):
                raise RuntimeError(f"grid beats solver for association {combo}")
        if alloc.value > best[2]:
            best = (serving, alloc.pi, alloc.value)
    if best[0] is None:
        raise ValueError("no feasible association")
    return best
