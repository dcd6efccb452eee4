"""Log-utility of user rates and the bandwidth split over reuse patterns.

For a fixed association the split ``pi`` solves

    maximize  sum_k w_k log(sum_i pi_i c[k, i])   over the simplex,

a concave problem handled by Frank-Wolfe with away steps and an exact
line search. The Frank-Wolfe gap ``max_i g_i - <pi, g>`` bounds the
suboptimality and is the stopping certificate.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rates import RateTensor, loads_of

log = logging.getLogger(__name__)

NEG_INF = -math.inf
UNIFORM_INIT_LIMIT = 64
LINE_SEARCH_STEPS = 60


class InfeasibleAllocation(ValueError):
    """Some user gets zero rate under every pattern."""

    def __init__(self, user: int):
        super().__init__(f"user {user + 1} has zero rate under every pattern")
        self.user = user


@dataclass
class UtilityReport:
    value: float
    per_user_rates: np.ndarray
    feasible: bool


@dataclass
class Allocation:
    pi: np.ndarray
    value: float        # utility sum_k w_k ln R_k, nats
    gap: float
    iterations: int
    converged: bool
    trace: list[tuple[int, float, float]] = field(default_factory=list)


def log_utility(user_rates: np.ndarray, weights: np.ndarray, log_base: float = math.e) -> float:
    """sum_k w_k log(R_k); -inf if any rate is zero."""
    user_rates = np.asarray(user_rates, dtype=float)
    if np.any(user_rates <= 0):
        return NEG_INF
    value = float(np.dot(weights, np.log(user_rates)))
    return value if log_base == math.e else value / math.log(log_base)


def utility(serving, pi, rates: RateTensor, weights, log_base: float = math.e) -> UtilityReport:
    serving = np.asarray(serving)
    pi = np.asarray(pi, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if serving.shape != (rates.n_users,) or pi.shape != (rates.n_patterns,) \
            or weights.shape != (rates.n_users,):
        raise ValueError("dimension mismatch between association, allocation and rates")
    per_user = (rates.serving_rates(serving) @ pi) * rates.bandwidth / loads_of(serving, rates.n_cells)[serving]
    value = log_utility(per_user, weights, log_base)
    return UtilityReport(value, per_user, value != NEG_INF)


def fw_gap(pi: np.ndarray, gradient: np.ndarray) -> float:
    return float(np.max(gradient) - np.dot(pi, gradient))


def _line_search(R: np.ndarray, dR: np.ndarray, w: np.ndarray, t_max: float) -> float:
    """argmax over [0, t_max] of sum w log(R + t dR) by bisection on the derivative."""
    def slope(t):
        z = R + t * dR
        if np.any(z <= 0):
            return -math.inf
        return float(np.dot(w, dR / z))

    if slope(t_max) >= 0:
        return t_max
    lo, hi = 0.0, t_max
    for _ in range(LINE_SEARCH_STEPS):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo


def _newton_on_support(C: np.ndarray, w: np.ndarray, x: np.ndarray, R: np.ndarray) -> np.ndarray:
    """One monotone Newton step restricted to the face spanned by the support of x."""
    S = np.flatnonzero(x > 0)
    if len(S) < 2:
        return x
    CS = C[:, S]
    g = CS.T @ (w / R)
    H = -(CS.T * (w / R ** 2)) @ CS
    H -= 1e-12 * max(1.0, float(np.abs(np.diag(H)).max())) * np.eye(len(S))
    n = len(S)
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = H
    kkt[:n, n] = kkt[n, :n] = 1.0
    try:
        d = np.linalg.solve(kkt, np.append(-g, 0.0))[:n]
    except np.linalg.LinAlgError:
        return x
    dR = CS @ d
    if not np.all(np.isfinite(d)) or np.dot(w, dR / R) <= 0:
        return x
    neg = d < 0
    t_max = float(np.min(-x[S][neg] / d[neg])) if neg.any() else math.inf
    t_max = min(t_max, 1e6)
    t = _line_search(R, dR, w, t_max)
    if t <= 0:
        return x
    out = x.copy()
    out[S] = x[S] + t * d
    if t == t_max and neg.any():
        out[S[neg][np.argmin(-x[S][neg] / d[neg])]] = 0.0
    out[out < 0] = 0.0
    out /= out.sum()
    R_new = C @ out
    if np.any(R_new <= 0) or np.dot(w, np.log(R_new)) < np.dot(w, np.log(R)):
        return x
    return out


def _start_point(C: np.ndarray, w: np.ndarray, init) -> np.ndarray:
    K, I = C.shape
    if init is not None:
        x = np.clip(np.asarray(init, dtype=float), 0, None)
        if x.shape != (I,) or x.sum() <= 0:
            raise ValueError("initial allocation must be a non-negative length-I vector")
        x = x / x.sum()
    elif I <= UNIFORM_INIT_LIMIT:
        x = np.full(I, 1.0 / I)
    else:
        with np.errstate(divide="ignore"):
            scores = w @ np.log(C)
        if np.isfinite(scores).any():
            i0 = int(np.argmax(scores))
        else:
            i0 = int(np.argmax((C > 0).sum(axis=0)))
        x = np.zeros(I)
        x[i0] = 1.0
    # repair: give every starved user its best pattern
    starved = np.flatnonzero(C @ x <= 0)
    if len(starved):
        extra = np.zeros(I)
        for k in starved:
            i = int(np.argmax(C[k]))
            if C[k, i] <= 0:
                raise InfeasibleAllocation(int(k))
            extra[i] = 1.0
        extra /= extra.sum()
        x = 0.5 * x + 0.5 * extra
        if np.any(C @ x <= 0):
            return _start_point(C, w, x)
    return x


def maximize_log_mixture(C: np.ndarray, weights: np.ndarray, tol: float = 1e-6,
                         max_iters: int = 20_000, init=None, keep_trace: bool = False,
                         offset: float = 0.0, newton: bool = True) -> Allocation:
    """Away-step Frank-Wolfe for max sum_k w_k log(C @ pi) on the simplex.

    Each iteration takes a Frank-Wolfe or away step with exact line search,
    then (``newton=True``) a Newton step on the current support face. Stops
    once the gap is <= ``tol * max(1, |value|)``. ``offset`` is added to the
    reported value (per-user constants such as log(W / N_b)).
    """
    C = np.asarray(C, dtype=float)
    w = np.asarray(weights, dtype=float)
    K, I = C.shape
    dead = np.flatnonzero(~(C > 0).any(axis=1))
    if len(dead):
        raise InfeasibleAllocation(int(dead[0]))
    x = _start_point(C, w, init)
    trace = []
    gap = math.inf
    it = 0
    while True:
        R = C @ x
        value = float(np.dot(w, np.log(R))) + offset
        g = C.T @ (w / R)
        xg = float(np.dot(x, g))
        v = int(np.argmax(g))
        gap = max(float(g[v] - xg), 0.0)
        if keep_trace:
            trace.append((it, value, gap))
        if gap <= tol * max(1.0, abs(value)) or it >= max_iters:
            break
        support = np.flatnonzero(x > 0)
        a = int(support[np.argmin(g[support])])
        if gap >= xg - g[a] or a == v:
            dR = C[:, v] - R
            t_max = 1.0
            t = _line_search(R, dR, w, t_max)
            x *= 1.0 - t
            x[v] += t
        else:
            dR = R - C[:, a]
            t_max = x[a] / (1.0 - x[a])
            t = _line_search(R, dR, w, t_max)
            x *= 1.0 + t
            x[a] -= t
            if t == t_max:
                x[a] = 0.0
        x[x < 0] = 0.0
        if newton:
            x = _newton_on_support(C, w, x, C @ x)
        it += 1
    x = x / x.sum()
    value = float(np.dot(w, np.log(C @ x))) + offset
    converged = gap <= tol * max(1.0, abs(value))
    if not converged:
        log.warning("Frank-Wolfe stopped after %d iterations with gap %.3g", it, gap)
    return Allocation(x, value, gap, it, converged, trace)


def optimize_allocation(serving, rates: RateTensor, weights, tol: float = 1e-6,
                        max_iters: int = 20_000, init=None, keep_trace: bool = False) -> Allocation:
    """Best bandwidth split over the patterns for a fixed association."""
    serving = np.asarray(serving)
    w = np.asarray(weights, dtype=float)
    loads = loads_of(serving, rates.n_cells)
    offset = float(np.dot(w, np.log(rates.bandwidth / loads[serving])))
    return maximize_log_mixture(rates.serving_rates(serving), w, tol, max_iters, init,
                                keep_trace, offset)


def truncate(pi: np.ndarray, threshold: float = 1e-8) -> np.ndarray:
    out = np.where(np.asarray(pi) < threshold, 0.0, pi)
    return out / out.sum()


def write_trace(allocation: Allocation, path: str | Path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective", "gap"])
        w.writerows(allocation.trace)
    return Path(path)
