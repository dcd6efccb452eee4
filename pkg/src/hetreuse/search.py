"""Tabu search over user association and the pattern split.

A solution is (serving cell per user, pi). Its neighbours change one user's
serving cell (pi fixed, scored incrementally) or re-solve pi for the current
association. Tabu entries use 1-based ids: ``(k, l)`` forbids sending user k
back to cell l, ``(K + 1, 0)`` forbids another pi move.
"""
from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocator import NEG_INF, log_utility, maximize_log_mixture
from .config import SearchParams
from .rates import RateTensor, loads_of

log = logging.getLogger(__name__)

REASSIGN = "reassign"
REALLOCATE = "reallocate"


@dataclass(frozen=True)
class Association:
    serving: np.ndarray
    loads: np.ndarray
    weight_sums: np.ndarray

    @classmethod
    def from_serving(cls, serving, n_cells: int, weights) -> "Association":
        serving = np.asarray(serving, dtype=np.int64)
        return cls(serving, loads_of(serving, n_cells),
                   np.bincount(serving, weights=np.asarray(weights, float), minlength=n_cells))


@dataclass(frozen=True)
class Move:
    kind: str
    user: int = -1   # 0-based
    src: int = -1
    dst: int = -1

    def __post_init__(self):
        if self.kind == REASSIGN and self.src == self.dst:
            raise ValueError("reassign move must change the serving cell")

    def key(self, n_users: int) -> tuple[int, int]:
        """Tabu key this move would hit."""
        if self.kind == REALLOCATE:
            return (n_users + 1, 0)
        return (self.user + 1, self.dst + 1)

    def reverse_key(self, n_users: int) -> tuple[int, int]:
        """Tabu entry recorded once this move is executed."""
        if self.kind == REALLOCATE:
            return (n_users + 1, 0)
        return (self.user + 1, self.src + 1)


@dataclass
class Solution:
    serving: np.ndarray
    pi: np.ndarray
    loads: np.ndarray
    weight_sums: np.ndarray
    mix: np.ndarray        # K x B, s[k, b] = sum_i pi_i rbar[k, b, i]
    utility: float

    def copy(self) -> "Solution":
        return Solution(self.serving.copy(), self.pi.copy(), self.loads.copy(),
                        self.weight_sums.copy(), self.mix.copy(), self.utility)

    def user_rates(self, bandwidth: float) -> np.ndarray:
        own = self.mix[np.arange(len(self.serving)), self.serving]
        return bandwidth * own / self.loads[self.serving]


def _utility_of(serving, loads, mix, weights, bandwidth) -> float:
    own = mix[np.arange(len(serving)), serving]
    return log_utility(bandwidth * own / loads[serving], weights)


def make_solution(serving, pi, rates: RateTensor, weights) -> Solution:
    """Build a solution with all caches computed from scratch."""
    assoc = Association.from_serving(serving, rates.n_cells, weights)
    pi = np.asarray(pi, dtype=float)
    mix = rates.mix(pi)
    u = _utility_of(assoc.serving, assoc.loads, mix, weights, rates.bandwidth)
    return Solution(assoc.serving.copy(), pi.copy(), assoc.loads, assoc.weight_sums, mix, u)


def cell_biases(scenario, macro_bias_db: float = 0.0, pico_bias_db: float = 0.0) -> np.ndarray:
    return np.where(scenario.is_macro, macro_bias_db, pico_bias_db).astype(float)


def initial_association(rx_power_dbm: np.ndarray, biases) -> np.ndarray:
    """Range-expansion cell selection: argmax_b rx[k, b] + bias[b], lowest id on ties."""
    rx = np.asarray(rx_power_dbm, dtype=float)
    return np.argmax(rx + np.asarray(biases, dtype=float)[None, :], axis=1)


def neighborhood(solution: Solution, n_cells: int) -> list[Move]:
    """K (B - 1) reassignments (user-major, cell-minor) followed by the pi move."""
    moves = [Move(REASSIGN, k, int(l), m)
             for k, l in enumerate(solution.serving) for m in range(n_cells) if m != l]
    moves.append(Move(REALLOCATE))
    return moves


def reassign_deltas(solution: Solution, weights) -> np.ndarray:
    """K x B utility change of moving user u to cell m with pi fixed.

    Entry [u, serving[u]] is NaN; moves onto a zero-rate cell are -inf.
    """
    w = np.asarray(weights, dtype=float)
    s, l, N, Wsum = solution.mix, solution.serving, solution.loads, solution.weight_sums
    K = len(l)
    rows = np.arange(K)
    with np.errstate(divide="ignore"):
        ln_s = np.log(s)
    Nl = N[l].astype(float)
    lnN1 = np.log(N + 1.0)
    own = w[:, None] * (ln_s - ln_s[rows, l][:, None] + np.log(Nl)[:, None] - lnN1[None, :])
    leave = np.where(Nl > 1, (Wsum[l] - w) * (np.log(Nl) - np.log(np.maximum(Nl - 1, 1))), 0.0)
    join = np.where(N > 0, Wsum * (lnN1 - np.log(np.maximum(N, 1))), 0.0)
    delta = own + leave[:, None] - join[None, :]
    delta[s <= 0] = -math.inf
    delta[rows, l] = np.nan
    return delta


def apply_reassign(solution: Solution, move: Move, weights, bandwidth: float) -> Solution:
    out = solution.copy()
    u, src, dst = move.user, move.src, move.dst
    if out.serving[u] != src:
        raise ValueError(f"user {u + 1} is not served by cell {src + 1}")
    out.serving[u] = dst
    out.loads[src] -= 1
    out.loads[dst] += 1
    out.weight_sums[src] -= weights[u]
    out.weight_sums[dst] += weights[u]
    out.utility = _utility_of(out.serving, out.loads, out.mix, weights, bandwidth)
    return out


def evaluate_move(solution: Solution, move: Move, rates: RateTensor, weights,
                  tol: float = 1e-6) -> float:
    """Utility of the neighbour reached by ``move``."""
    if move.kind == REASSIGN:
        d = reassign_deltas(solution, weights)[move.user, move.dst]
        return NEG_INF if d == -math.inf else solution.utility + float(d)
    loads = solution.loads
    offset = float(np.dot(weights, np.log(rates.bandwidth / loads[solution.serving])))
    return maximize_log_mixture(rates.serving_rates(solution.serving), weights, tol,
                                init=solution.pi, offset=offset).value


class TabuList:
    """Short-term memory; each entry blocks exactly ``tenure`` iterations.

    Move entries arrive one per iteration, so at most ``tenure`` of them are
    live at once. Entries from a diversification (``origin="restart"``) are
    added in a batch and expire on the same schedule.
    """

    def __init__(self, tenure: int):
        self.tenure = tenure
        self._entries: deque[tuple[tuple[int, int], int, int, str]] = deque()

    def add(self, key: tuple[int, int], first_blocked: int, origin: str = "move") -> None:
        self._entries.append((key, first_blocked, first_blocked + self.tenure - 1, origin))

    def expire(self, now: int) -> None:
        self._entries = deque(e for e in self._entries if e[2] >= now)

    def is_tabu(self, key: tuple[int, int], now: int) -> bool:
        return any(k == key and lo <= now <= hi for k, lo, hi, _ in self._entries)

    def live(self, now: int, origin: str | None = None) -> list[tuple[int, int]]:
        return [k for k, lo, hi, o in self._entries
                if lo <= now <= hi and (origin is None or o == origin)]

    def clear(self) -> None:
        self._entries.clear()

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class TraceRow:
    iteration: int
    event: str
    user: int = 0       # 1-based; K + 1 for the pi move
    src: int = 0
    dst: int = 0
    utility: float = NEG_INF
    best_before: float = NEG_INF
    best: float = NEG_INF
    tabu: bool = False
    aspiration: bool = False
    skipped: int = 0
    tabu_moves: int = 0     # live move entries when the move was chosen
    detail: str = ""


@dataclass
class SearchResult:
    best: Solution
    initial: Solution
    iterations: int
    diversifications: int
    activity: np.ndarray
    trace: list[TraceRow] = field(default_factory=list)
    reassign_moves: int = 0


def diversify(incumbent: Solution, activity: np.ndarray, gamma: int, rng: np.random.Generator,
              rates: RateTensor, weights, tol: float = 1e-6,
              servable: np.ndarray | None = None) -> tuple[Solution, list[tuple[int, int, int]]]:
    """Restart point: the incumbent with ``gamma`` least-active users sent to random new cells.

    Returns the new solution (pi re-optimised) and the (user, old, new) changes,
    0-based. Ties in activity are broken by user id.
    """
    B = rates.n_cells
    if gamma == 0:
        return incumbent.copy(), []
    if B == 1:
        log.warning("single-cell network: diversification is a no-op")
        return incumbent.copy(), []
    if servable is None:
        servable = rates.servable()
    order = np.lexsort((np.arange(len(activity)), activity))
    serving = incumbent.serving.copy()
    changes = []
    for u in order:
        if len(changes) == gamma:
            break
        choices = [b for b in range(B) if b != serving[u] and servable[u, b]]
        if not choices:
            continue
        new = int(choices[rng.integers(len(choices))])
        changes.append((int(u), int(serving[u]), new))
        serving[u] = new
    loads = loads_of(serving, B)
    offset = float(np.dot(weights, np.log(rates.bandwidth / loads[serving])))
    alloc = maximize_log_mixture(rates.serving_rates(serving), weights, tol,
                                 init=incumbent.pi, offset=offset)
    return make_solution(serving, alloc.pi, rates, weights), changes


class TabuSearch:
    """Joint association / pattern-split optimiser.

    ``check=True`` re-derives every cached quantity after each move and raises
    on drift (used by the test-suite).
    """

    def __init__(self, rates: RateTensor, weights, params: SearchParams | None = None,
                 check: bool = False):
        self.rates = rates
        self.weights = np.asarray(weights, dtype=float)
        self.params = params or SearchParams()
        self.check = check
        K = rates.n_users
        if self.params.diversification > K:
            raise ValueError(f"diversification amplitude {self.params.diversification} > K={K}")
        self._servable = rates.servable()
        self._A: np.ndarray | None = None     # K x I, rbar at each user's serving cell
        self._alloc_cache: tuple[bytes, Solution] | None = None

    # pi sub-problem ------------------------------------------------------
    def _reallocate(self, sol: Solution) -> Solution:
        """Neighbour reached by re-solving pi; scored by its rebuilt utility so
        that aspiration and the recorded outcome use the same number."""
        key = sol.serving.tobytes() + sol.pi.tobytes()
        if self._alloc_cache is not None and self._alloc_cache[0] == key:
            return self._alloc_cache[1]
        offset = float(np.dot(self.weights,
                              np.log(self.rates.bandwidth / sol.loads[sol.serving])))
        alloc = maximize_log_mixture(self._A, self.weights, self.params.fw_tol,
                                     self.params.fw_max_iters, init=sol.pi, offset=offset)
        nxt = make_solution(sol.serving, alloc.pi, self.rates, self.weights)
        self._alloc_cache = (key, nxt)
        return nxt

    def _refresh_rows(self, users, serving) -> None:
        for u in users:
            self._A[u] = self.rates.user_rates_on(np.array([u]), int(serving[u]))[0]

    def _verify(self, sol: Solution) -> None:
        ref = make_solution(sol.serving, sol.pi, self.rates, self.weights)
        if not (np.array_equal(ref.loads, sol.loads)
                and np.allclose(ref.weight_sums, sol.weight_sums, rtol=0, atol=1e-9)
                and np.allclose(ref.mix, sol.mix, rtol=1e-9, atol=0)
                and abs(ref.utility - sol.utility) <= 1e-9 * max(1.0, abs(ref.utility))):
            raise AssertionError("cached solution state drifted from recomputation")
        if not np.array_equal(self._A, self.rates.serving_rates(sol.serving)):
            raise AssertionError("serving-rate cache drifted")

    # main loop -----------------------------------------------------------
    def initial_solution(self, serving0) -> Solution:
        serving0 = np.asarray(serving0, dtype=np.int64)
        self._A = self.rates.serving_rates(serving0).copy()
        loads = loads_of(serving0, self.rates.n_cells)
        offset = float(np.dot(self.weights, np.log(self.rates.bandwidth / loads[serving0])))
        alloc = maximize_log_mixture(self._A, self.weights, self.params.fw_tol,
                                     self.params.fw_max_iters, offset=offset)
        return make_solution(serving0, alloc.pi, self.rates, self.weights)

    def run(self, serving0) -> SearchResult:
        p = self.params
        rates, w = self.rates, self.weights
        K, B = rates.n_users, rates.n_cells
        rng = np.random.default_rng(p.seed)
        cur = self.initial_solution(serving0)
        initial = cur.copy()
        best = cur.copy()
        activity = np.zeros(K, dtype=np.int64)
        tabu = TabuList(p.tenure)
        trace = [TraceRow(0, "init", utility=cur.utility, best_before=cur.utility, best=cur.utility)]
        pending: list[tuple[int, int, int]] = []
        t = n_div = n_reassign = 0

        while t < p.max_iter_total:
            tabu.clear()
            for u, old, _new in pending:
                tabu.add((u + 1, old + 1), t, origin="restart")
            j = 0
            while j < p.max_iter_inner and t < p.max_iter_total:
                tabu.expire(t)
                delta = reassign_deltas(cur, w)
                realloc = self._reallocate(cur)
                values = np.append((cur.utility + delta).ravel(), realloc.utility)
                valid = ~np.isnan(values) & (values > NEG_INF)
                order = np.flatnonzero(valid)[np.argsort(-values[valid], kind="stable")]
                chosen = None
                skipped = 0
                for idx in order:
                    if idx == K * B:
                        move = Move(REALLOCATE)
                    else:
                        move = Move(REASSIGN, int(idx // B), int(cur.serving[idx // B]), int(idx % B))
                    is_tabu = tabu.is_tabu(move.key(K), t)
                    nxt = None
                    if is_tabu:
                        # aspiration is judged on the rebuilt neighbour: the
                        # incremental score can sit an ulp above it
                        nxt = realloc.copy() if move.kind == REALLOCATE else \
                            apply_reassign(cur, move, w, rates.bandwidth)
                        if not nxt.utility > best.utility:
                            skipped += 1
                            continue
                    chosen = (move, float(values[idx]), is_tabu, nxt)
                    break
                if chosen is None:
                    trace.append(TraceRow(t, "stall", utility=cur.utility, best_before=best.utility,
                                          best=best.utility, skipped=skipped))
                    break
                move, value, is_tabu, nxt = chosen
                best_before = best.utility
                if move.kind == REASSIGN:
                    if nxt is None:
                        nxt = apply_reassign(cur, move, w, rates.bandwidth)
                    self._refresh_rows([move.user], nxt.serving)
                    activity[move.user] += 1
                    n_reassign += 1
                elif nxt is None:
                    nxt = realloc.copy()
                if self.check:
                    self._verify(nxt)
                    if move.kind == REASSIGN and abs(nxt.utility - value) > 1e-9 * max(1.0, abs(value)):
                        raise AssertionError("incremental utility disagrees with recomputation")
                improved_best = nxt.utility > best.utility
                if nxt.utility <= cur.utility:
                    j += 1
                elif p.inner_reset == "current" or (p.inner_reset == "incumbent" and improved_best):
                    j = 0
                elif p.inner_reset == "incumbent":
                    j += 1
                if improved_best:
                    best = nxt.copy()
                tabu.add(move.reverse_key(K), t + 1)
                trace.append(TraceRow(
                    t, move.kind, *((move.user + 1, move.src + 1, move.dst + 1)
                                    if move.kind == REASSIGN else (K + 1, 0, 0)),
                    utility=nxt.utility, best_before=best_before, best=best.utility,
                    tabu=is_tabu, aspiration=is_tabu, skipped=skipped,
                    tabu_moves=len(tabu.live(t, "move"))))
                cur = nxt
                t += 1
            if t >= p.max_iter_total:
                break
            cur, pending = diversify(best, activity, p.diversification, rng, rates, w,
                                     p.fw_tol, self._servable)
            for u, _old, _new in pending:
                activity[u] += 1
            self._A = rates.serving_rates(cur.serving).copy()
            n_div += 1
            trace.append(TraceRow(t, "diversify", utility=cur.utility, best_before=best.utility,
                                  best=best.utility,
                                  detail=" ".join(f"{u + 1}:{o + 1}>{n + 1}" for u, o, n in pending)))
        return SearchResult(best, initial, t, n_div, activity, trace, n_reassign)


def default_serving(rates: RateTensor) -> np.ndarray:
    """Strongest-link association used when no received powers are available."""
    best = np.stack([rates.cell_rates(b).max(axis=1) for b in range(rates.n_cells)], axis=1)
    return np.argmax(best, axis=1)


def tabu_search(rates: RateTensor, weights, params: SearchParams | None = None,
                serving0=None, check: bool = False) -> SearchResult:
    if serving0 is None:
        serving0 = default_serving(rates)
    return TabuSearch(rates, weights, params, check).run(serving0)


def solve_scenario(scenario, gains, rates: RateTensor, params: SearchParams | None = None,
                   check: bool = False) -> SearchResult:
    """Range-expansion start followed by the tabu search."""
    params = params or SearchParams()
    biases = cell_biases(scenario, params.macro_bias_db, params.pico_bias_db)
    serving0 = initial_association(gains.rx_power_dbm, biases)
    return tabu_search(rates, scenario.weights, params, serving0, check)


def write_trace(result: SearchResult, path: str | Path) -> Path:
    fields = list(TraceRow.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(fields)
        for row in result.trace:
            wr.writerow([getattr(row, f) for f in fields])
    return Path(path)
