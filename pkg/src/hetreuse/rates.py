"""Per-pattern spectral efficiencies and the user rates built from them.

Units: received powers are per-Hz linear mW, spectral efficiencies are
bit/s/Hz, user rates bit/s. ``rbar[k, b, i]`` is the efficiency of user k
served by cell b while pattern i is in use.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .patterns import PatternSet

DENSE_LIMIT = 20_000_000


@dataclass(frozen=True)
class FadingModel:
    mode: str = "deterministic"    # deterministic | rayleigh_mc
    mc_samples: int = 1000
    seed: int = 0
    distribution: str = "rayleigh"  # rayleigh: |h|^2 ~ Exp(1); none: |h|^2 = 1

    def __post_init__(self):
        if self.mode not in ("deterministic", "rayleigh_mc"):
            raise ValueError(f"unknown fading mode {self.mode!r}")
        if self.distribution not in ("rayleigh", "none"):
            raise ValueError(f"unknown fading distribution {self.distribution!r}")
        if self.mode == "rayleigh_mc" and self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")


@dataclass(frozen=True)
class InterferenceTable:
    total_rx: np.ndarray   # K x I, sum of per-Hz received power over active cells


def per_hz_power_mw(tx_power_dbm, bandwidth: float) -> np.ndarray:
    return 10.0 ** (np.asarray(tx_power_dbm, dtype=float) / 10.0) / bandwidth


def build_interference_table(gains: np.ndarray, patterns: PatternSet | np.ndarray,
                             powers: np.ndarray) -> InterferenceTable:
    """T[k, i] = sum over cells l active in i of P_l G_lk."""
    active = patterns.active if isinstance(patterns, PatternSet) else np.asarray(patterns, bool)
    received = np.asarray(gains) * np.asarray(powers)[None, :]
    total = received @ active.T.astype(float)
    total.setflags(write=False)
    return InterferenceTable(total)


def efficiency(signal, total, noise) -> np.ndarray:
    """log2(1 + S / (noise + total - S)), i.e. own signal removed from the total."""
    signal = np.asarray(signal, dtype=float)
    return np.log2(1.0 + signal / (noise + total - signal))


def _mc_efficiency(received_k: np.ndarray, active_i: np.ndarray, b: int, noise: float,
                   fading: FadingModel, key: Sequence[int]) -> float:
    rng = np.random.default_rng([fading.seed, *key])
    n, B = fading.mc_samples, len(received_k)
    if fading.distribution == "rayleigh":
        h2 = rng.exponential(size=(n, B))
    else:
        h2 = np.ones((n, B))
    faded = h2 * received_k[None, :]
    total = faded @ active_i.astype(float)
    return float(np.mean(efficiency(faded[:, b], total, noise)))


class RateTensor:
    """Accessor for rbar[k, b, i].

    Backed either by a dense K x B x I array or, when that would exceed
    ``dense_limit`` entries, by the K x I interference table with on-demand
    evaluation. Both backends share the same arithmetic.
    """

    def __init__(self, received: np.ndarray | None, active: np.ndarray | None,
                 noise: float, bandwidth: float, fading: FadingModel | None = None,
                 dense: np.ndarray | None = None, dense_limit: int = DENSE_LIMIT):
        self.bandwidth = float(bandwidth)
        self.noise = float(noise)
        self.fading = fading or FadingModel()
        self.received = received
        self.active = active
        self._dense = dense
        self.table = None
        if dense is not None:
            self.n_users, self.n_cells, self.n_patterns = dense.shape
            return
        self.n_users, self.n_cells = received.shape
        self.n_patterns = active.shape[0]
        self.table = build_interference_table(received, active, np.ones(self.n_cells))
        if self.n_users * self.n_cells * self.n_patterns <= dense_limit:
            self._dense = self._compute_dense()
            self._dense.setflags(write=False)

    # construction --------------------------------------------------------
    @classmethod
    def from_array(cls, rbar: np.ndarray, bandwidth: float) -> "RateTensor":
        rbar = np.array(rbar, dtype=float)
        if rbar.ndim != 3 or np.any(rbar < 0) or not np.all(np.isfinite(rbar)):
            raise ValueError("rate tensor must be a finite, non-negative K x B x I array")
        rbar.setflags(write=False)
        return cls(None, None, 0.0, bandwidth, dense=rbar)

    @classmethod
    def from_gains(cls, gain_table, scenario, patterns: PatternSet,
                   fading: FadingModel | None = None, dense_limit: int = DENSE_LIMIT) -> "RateTensor":
        radio = scenario.config.radio
        powers = per_hz_power_mw(scenario.tx_power_dbm, radio.bandwidth)
        received = np.asarray(gain_table.gains) * powers[None, :]
        return cls(received, patterns.active, radio.noise_mw_per_hz, radio.bandwidth,
                   fading=fading, dense_limit=dense_limit)

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    # evaluation ----------------------------------------------------------
    def _compute_dense(self) -> np.ndarray:
        out = np.zeros((self.n_users, self.n_cells, self.n_patterns))
        for b in range(self.n_cells):
            out[:, b, :] = self._cell_ondemand(b)
        return out

    def _cell_ondemand(self, b: int) -> np.ndarray:
        """K x I efficiencies for cell b from the interference table."""
        on = self.active[:, b]
        out = np.zeros((self.n_users, self.n_patterns))
        if not on.any():
            return out
        if self.fading.mode == "deterministic":
            sig = self.received[:, b:b + 1]
            out[:, on] = efficiency(sig, self.table.total_rx[:, on], self.noise)
        else:
            for k in range(self.n_users):
                for i in np.flatnonzero(on):
                    out[k, i] = _mc_efficiency(self.received[k], self.active[i], b,
                                               self.noise, self.fading, (k, b, int(i)))
        return out

    def se(self, k: int, b: int, i: int) -> float:
        """Spectral efficiency of user k served by cell b under pattern i (0 if b is muted)."""
        if self._dense is not None:
            return float(self._dense[k, b, i])
        if not self.active[i, b]:
            return 0.0
        if self.fading.mode == "deterministic":
            return float(efficiency(self.received[k, b], self.table.total_rx[k, i], self.noise))
        return _mc_efficiency(self.received[k], self.active[i], b, self.noise, self.fading,
                              (k, b, i))

    def cell_rates(self, b: int) -> np.ndarray:
        if self._dense is not None:
            return self._dense[:, b, :]
        return self._cell_ondemand(b)

    def serving_rates(self, serving: np.ndarray) -> np.ndarray:
        """K x I matrix rbar[k, serving[k], i]."""
        serving = np.asarray(serving)
        if self._dense is not None:
            return self._dense[np.arange(self.n_users), serving, :]
        out = np.empty((self.n_users, self.n_patterns))
        for b in np.unique(serving):
            rows = np.flatnonzero(serving == b)
            out[rows] = self.user_rates_on(rows, int(b))
        return out

    def user_rates_on(self, users: np.ndarray, b: int) -> np.ndarray:
        """len(users) x I efficiencies with every listed user served by cell b."""
        users = np.asarray(users)
        if self._dense is not None:
            return self._dense[users, b, :]
        on = self.active[:, b]
        out = np.zeros((len(users), self.n_patterns))
        if self.fading.mode == "deterministic":
            sig = self.received[users, b:b + 1]
            out[:, on] = efficiency(sig, self.table.total_rx[np.ix_(users, on)], self.noise)
        else:
            for row, k in enumerate(users):
                for i in np.flatnonzero(on):
                    out[row, i] = self.se(int(k), b, int(i))
        return out

    def mix(self, pi: np.ndarray) -> np.ndarray:
        """K x B matrix s[k, b] = sum_i pi_i rbar[k, b, i]; only the support of pi is touched."""
        pi = np.asarray(pi, dtype=float)
        support = np.flatnonzero(pi > 0)
        if self._dense is not None:
            return self._dense[:, :, support] @ pi[support]
        out = np.zeros((self.n_users, self.n_cells))
        for i in support:
            out += pi[i] * self.pattern_rates(int(i))
        return out

    def pattern_rates(self, i: int) -> np.ndarray:
        """K x B efficiencies under pattern i."""
        if self._dense is not None:
            return self._dense[:, :, i]
        on = self.active[i]
        out = np.zeros((self.n_users, self.n_cells))
        if self.fading.mode == "deterministic":
            total = self.table.total_rx[:, i:i + 1]
            out[:, on] = efficiency(self.received[:, on], total, self.noise)
        else:
            for k in range(self.n_users):
                for b in np.flatnonzero(on):
                    out[k, b] = self.se(k, int(b), i)
        return out

    def servable(self) -> np.ndarray:
        """K x B mask: cell b can give user k a positive rate under some pattern."""
        if self._dense is not None:
            return (self._dense > 0).any(axis=2)
        return np.broadcast_to(self.active.any(axis=0), (self.n_users, self.n_cells)).copy()

    def to_csv(self, path: str | Path, patterns: Sequence[int] | None = None) -> Path:
        idx = range(self.n_patterns) if patterns is None else patterns
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["user", "cell", "pattern", "se_bps_per_hz"])
            for i in idx:
                block = self.pattern_rates(int(i))
                for k in range(self.n_users):
                    for b in range(self.n_cells):
                        w.writerow([k + 1, b + 1, int(i) + 1, repr(float(block[k, b]))])
        return Path(path)


def loads_of(serving: np.ndarray, n_cells: int) -> np.ndarray:
    return np.bincount(np.asarray(serving), minlength=n_cells)


def user_rate_per_pattern(rates: RateTensor, serving: np.ndarray, k: int, i: int,
                          loads: np.ndarray | None = None) -> float:
    """Round-robin share W * rbar / N_b of user k's serving cell under pattern i."""
    serving = np.asarray(serving)
    loads = loads_of(serving, rates.n_cells) if loads is None else loads
    b = int(serving[k])
    if loads[b] < 1:
        raise ValueError(f"cell {b + 1} serves user {k + 1} but has zero load")
    return rates.bandwidth * rates.se(k, b, i) / loads[b]


def pattern_rate_matrix(rates: RateTensor, serving: np.ndarray) -> np.ndarray:
    """K x I matrix of per-pattern user rates in bit/s."""
    serving = np.asarray(serving)
    loads = loads_of(serving, rates.n_cells)
    return rates.serving_rates(serving) * (rates.bandwidth / loads[serving])[:, None]


def aggregate_rate(rates: RateTensor, serving: np.ndarray, pi: np.ndarray, k: int) -> float:
    serving = np.asarray(serving)
    loads = loads_of(serving, rates.n_cells)
    return float(sum(pi[i] * user_rate_per_pattern(rates, serving, k, i, loads)
                     for i in np.flatnonzero(np.asarray(pi) > 0)))


def user_rates(rates: RateTensor, serving: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """All users' allocation-mixed rates in bit/s."""
    return pattern_rate_matrix(rates, serving) @ np.asarray(pi, dtype=float)
