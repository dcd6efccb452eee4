"""Network topology, propagation and large-scale gains.

Cells are numbered macros first, then the picos of macro 1, macro 2, ...
(ids are 1-based in every exported artifact, 0-based as array indices).
Powers are handled in mW; the per-Hz noise is ``RadioConstants.noise_mw_per_hz``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig

MACRO = "macro"
PICO = "pico"


class PlacementError(RuntimeError):
    """Rejection sampling could not satisfy the minimum-distance rules."""


@dataclass(frozen=True)
class Cell:
    id: int
    kind: str
    x: float
    y: float
    tx_power_dbm: float
    antenna_gain_db: float
    host: int | None = None   # host macro id for picos


@dataclass(frozen=True)
class User:
    id: int
    x: float
    y: float
    weight: float = 1.0


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    cells: tuple[Cell, ...]
    users: tuple[User, ...]
    seed: int

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def is_macro(self) -> np.ndarray:
        return np.array([c.kind == MACRO for c in self.cells])

    @property
    def macro_ids(self) -> list[int]:
        return [c.id for c in self.cells if c.kind == MACRO]

    @property
    def cell_xy(self) -> np.ndarray:
        return np.array([(c.x, c.y) for c in self.cells], dtype=float).reshape(-1, 2)

    @property
    def user_xy(self) -> np.ndarray:
        return np.array([(u.x, u.y) for u in self.users], dtype=float).reshape(-1, 2)

    @property
    def tx_power_dbm(self) -> np.ndarray:
        return np.array([c.tx_power_dbm for c in self.cells])

    @property
    def weights(self) -> np.ndarray:
        return np.array([u.weight for u in self.users], dtype=float)

    def distances_km(self) -> np.ndarray:
        """K x B user-cell distances in km."""
        diff = self.user_xy[:, None, :] - self.cell_xy[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1]) / 1000.0


@dataclass(frozen=True)
class GainTable:
    gains: np.ndarray          # K x B linear
    rx_power_dbm: np.ndarray   # K x B


def macro_sites(n: int, isd: float) -> np.ndarray:
    """First ``n`` points of a hexagonal lattice, clustered around one triangle."""
    span = int(math.ceil(math.sqrt(n))) + 1
    a, b = np.meshgrid(np.arange(-span, span + 1), np.arange(-span, span + 1))
    pts = np.stack([a.ravel() * isd + b.ravel() * isd / 2.0,
                    b.ravel() * isd * math.sqrt(3.0) / 2.0], axis=1)
    centre = np.array([isd / 2.0, isd / (2.0 * math.sqrt(3.0))])
    dist = np.round(np.hypot(*(pts - centre).T), 6)
    order = np.lexsort((np.round(pts[:, 0], 6), np.round(pts[:, 1], 6), dist))
    return pts[order[:n]]


def _uniform_disc(rng: np.random.Generator, centre, radius: float, n: int) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    phi = 2.0 * math.pi * rng.random(n)
    return np.column_stack([centre[0] + r * np.cos(phi), centre[1] + r * np.sin(phi)])


def _min_dist(points: np.ndarray, others: np.ndarray) -> np.ndarray:
    if len(others) == 0:
        return np.full(len(points), np.inf)
    d = points[:, None, :] - others[None, :, :]
    return np.hypot(d[..., 0], d[..., 1]).min(axis=1)


def _place_users(rng, cfg: ScenarioConfig, macros: np.ndarray, picos: np.ndarray) -> np.ndarray:
    radius = cfg.radius
    lo = macros.min(axis=0) - radius
    hi = macros.max(axis=0) + radius
    budget = cfg.max_attempts * max(cfg.n_users, 1)
    placed: list[np.ndarray] = []
    count = drawn = 0
    while count < cfg.n_users:
        if drawn >= budget:
            raise PlacementError(f"placed {count}/{cfg.n_users} users in {drawn} draws")
        batch = min(max(2 * (cfg.n_users - count), 64), budget - drawn)
        pts = lo + (hi - lo) * rng.random((batch, 2))
        drawn += batch
        ok = _min_dist(pts, macros) <= radius          # inside the macro footprint
        ok &= _min_dist(pts, macros) >= cfg.min_macro_user
        ok &= _min_dist(pts, picos) >= cfg.min_pico_user
        pts = pts[ok][: cfg.n_users - count]
        placed.append(pts)
        count += len(pts)
    return np.concatenate(placed) if placed else np.empty((0, 2))


def generate_topology(config: ScenarioConfig, seed: int) -> Scenario:
    """Drop picos and users for one realisation.

    Picos are uniform in their host macro's coverage disc, users uniform over
    the union of the macro discs; both are rejection-sampled against the
    minimum-distance rules.
    """
    rng = np.random.default_rng(seed)
    macros = macro_sites(config.n_macros, config.isd)
    cells = [Cell(m + 1, MACRO, float(x), float(y), config.macro_tx_dbm,
                  config.macro_antenna_gain_db) for m, (x, y) in enumerate(macros)]

    picos: list[np.ndarray] = []
    for m, centre in enumerate(macros):
        for _ in range(config.picos_per_macro):
            for _attempt in range(config.max_attempts):
                p = _uniform_disc(rng, centre, config.radius, 1)
                if (_min_dist(p, macros)[0] >= config.min_macro_pico
                        and _min_dist(p, np.array(picos).reshape(-1, 2))[0] >= config.min_pico_pico):
                    break
            else:
                raise PlacementError(
                    f"pico {len(picos) + 1} of macro {m + 1} not placed after "
                    f"{config.max_attempts} attempts")
            picos.append(p[0])
            cells.append(Cell(len(cells) + 1, PICO, float(p[0, 0]), float(p[0, 1]),
                              config.pico_tx_dbm, config.pico_antenna_gain_db, host=m + 1))

    pico_xy = np.array(picos).reshape(-1, 2)
    uxy = _place_users(rng, config, macros, pico_xy)
    users = tuple(User(k + 1, float(x), float(y), config.user_weight)
                  for k, (x, y) in enumerate(uxy))
    return Scenario(config, tuple(cells), users, seed)


def path_loss_db(kind: str, distance_km) -> np.ndarray | float:
    """Distance-dependent path loss, R in km."""
    d = np.asarray(distance_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    if kind == MACRO:
        out = 128.1 + 37.6 * np.log10(d)
    elif kind == PICO:
        out = 140.7 + 36.7 * np.log10(d)
    else:
        raise ValueError(f"unknown cell kind {kind!r}")
    return float(out) if out.ndim == 0 else out


def sample_shadowing(scenario: Scenario, seed: int) -> np.ndarray:
    """K x B log-normal shadowing in dB.

    Per user and per cell kind, a common draw C and per-cell draws X are
    mixed as sqrt(rho) C + sqrt(1 - rho) X, then scaled by the kind's std.
    """
    radio = scenario.config.radio
    rng = np.random.default_rng(seed)
    K, B = scenario.n_users, scenario.n_cells
    is_macro = scenario.is_macro
    common = rng.standard_normal((K, 2))
    own = rng.standard_normal((K, B))
    out = np.empty((K, B))
    for col, mask, std, rho in ((0, is_macro, radio.shadow_std_macro_db, radio.shadow_corr_macro),
                                (1, ~is_macro, radio.shadow_std_pico_db, radio.shadow_corr_pico)):
        mixed = math.sqrt(rho) * common[:, col:col + 1] + math.sqrt(1.0 - rho) * own[:, mask]
        out[:, mask] = std * mixed
    return out


def compute_gains(scenario: Scenario, shadowing: np.ndarray | None = None) -> GainTable:
    K, B = scenario.n_users, scenario.n_cells
    if shadowing is None:
        shadowing = np.zeros((K, B))
    if shadowing.shape != (K, B):
        raise ValueError(f"shadowing shape {shadowing.shape} != {(K, B)}")
    dist = scenario.distances_km()
    pl = np.empty((K, B))
    is_macro = scenario.is_macro
    if K:
        pl[:, is_macro] = path_loss_db(MACRO, dist[:, is_macro])
        if (~is_macro).any():
            pl[:, ~is_macro] = path_loss_db(PICO, dist[:, ~is_macro])
    ant = np.array([c.antenna_gain_db for c in scenario.cells])
    gain_db = -pl + ant[None, :] - scenario.config.radio.penetration_loss_db - shadowing
    gains = 10.0 ** (gain_db / 10.0)
    rx = scenario.tx_power_dbm[None, :] + 10.0 * np.log10(gains)
    gains.setflags(write=False)
    rx.setflags(write=False)
    return GainTable(gains, rx)


def build_drop(config: ScenarioConfig, seed: int) -> tuple[Scenario, GainTable]:
    """Topology plus shadowed gains for one drop (shadowing stream derived from seed)."""
    scen = generate_topology(config, seed)
    shadow = sample_shadowing(scen, np.random.SeedSequence([seed, 1]).generate_state(1)[0])
    return scen, compute_gains(scen, shadow)


def write_scenario_csv(scenario: Scenario, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells_path, users_path = out / "cells.csv", out / "users.csv"
    with open(cells_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "kind", "x_m", "y_m", "tx_power_dbm", "antenna_gain_db", "host"])
        for c in scenario.cells:
            w.writerow([c.id, c.kind, f"{c.x:.3f}", f"{c.y:.3f}", c.tx_power_dbm,
                        c.antenna_gain_db, "" if c.host is None else c.host])
    with open(users_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x_m", "y_m", "weight"])
        for u in scenario.users:
            w.writerow([u.id, f"{u.x:.3f}", f"{u.y:.3f}", u.weight])
    return cells_path, users_path
