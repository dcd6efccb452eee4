"""Configuration dataclasses and the YAML loader.

Every network constant defaults to the 3GPP-style HetNet setup used in the
experiments (10 MHz, 46/30 dBm macro/pico, ...). A config file may override
any field; unknown keys are rejected so typos fail loudly.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


@dataclass(frozen=True)
class RadioConstants:
    bandwidth: float = 10e6            # Hz
    noise_psd_dbm: float = -174.0      # dBm/Hz
    noise_figure_db: float = 9.0
    penetration_loss_db: float = 20.0
    shadow_std_macro_db: float = 8.0
    shadow_std_pico_db: float = 10.0
    shadow_corr_macro: float = 1.0     # inter-cell correlation
    shadow_corr_pico: float = 0.5

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.shadow_std_macro_db < 0 or self.shadow_std_pico_db < 0:
            raise ValueError("shadowing std-dev must be >= 0")
        for rho in (self.shadow_corr_macro, self.shadow_corr_pico):
            if not 0.0 <= rho <= 1.0:
                raise ValueError("shadowing correlation must lie in [0, 1]")

    @property
    def noise_dbm_per_hz(self) -> float:
        return self.noise_psd_dbm + self.noise_figure_db

    @property
    def noise_mw_per_hz(self) -> float:
        """Noise power per Hz (sigma^2) in linear mW."""
        return 10.0 ** (self.noise_dbm_per_hz / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    n_macros: int = 3
    picos_per_macro: int = 4
    n_users: int = 90
    isd: float = 500.0                    # m, inter-site distance
    coverage_radius: float | None = None  # m, defaults to isd / sqrt(3)
    macro_tx_dbm: float = 46.0
    pico_tx_dbm: float = 30.0
    macro_antenna_gain_db: float = 15.0
    pico_antenna_gain_db: float = 5.0
    min_macro_pico: float = 75.0
    min_pico_pico: float = 40.0
    min_macro_user: float = 35.0
    min_pico_user: float = 10.0
    user_weight: float = 1.0
    max_attempts: int = 10_000
    radio: RadioConstants = field(default_factory=RadioConstants)

    def __post_init__(self):
        if self.n_macros < 1:
            raise ValueError("need at least one macro cell")
        if self.picos_per_macro < 0 or self.n_users < 0:
            raise ValueError("counts must be non-negative")
        if self.isd <= 0 or self.user_weight <= 0:
            raise ValueError("isd and user_weight must be positive")

    @property
    def radius(self) -> float:
        if self.coverage_radius is not None:
            return self.coverage_radius
        return self.isd / math.sqrt(3.0)

    @property
    def n_cells(self) -> int:
        return self.n_macros * (1 + self.picos_per_macro)


@dataclass(frozen=True)
class SearchParams:
    """Tabu search settings. Defaults are the tuned values (r=2, 4, 800, 15)."""

    tenure: int = 2
    max_iter_inner: int = 4
    max_iter_total: int = 800
    diversification: int = 15
    macro_bias_db: float = 0.0
    pico_bias_db: float = 5.0
    seed: int = 0
    fw_tol: float = 1e-6
    fw_max_iters: int = 20_000
    # when the no-improvement counter of the inner loop restarts from zero:
    # "incumbent" on a new best solution, "current" on any uphill move,
    # "never" counts non-improving moves per inner loop
    inner_reset: str = "never"

    def __post_init__(self):
        if self.inner_reset not in ("incumbent", "current", "never"):
            raise ValueError(f"unknown inner_reset {self.inner_reset!r}")
        if min(self.tenure, self.max_iter_inner, self.max_iter_total) < 1:
            raise ValueError("tenure and iteration limits must be positive")
        if self.diversification < 0:
            raise ValueError("diversification amplitude must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    search: SearchParams = field(default_factory=SearchParams)
    user_counts: tuple[int, ...] = (90,)
    drops: int = 5
    biases: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0)
    patterns: str = "candidates"   # candidates | full | <path to pattern file>
    include_proposed: bool = True
    seed_base: int = 0

    def __post_init__(self):
        if self.drops < 1:
            raise ValueError("drops must be >= 1")
        if not self.user_counts:
            raise ValueError("user_counts must be non-empty")


def _build(cls, data: dict[str, Any] | None):
    data = dict(data or {})
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key == "radio":
            value = _build(RadioConstants, value)
        elif key == "scenario":
            value = _build(ScenarioConfig, value)
        elif key == "search":
            value = _build(SearchParams, value)
        elif key in ("user_counts", "biases"):
            value = tuple(value)
        elif isinstance(value, str) and str(names[key].type).startswith("float"):
            value = float(value)   # YAML 1.1 reads "10.0e6" as a string
        kwargs[key] = value
    return cls(**kwargs)


def experiment_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    """Build a config from nested mappings with sections scenario/search/experiment.

    ``radio`` may appear at top level or nested under ``scenario``.
    """
    data = dict(data or {})
    unknown = set(data) - {"scenario", "radio", "search", "experiment"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    scen = dict(data.get("scenario") or {})
    if "radio" in data:
        scen["radio"] = data["radio"]
    exp = dict(data.get("experiment") or {})
    exp["scenario"] = scen
    exp["search"] = data.get("search") or {}
    return _build(ExperimentConfig, exp)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path) as fh:
        return experiment_from_dict(yaml.safe_load(fh) or {})


def to_dict(obj) -> dict[str, Any]:
    return dataclasses.asdict(obj)
