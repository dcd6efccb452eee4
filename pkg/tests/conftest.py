import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hetreuse.config import ScenarioConfig
from hetreuse.patterns import candidate_patterns
from hetreuse.rates import RateTensor
from hetreuse.scenario import build_drop

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_drop():
    """Two macros with one pico each and a dozen users."""
    cfg = ScenarioConfig(n_macros=2, picos_per_macro=1, n_users=12)
    scenario, gains = build_drop(cfg, seed=3)
    return scenario, gains


@pytest.fixture(scope="session")
def default_drop():
    scenario, gains = build_drop(ScenarioConfig(), seed=0)
    rates = RateTensor.from_gains(gains, scenario, candidate_patterns(scenario))
    return scenario, gains, rates


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
