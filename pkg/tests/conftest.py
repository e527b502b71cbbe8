import math

import numpy as np
import pytest

from swiptma.channel import centered_grid, synthesize_scenario
from swiptma.config import ScenarioConfig
from swiptma.model import DesignPoint


def small_config(**overrides) -> ScenarioConfig:
    defaults = dict(num_bs_antennas=2, num_irs_elements=4, num_idrs=2,
                    num_ehrs=1, paths_per_link=3, ehr_thresholds=0.0,
                    rng_seed=0)
    defaults.update(overrides)
    return ScenarioConfig(**defaults)


def grid_positions(config: ScenarioConfig) -> np.ndarray:
    side = math.isqrt(config.num_bs_antennas)
    if side * side < config.num_bs_antennas:
        side += 1
    pitch = max(config.min_spacing, config.region_size / side)
    return centered_grid(config.num_bs_antennas, pitch)


def random_point(config: ScenarioConfig, rng, power_fraction=1.0) -> DesignPoint:
    """Random design with grid antenna layout (geometry always feasible)."""
    K = config.num_idrs + config.num_ehrs
    M = config.num_bs_antennas
    f = rng.normal(size=(K, M)) + 1j * rng.normal(size=(K, M))
    f *= math.sqrt(power_fraction * config.power_budget) / np.linalg.norm(f)
    phases = rng.uniform(0, 2 * math.pi, config.num_irs_elements)
    return DesignPoint(f, grid_positions(config), phases)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_scenario():
    cfg = small_config()
    return cfg, synthesize_scenario(cfg)
