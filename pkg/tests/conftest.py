import json

import numpy as np
import pytest

from src.utils.config import ScenarioConfig

CENSUS_ROWS = [
    ("Maharashtra", 112374333, 57376776),
    ("Uttar Pradesh", 199812341, 56452083),
]


@pytest.fixture
def small_config():
    """A few dozen nodes in a 200 m square; fast enough for any unit test."""
    return ScenarioConfig(
        side_length=200.0,
        connectivity_radius=30.0,
        sigma=20.0,
        t_rest_min=1,
        t_rest_max=3,
        travel_seconds_per_day=10.0,
        beta=0.0005,
        mu=0.1,
        horizon=5,
        n_static=20,
        n_migrated=20,
        infected_fraction=0.1,
        seed=7,
    ).validate()


@pytest.fixture
def config_file(tmp_path, small_config):
    def _write(**changes):
        data = small_config.replace(**changes).to_dict()
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)
    return _write


@pytest.fixture
def population_csv(tmp_path):
    path = tmp_path / "population.csv"
    lines = ["region,total_population,migrated_population"]
    lines += [f"{region},{total},{migrated}" for region, total, migrated in CENSUS_ROWS]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
