import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from src.data.ingest import PopulationRecord, SampleSpec, round_half_away, sample_record
from src.errors import ConfigError
from src.models.dynamics import CompartmentState, EpidemicParams
from src.models.geometry import MobilityFleet, init_mobility
from src.utils.config import ScenarioConfig

logger = logging.getLogger(__name__)


def mobility_rng(config: ScenarioConfig) -> np.random.Generator:
    """Stream for waypoint, speed and rest draws after placement."""
    return np.random.default_rng([config.seed, 1])


def seeding_rng(config: ScenarioConfig) -> np.random.Generator:
    return np.random.default_rng([config.seed, 2])


@dataclass
class Scenario:
    """
    Static cohort on node ids [0, n_static), migrated cohort on
    [n_static, n_static + n_migrated); both placed by the same uniform law.
    Labelled migrant origins split the migrated range, see origin_ranges.
    """

    config: ScenarioConfig
    fleet: MobilityFleet
    state: CompartmentState
    params: EpidemicParams
    infected: List[int]

    @property
    def migrated_ids(self) -> np.ndarray:
        return np.arange(self.config.n_static, self.config.n_nodes)

    def origin_ids(self) -> Dict[str, np.ndarray]:
        return {label: np.arange(ids.start, ids.stop) for label, ids in self.config.origin_ranges().items()}


def choose_infected(config: ScenarioConfig, rng: Optional[np.random.Generator] = None) -> List[int]:
    """
    Initially infectious node ids. With seed_migrated_infected the draw is from
    the migrated cohort only; otherwise from every node.
    """
    rng = rng if rng is not None else seeding_rng(config)
    if config.seed_migrated_infected and config.n_migrated > 0:
        pool = np.arange(config.n_static, config.n_nodes)
    else:
        pool = np.arange(config.n_nodes)
    if config.infected_fraction == 0:
        return []
    count = min(max(round_half_away(config.infected_fraction * len(pool)), 1), len(pool))
    chosen = rng.choice(pool, size=count, replace=False)
    return sorted(int(i) for i in chosen)


def build_scenario(config: ScenarioConfig) -> Scenario:
    fleet = init_mobility(config, config.seed, config.n_nodes)
    infected = choose_infected(config)
    state = CompartmentState.seeded(config.n_nodes, infected, cohort_size=config.cohort_size)
    params = EpidemicParams.from_config(config)
    logger.info(
        f"Scenario: {config.n_static} static + {config.n_migrated} migrated nodes, "
        f"{len(infected)} infected, d_T={config.threshold} m"
    )
    return Scenario(config=config, fleet=fleet, state=state, params=params, infected=infected)


def scenario_from_population(
    config: ScenarioConfig,
    records: List[PopulationRecord],
    region: str,
    spec: SampleSpec = SampleSpec(),
) -> ScenarioConfig:
    """Config whose cohort sizes come from the sampled census record of `region`."""
    matches = [r for r in records if r.region == region]
    if not matches:
        known = ", ".join(r.region for r in records) or "none"
        raise ConfigError(f"region {region!r} not in population file (known: {known})")
    sampled = sample_record(matches[0], spec)
    logger.info(
        f"{region}: sampled {sampled.sampled_total} of {sampled.total}, "
        f"{sampled.sampled_migrated} migrated"
    )
    origins = allocate_by_origin(sampled.sampled_migrated, config.migrant_origins)
    return config.replace(
        n_static=sampled.sampled_static, n_migrated=sampled.sampled_migrated, migrant_origins=origins
    )


def allocate_by_origin(total: int, weights: Dict[str, int]) -> Dict[str, int]:
    """
    Split `total` migrated nodes across origins in proportion to `weights`,
    largest remainder first so the parts sum to `total` exactly. Ties go to
    the label that sorts first.
    """
    if not weights:
        return {}
    weight_sum = sum(weights.values())
    if weight_sum == 0:
        raise ConfigError("migrant_origins weights are all zero, cannot split the sampled migrants")
    labels = sorted(weights)
    quotas = {label: total * weights[label] / weight_sum for label in labels}
    parts = {label: int(np.floor(quotas[label])) for label in labels}
    leftover = total - sum(parts.values())
    by_remainder = sorted(labels, key=lambda label: (-(quotas[label] - parts[label]), label))
    for label in by_remainder[:leftover]:
        parts[label] += 1
    return parts
