"""
Long scenario checks: epidemic shapes, conservation at scale and run
determinism. Run with `pytest -m slow`; skip with `-m "not slow"`.
"""
import math

import numpy as np
import pandas as pd
import pytest
from scipy.spatial.distance import pdist

from src.cli.commands import cmd_simulate
from src.cli.scenario import build_scenario, mobility_rng
from src.models.dynamics import CompartmentState, EpidemicParams, NetworkSIRSimulation, run_network_sir
from src.models.geometry import init_mobility
from src.models.metrics import kernel_mass, threshold_factor
from src.models.network import average_degree, build_snapshot
from src.utils.config import ScenarioConfig

pytestmark = pytest.mark.slow


def _config(**values) -> ScenarioConfig:
    return ScenarioConfig(**values).validate()


def _mean_degree(positions, d_T: float) -> float:
    return 2.0 * len(build_snapshot(positions, d_T)) / len(positions)


def test_outbreak_shape_on_four_thousand_nodes():
    # Nodes rest one day then jump anywhere in the square, so the contact
    # network is reshuffled every second tick.
    config = _config(
        side_length=1000.0, d_T=150.0, sigma=1e6,
        t_rest_min=1, t_rest_max=1, v_min=1.0, v_max=50.0,
        beta=0.0, mu=0.15, n_static=4000, n_migrated=0, horizon=60,
    )
    fleet = init_mobility(config, config.seed, config.n_nodes)
    _, k0 = average_degree(fleet.positions, config.area)
    c0 = _mean_degree(fleet.positions, config.threshold)
    config = config.replace(beta=1.45 / (k0 * c0))

    state = CompartmentState.seeded(config.n_nodes, [0, 1])
    record = run_network_sir(state, fleet, config, EpidemicParams.from_config(config), 60,
                             rng=mobility_rng(config))

    n = config.n_nodes
    peak = max(record.I)
    peak_tick = record.ticks[record.I.index(peak)]
    assert 0.70 * n <= peak <= 0.85 * n
    assert 9 <= peak_tick <= 15
    assert record.I[5] < 0.1 * n
    assert record.I[60] <= 0.001 * n


def test_reproduction_number_declines_under_table_mobility():
    # Default area, speeds and rest days; <k> grows as N^2 / a, so the node
    # count is what leaves room for a contact degree near 19
    config = _config(sigma=1e7, beta=0.0, mu=0.2, n_static=460, n_migrated=0, horizon=100,
                     seed_migrated_infected=False, infected_fraction=0.01)
    assert config.side_length == 25000.0
    positions = init_mobility(config, config.seed, config.n_nodes).positions
    n = config.n_nodes
    _, k0 = average_degree(positions, config.area)
    mass = kernel_mass(positions, config.sigma)

    # Mean degree chosen so that beta <k> c / mu = 3.0 while R_t(0) = 3.7 S/N
    target = 3.0 * mass / (3.7 * k0 * k0)
    d_T = float(np.sort(pdist(positions))[int(round(target * n / 2)) - 1])
    config = config.replace(d_T=d_T)
    q0 = threshold_factor(d_T, config.sigma) * mass
    config = config.replace(beta=3.7 * config.mu * k0 / q0)

    scenario = build_scenario(config)
    record = run_network_sir(scenario.state, scenario.fleet, config, scenario.params, 100,
                             rng=mobility_rng(config))

    r_t = pd.Series(record.r_t)
    assert r_t.iloc[0] == pytest.approx(3.7 * record.S[0] / n, rel=1e-9)
    assert 3.0 <= r_t.iloc[0] <= 4.5
    assert 0.2 <= r_t.iloc[100] <= 0.7

    # The susceptible factor of R_t never rises
    assert all(b <= a for a, b in zip(record.S, record.S[1:]))

    # While the outbreak still takes 3+ people per 10 ticks the smoothed
    # R_t must not rise; after burn-out only <k> and kernel mass move it
    smoothed = r_t.rolling(10).mean()
    step = smoothed.diff()
    susceptible = pd.Series(record.S)
    active = (susceptible.shift(10) - susceptible) >= 3.0
    assert active.sum() >= 10
    assert (step[active] <= 1e-12).all()
    assert smoothed.iloc[100] < smoothed.iloc[9]


def test_critical_rate_grows_as_susceptibles_deplete():
    # Rest periods of 50+ days keep every node in place for the whole run
    config = _config(
        side_length=20000.0, d_T=1500.0, sigma=1e7,
        t_rest_min=50, t_rest_max=115, beta=0.0, mu=0.25,
        n_static=1000, n_migrated=0, horizon=40,
        seed_migrated_infected=False, infected_fraction=0.01,
    )
    positions = init_mobility(config, config.seed, config.n_nodes).positions
    _, k0 = average_degree(positions, config.area)
    c0 = _mean_degree(positions, config.threshold)
    config = config.replace(beta=4.0 * config.mu / (k0 * c0))

    scenario = build_scenario(config)
    record = run_network_sir(scenario.state, scenario.fleet, config, scenario.params, 40,
                             rng=mobility_rng(config))

    series = record.beta_critical
    assert len(series) == 41
    assert all(math.isfinite(v) and v > 0 for v in series)
    assert all(b >= a for a, b in zip(series, series[1:]))
    assert series[-1] / series[0] >= 5.0


def test_conservation_over_a_long_large_run():
    config = _config(side_length=1000.0, d_T=20.0, sigma=10.0, beta=0.0, mu=0.1,
                     n_static=2000, n_migrated=2000, horizon=100)
    fleet = init_mobility(config, config.seed, config.n_nodes)
    _, k0 = average_degree(fleet.positions, config.area)
    d_max = int(build_snapshot(fleet.positions, config.threshold).degrees().max())
    config = config.replace(beta=0.5 / (k0 * d_max))

    scenario = build_scenario(config)
    sim = NetworkSIRSimulation(config, scenario.fleet, scenario.state, scenario.params, rng=mobility_rng(config))
    for _ in range(100):
        state = sim.step()
        assert state.conservation_error() <= 1e-9
        assert (state.s >= 0).all() and (state.i >= 0).all() and (state.r >= 0).all()
    sim.finish()
    assert sim.record.clamp_events == 0


def test_infection_never_grows_without_transmission():
    config = _config(side_length=1000.0, d_T=20.0, sigma=10.0, beta=0.0, mu=0.1,
                     n_static=2000, n_migrated=2000, horizon=30)
    scenario = build_scenario(config)
    record = run_network_sir(scenario.state, scenario.fleet, config, scenario.params, 30,
                             rng=mobility_rng(config))
    assert all(b < a for a, b in zip(record.I, record.I[1:]))
    assert record.S == [record.S[0]] * 31


def test_zero_threshold_reduces_to_pure_recovery():
    config = _config(side_length=1000.0, d_T=0.0, sigma=50.0, beta=0.4, mu=0.1,
                     n_static=50, n_migrated=0, horizon=30)
    fleet = init_mobility(config, config.seed, config.n_nodes)
    state = CompartmentState.seeded(config.n_nodes, [0, 1, 2])
    record = run_network_sir(state, fleet, config, EpidemicParams.from_config(config), 30,
                             rng=mobility_rng(config))
    expected = [3.0 * (1.0 - config.mu * config.dt) ** t for t in range(31)]
    np.testing.assert_allclose(record.I, expected, rtol=1e-12)
    assert record.S == [47.0] * 31


def test_trajectory_bytes_do_not_depend_on_workers(tmp_path):
    config = _config(side_length=2000.0, d_T=100.0, sigma=50.0, beta=5e-4, mu=0.1,
                     n_static=300, n_migrated=300, horizon=30, infected_fraction=0.05)
    serial = cmd_simulate(config, str(tmp_path / "serial"))
    threaded = cmd_simulate(config.replace(workers=4), str(tmp_path / "threaded"))
    with open(serial["trajectory.csv"], "rb") as a, open(threaded["trajectory.csv"], "rb") as b:
        assert a.read() == b.read()
