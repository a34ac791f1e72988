import json
import math

import numpy as np
import pytest

from src.errors import NoFiniteThresholdError
from src.models.dynamics import EpidemicParams, TrajectoryRecord
from src.models.geometry import Point2D
from src.models.metrics import (
    MetricsReport,
    beta_critical,
    beta_critical_sweep,
    epidemic_size,
    kernel_mass,
    r0,
    r_t_series,
    spreading_speed,
)
from src.models.network import average_degree, build_snapshot, estimate_edges
from tests import oracles

PAIR = [Point2D(0, 0), Point2D(1, 0)]


def _record(values, n_nodes=1, dt=1.0):
    record = TrajectoryRecord(n_nodes=n_nodes, dt=dt)
    for t, i in enumerate(values):
        record.append(t, (0.0, i, 0.0))
    return record


def test_r0_two_node_example():
    params = EpidemicParams(beta=0.5, mu=0.25, sigma=1.0, d_T=1.0)
    _, k_mean = average_degree(PAIR, 4.0)
    assert k_mean == 0.5
    expected = 2 * 2 * math.exp(-0.5) * 0.5 * (2 * 1 + 2 * math.exp(-0.5))
    assert r0(PAIR, params, k_mean) == pytest.approx(expected, rel=1e-12)
    assert r0(PAIR, params, k_mean) == pytest.approx(3.8983, abs=1e-3)


def test_r0_linear_in_beta():
    params = EpidemicParams(beta=0.5, mu=0.25, sigma=1.0, d_T=1.0)
    assert r0(PAIR, EpidemicParams(0.0, 0.25, 1.0, 1.0), 0.5) == 0.0
    doubled = EpidemicParams(1.0, 0.25, 1.0, 1.0)
    assert r0(PAIR, doubled, 0.5) == pytest.approx(2 * r0(PAIR, params, 0.5), rel=1e-15)


def test_r0_preconditions():
    with pytest.raises(ValueError):
        r0(PAIR, EpidemicParams(0.5, 0.25, 1.0, 1.0), 0.0)
    with pytest.raises(ValueError):
        r0(PAIR, EpidemicParams(0.5, 0.0, 1.0, 1.0), 0.5)


def test_beta_critical_two_node_example():
    value = beta_critical(PAIR, 0.25, 1.0, 1.0, 0.5)
    expected = 0.25 * 0.5 / (math.exp(-0.5) * 0.5 * (2 + 2 * math.exp(-0.5)))
    assert value == pytest.approx(expected, rel=1e-12)
    assert value == pytest.approx(0.12826, abs=1e-4)
    assert beta_critical(PAIR, 0.5, 1.0, 1.0, 0.5) == pytest.approx(2 * value, rel=1e-15)


def test_beta_critical_without_finite_threshold():
    with pytest.raises(NoFiniteThresholdError):
        beta_critical(PAIR, 0.25, 1.0, 1e3, 0.5)


def test_r0_is_invariant_under_rigid_motion(rng):
    points = rng.uniform(0, 100, size=(40, 2))
    params = EpidemicParams(0.2, 0.1, 15.0, 10.0)
    theta = 0.7
    rotation = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    moved = points @ rotation.T + np.array([250.0, -40.0])
    assert r0(moved, params, 3.0) == pytest.approx(r0(points, params, 3.0), rel=1e-12)


def test_oracle_equivalence_on_random_instances(rng):
    for _ in range(100):
        n = int(rng.integers(2, 60))
        side = rng.uniform(10, 500)
        points = rng.uniform(0, side, size=(n, 2))
        tuples = [tuple(p) for p in points]
        area = side * side
        d_T = rng.uniform(0.5, side / 3)
        sigma = rng.uniform(d_T / 2, side)
        mu = rng.uniform(0.05, 0.5)
        beta = rng.uniform(0.0, 1.0)
        speeds = rng.uniform(0, 50, size=n)

        k, k_mean = average_degree(points, area)
        expected_k, expected_mean = oracles.degrees(tuples, area)
        np.testing.assert_allclose(k, expected_k, rtol=1e-12)
        assert k_mean == pytest.approx(expected_mean, rel=1e-12)

        assert estimate_edges(points, speeds, area, d_T, 3600.0) == pytest.approx(
            oracles.edges(tuples, speeds, area, d_T, 3600.0), rel=1e-12
        )

        params = EpidemicParams(beta, mu, sigma, d_T)
        assert r0(points, params, k_mean) == pytest.approx(
            oracles.r0(tuples, beta, mu, sigma, d_T, k_mean), rel=1e-12, abs=1e-300
        )
        assert beta_critical(points, mu, sigma, d_T, k_mean) == pytest.approx(
            oracles.beta_critical(tuples, mu, sigma, d_T, k_mean), rel=1e-12
        )

        snap = build_snapshot(points, d_T)
        assert snap.pairs == oracles.snapshot_pairs(tuples, d_T)


def test_threshold_identity_on_random_configurations(rng):
    for _ in range(50):
        n = int(rng.integers(2, 80))
        points = rng.uniform(0, 200, size=(n, 2))
        mu = rng.uniform(0.05, 0.5)
        sigma = rng.uniform(5, 100)
        d_T = rng.uniform(1, 60)
        _, k_mean = average_degree(points, 4e4)
        critical = beta_critical(points, mu, sigma, d_T, k_mean)
        assert r0(points, EpidemicParams(critical, mu, sigma, d_T), k_mean) == pytest.approx(1.0, abs=1e-9)


def test_kernel_mass_includes_self_terms():
    assert kernel_mass([Point2D(0, 0)], 1.0) == 1.0
    assert kernel_mass([Point2D(0, 0), Point2D(1e6, 0)], 1.0) == 1.0


def test_beta_critical_sweep_grows_with_radius(rng):
    points = rng.uniform(0, 100, size=(30, 2))
    rows = beta_critical_sweep(points, 1e4, 0.1, 5.0, [1.0, 2.0, 5.0, 1e3])
    assert [r for r, _ in rows] == [1.0, 2.0, 5.0, 1e3]
    values = [v for _, v in rows]
    assert values[0] < values[1] < values[2]
    assert math.isinf(values[3])
    _, k_mean = average_degree(points, 1e4)
    assert values[1] == pytest.approx(beta_critical(points, 0.1, 5.0, 2.0, k_mean), rel=1e-12)


def test_epidemic_size_examples():
    assert epidemic_size(_record([3.0] * 11, n_nodes=3)) == pytest.approx(30.0)
    assert epidemic_size(_record([0.7])) == 0.0
    T = 10
    assert epidemic_size(_record([1 - t / T for t in range(T + 1)])) == pytest.approx(T / 2, abs=1e-12)


def test_epidemic_size_is_additive():
    values = [0.0, 1.0, 4.0, 2.0, 2.5, 0.5]
    whole = epidemic_size(_record(values))
    first = epidemic_size(_record(values[:3]))
    second = epidemic_size(_record(values[2:]))
    assert whole == pytest.approx(first + second)


def test_spreading_speed_examples():
    area = 25.0
    np.testing.assert_allclose(spreading_speed(_record([0.0, 1.0, 0.0]), area), [1 / area, 0.0, -1 / area])
    np.testing.assert_allclose(spreading_speed(_record([2.0] * 5, n_nodes=2), area), 0.0)
    growth = _record([4 * 0.5 * t for t in range(6)], n_nodes=4)
    np.testing.assert_allclose(spreading_speed(growth, area), 0.5 / area)
    with pytest.raises(ValueError):
        spreading_speed(_record([1.0]), area)


def test_r_t_series_scales_by_susceptible_fraction():
    record = TrajectoryRecord(n_nodes=10)
    record.append(0, (10.0, 0.0, 0.0), r0=3.0)
    record.append(1, (5.0, 2.0, 3.0), r0=3.2)
    record.append(2, (0.0, 1.0, 9.0), r0=3.1)
    assert r_t_series(record) == [(0, 3.0), (1, 1.6), (2, 0.0)]


def test_metrics_report_json(tmp_path):
    record = TrajectoryRecord(n_nodes=2, area=4.0, params=EpidemicParams(0.5, 0.25, 1.0, 1.0))
    record.append(0, (1.0, 1.0, 0.0), k_mean=0.5, kernel_mass=1 + math.exp(-0.5), r0=1.0)
    record.append(1, (0.5, 1.0, 0.5), k_mean=0.5, kernel_mass=1 + math.exp(-0.5), r0=1.0)
    record.spreading_speed = [0.0, 0.0]

    report = MetricsReport.from_trajectory(record)
    assert report.r0 == pytest.approx(r0(PAIR, EpidemicParams(0.5, 0.25, 1.0, 1.0), 0.5), rel=1e-12)
    assert report.beta_critical == pytest.approx(beta_critical(PAIR, 0.25, 1.0, 1.0, 0.5), rel=1e-12)
    assert report.epidemic_size == pytest.approx(1.0)

    path = tmp_path / "metrics.json"
    report.write_json(path)
    data = json.loads(path.read_text())
    assert set(data) == {"r0", "beta_critical", "epidemic_size", "spreading_speed_series", "r_t_series"}
    assert data["r_t_series"] == [[0, 0.5], [1, 0.25]]
