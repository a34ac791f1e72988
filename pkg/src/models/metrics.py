import json
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from src.errors import NoFiniteThresholdError
from src.models.geometry import Point2D, as_array, pairwise_row_sums
from src.models.network import degree_from_row_sums

if TYPE_CHECKING:
    from src.models.dynamics import EpidemicParams, TrajectoryRecord

logger = logging.getLogger(__name__)

PointsLike = Union[np.ndarray, Sequence[Point2D]]


def threshold_factor(d_T: float, sigma: float) -> float:
    """exp(-d_T² / 2σ²)."""
    return math.exp(-(d_T * d_T) / (2.0 * sigma * sigma))


def kernel_mass(positions: PointsLike, sigma: float, workers: int = 1) -> float:
    """(1/N) Σ_i Σ_j exp(-d_ij²/2σ²) with the j = i terms included."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    pts = as_array(positions)
    if len(pts) == 0:
        raise ValueError("need at least one node")
    sums = pairwise_row_sums(pts, sigma=sigma, workers=workers)
    return float(np.sum(sums.kernel)) / len(pts)


def r0_from_mass(beta: float, mu: float, sigma: float, d_T: float, k_mean: float, mass: float) -> float:
    if mu <= 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    if k_mean <= 0:
        raise ValueError(f"k_mean must be > 0, got {k_mean}")
    return (beta / mu) * (1.0 / k_mean) * threshold_factor(d_T, sigma) * mass


def beta_critical_from_mass(
    mu: float, sigma: float, d_T: float, k_mean: float, mass: float, r_critical: float = 1.0
) -> float:
    if mu <= 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    if k_mean <= 0:
        raise ValueError(f"k_mean must be > 0, got {k_mean}")
    denominator = threshold_factor(d_T, sigma) * mass
    if denominator == 0.0:
        raise NoFiniteThresholdError(f"no finite beta_critical: kernel underflows at d_T={d_T}, sigma={sigma}")
    return r_critical * mu * k_mean / denominator


def r0(positions: PointsLike, params: "EpidemicParams", k_mean: float, workers: int = 1) -> float:
    """
    Basic reproduction number of a configuration.

    R0 = (beta/mu) (1/<k>) exp(-d_T²/2σ²) (1/N) Σ_i Σ_j exp(-d_ij²/2σ²)

    Args:
        positions: node positions
        params: epidemic parameters (beta, mu, sigma, d_T)
        k_mean: average degree of the configuration

    Returns:
        R0 (dimensionless)
    """
    mass = kernel_mass(positions, params.sigma, workers=workers)
    return r0_from_mass(params.beta, params.mu, params.sigma, params.d_T, k_mean, mass)


def beta_critical(
    positions: PointsLike,
    mu: float,
    sigma: float,
    d_T: float,
    k_mean: float,
    r_critical: float = 1.0,
    workers: int = 1,
) -> float:
    """Infection rate at which R0 equals r_critical; raises NoFiniteThresholdError if none exists."""
    mass = kernel_mass(positions, sigma, workers=workers)
    return beta_critical_from_mass(mu, sigma, d_T, k_mean, mass, r_critical)


def beta_critical_sweep(
    positions: PointsLike,
    area: float,
    mu: float,
    sigma: float,
    radii: Sequence[float],
    r_critical: float = 1.0,
    workers: int = 1,
) -> List[Tuple[float, float]]:
    """
    beta_critical of one configuration against a list of threshold radii.

    <k> and the kernel mass do not depend on the radius, so one pass over
    the pairs serves every entry. A radius whose factor underflows maps to inf.
    """
    if area <= 0:
        raise ValueError(f"area must be > 0, got {area}")
    pts = as_array(positions)
    sums = pairwise_row_sums(pts, sigma=sigma, workers=workers)
    _, k_mean = degree_from_row_sums(sums.distance, area)
    mass = float(np.sum(sums.kernel)) / len(pts)

    results = []
    for radius in radii:
        try:
            value = beta_critical_from_mass(mu, sigma, radius, k_mean, mass, r_critical)
        except NoFiniteThresholdError:
            logger.warning(f"No finite beta_critical at radius {radius}")
            value = math.inf
        results.append((float(radius), value))
    return results


def epidemic_size(trajectory: "TrajectoryRecord") -> float:
    """Σ_i ∫ I_i dt by the composite trapezoidal rule; 0 for a single tick."""
    if len(trajectory) == 0:
        raise ValueError("trajectory is empty")
    if len(trajectory) == 1:
        return 0.0
    return float(trapezoid(np.asarray(trajectory.I, dtype=np.float64), trajectory.times()))


def spreading_speed(trajectory: "TrajectoryRecord", area: float) -> np.ndarray:
    """
    Per tick (1/N) Σ_i dI_i/dt / A.

    Central differences inside, one-sided at both ends.
    """
    if len(trajectory) < 2:
        raise ValueError(f"need at least 2 ticks, got {len(trajectory)}")
    if area is None or area <= 0:
        raise ValueError(f"area must be > 0, got {area}")
    rate = np.gradient(np.asarray(trajectory.I, dtype=np.float64), trajectory.times())
    return rate / (trajectory.n_nodes * area)


def r_t_series(run: "TrajectoryRecord") -> List[Tuple[int, float]]:
    """R_t = R0(geometry at t) * S(t)/N for every recorded tick."""
    population = run.population
    series = []
    for tick, r0_t, s in zip(run.ticks, run.r0, run.S):
        series.append((int(tick), float(r0_t) * s / population))
    return series


def _json_number(value: float) -> Any:
    # JSON has no NaN/inf
    return None if value is None or not math.isfinite(value) else float(value)


@dataclass
class MetricsReport:
    r0: float
    beta_critical: float
    epidemic_size: float
    spreading_speed_series: List[Tuple[int, float]] = field(default_factory=list)
    r_t_series: List[Tuple[int, float]] = field(default_factory=list)

    @classmethod
    def from_trajectory(cls, trajectory: "TrajectoryRecord") -> "MetricsReport":
        """R0 and beta_critical of the initial configuration plus the run-level series."""
        p = trajectory.params
        k0, mass0 = trajectory.k_mean[0], trajectory.kernel_mass[0]
        r0_value = beta_c = math.nan
        if p is not None and p.mu > 0 and k0 > 0:
            r0_value = r0_from_mass(p.beta, p.mu, p.sigma, p.d_T, k0, mass0)
            try:
                beta_c = beta_critical_from_mass(p.mu, p.sigma, p.d_T, k0, mass0, p.r_critical)
            except NoFiniteThresholdError:
                beta_c = math.inf
        speeds = trajectory.spreading_speed if len(trajectory.spreading_speed) == len(trajectory) else []
        return cls(
            r0=r0_value,
            beta_critical=beta_c,
            epidemic_size=epidemic_size(trajectory),
            spreading_speed_series=[(int(t), float(v)) for t, v in zip(trajectory.ticks, speeds)],
            r_t_series=r_t_series(trajectory),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "r0": _json_number(self.r0),
            "beta_critical": _json_number(self.beta_critical),
            "epidemic_size": _json_number(self.epidemic_size),
            "spreading_speed_series": [[t, _json_number(v)] for t, v in self.spreading_speed_series],
            "r_t_series": [[t, _json_number(v)] for t, v in self.r_t_series],
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
