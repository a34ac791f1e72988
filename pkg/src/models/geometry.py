import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

# Rows per block in the pairwise sums; fixed so results never depend on the worker count
ROW_BLOCK_SIZE = 256


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float


class Phase(Enum):
    RESTING = "resting"
    TRAVELING = "traveling"


@dataclass(frozen=True)
class MobilityState:
    """Per-node view of the random-waypoint-with-rest process."""

    position: Point2D
    waypoint: Point2D
    speed: float            # m/s
    rest_remaining: int     # days
    phase: Phase


def euclidean_distance(p: Point2D, q: Point2D) -> float:
    """Straight-line distance in meters."""
    return math.hypot(p.x - q.x, p.y - q.y)


def as_array(points: Union[np.ndarray, Sequence[Point2D]]) -> np.ndarray:
    """Coerce Point2D sequences (or an (n, 2) array) into a float64 (n, 2) array."""
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=np.float64)
    else:
        arr = np.array([(p.x, p.y) for p in points], dtype=np.float64)
    return arr.reshape(-1, 2)


def pair_distances(points: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """d_ij for index arrays i, j; the single distance formula used by every snapshot path."""
    dx = points[i, 0] - points[j, 0]
    dy = points[i, 1] - points[j, 1]
    return np.sqrt(dx * dx + dy * dy)


class RowSums(NamedTuple):
    distance: np.ndarray            # Σ_j d_ij per node
    kernel: Optional[np.ndarray]    # Σ_j exp(-d_ij² / 2σ²) per node, self term included


def pairwise_row_sums(
    points: Union[np.ndarray, Sequence[Point2D]],
    sigma: Optional[float] = None,
    workers: int = 1,
    block_size: int = ROW_BLOCK_SIZE,
) -> RowSums:
    """
    Per-node sums over all other nodes, evaluated in fixed row blocks.

    Args:
        points: node positions
        sigma: kernel dispersion; when None only distance sums are produced
        workers: threads used for the blocks (results are identical for any value)
        block_size: rows per block

    Returns:
        RowSums with one entry per node
    """
    pts = as_array(points)
    n = len(pts)
    starts = list(range(0, n, block_size))
    two_sigma_sq = None if sigma is None else 2.0 * sigma * sigma

    def _block(start: int):
        d = cdist(pts[start:start + block_size], pts)
        dist_sum = d.sum(axis=1)
        if two_sigma_sq is None:
            return dist_sum, None
        return dist_sum, np.exp(-(d * d) / two_sigma_sq).sum(axis=1)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block, starts))
    else:
        parts = [_block(s) for s in starts]

    distance = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
    kernel = None
    if two_sigma_sq is not None:
        kernel = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0)
    return RowSums(distance=distance, kernel=kernel)


class MobilityFleet:
    """
    Struct-of-arrays state for all nodes. Behaves as a read-only sequence of
    MobilityState so callers can treat it as the per-node list.
    """

    def __init__(
        self,
        positions: np.ndarray,
        waypoints: np.ndarray,
        speeds: np.ndarray,
        rest_remaining: np.ndarray,
        traveling: np.ndarray,
    ):
        self.positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        self.waypoints = np.asarray(waypoints, dtype=np.float64).reshape(-1, 2)
        self.speeds = np.asarray(speeds, dtype=np.float64)
        self.rest_remaining = np.asarray(rest_remaining, dtype=np.int64)
        self.traveling = np.asarray(traveling, dtype=bool)

    @classmethod
    def from_states(cls, states: Sequence[MobilityState]) -> "MobilityFleet":
        return cls(
            positions=[(s.position.x, s.position.y) for s in states],
            waypoints=[(s.waypoint.x, s.waypoint.y) for s in states],
            speeds=[s.speed for s in states],
            rest_remaining=[s.rest_remaining for s in states],
            traveling=[s.phase is Phase.TRAVELING for s in states],
        )

    def copy(self) -> "MobilityFleet":
        return MobilityFleet(
            self.positions.copy(),
            self.waypoints.copy(),
            self.speeds.copy(),
            self.rest_remaining.copy(),
            self.traveling.copy(),
        )

    def __len__(self) -> int:
        return len(self.speeds)

    def __getitem__(self, idx: int) -> MobilityState:
        x, y = self.positions[idx]
        wx, wy = self.waypoints[idx]
        return MobilityState(
            position=Point2D(float(x), float(y)),
            waypoint=Point2D(float(wx), float(wy)),
            speed=float(self.speeds[idx]),
            rest_remaining=int(self.rest_remaining[idx]),
            phase=Phase.TRAVELING if self.traveling[idx] else Phase.RESTING,
        )

    def __iter__(self) -> Iterator[MobilityState]:
        for idx in range(len(self)):
            yield self[idx]

    def points(self) -> List[Point2D]:
        return [Point2D(float(x), float(y)) for x, y in self.positions]

    def same_as(self, other: "MobilityFleet") -> bool:
        """Bitwise equality of every field."""
        return (
            np.array_equal(self.positions, other.positions)
            and np.array_equal(self.waypoints, other.waypoints)
            and np.array_equal(self.speeds, other.speeds)
            and np.array_equal(self.rest_remaining, other.rest_remaining)
            and np.array_equal(self.traveling, other.traveling)
        )


def _check_ranges(config) -> None:
    if config.v_min > config.v_max:
        raise ValueError(f"inverted speed range [{config.v_min}, {config.v_max}]")
    if config.t_rest_min > config.t_rest_max:
        raise ValueError(f"inverted rest range [{config.t_rest_min}, {config.t_rest_max}]")
    if config.t_rest_min < 0:
        raise ValueError(f"rest days must be >= 0, got {config.t_rest_min}")


def init_mobility(config, rng_seed: int, n: int) -> MobilityFleet:
    """
    Place n nodes uniformly in the a x a square, all Resting.

    Args:
        config: ScenarioConfig (side_length, speed and rest ranges)
        rng_seed: seed for the placement stream
        n: number of nodes

    Returns:
        MobilityFleet; identical for identical (config, seed, n)
    """
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    _check_ranges(config)

    rng = np.random.default_rng(rng_seed)
    a = config.side_length
    positions = rng.uniform(0.0, a, size=(n, 2))
    speeds = rng.uniform(config.v_min, config.v_max, size=n)
    rest = rng.integers(config.t_rest_min, config.t_rest_max + 1, size=n)
    return MobilityFleet(
        positions=positions,
        waypoints=positions.copy(),
        speeds=speeds,
        rest_remaining=rest,
        traveling=np.zeros(n, dtype=bool),
    )


def step_mobility(
    states: Union[MobilityFleet, Sequence[MobilityState]],
    config,
    rng: np.random.Generator,
) -> MobilityFleet:
    """
    Advance every node by one tick (one day).

    Travelers move toward their waypoint by at most speed * travel_seconds_per_day
    and start resting on arrival; resting nodes count down and pick a fresh
    waypoint and speed when the countdown reaches zero.
    """
    fleet = states.copy() if isinstance(states, MobilityFleet) else MobilityFleet.from_states(states)
    if len(fleet) == 0:
        raise ValueError("cannot step an empty fleet")
    _check_ranges(config)

    a = config.side_length
    pos = fleet.positions
    resting_at_start = ~fleet.traveling

    moving = np.flatnonzero(fleet.traveling)
    if moving.size:
        leg = fleet.waypoints[moving] - pos[moving]
        dist = np.hypot(leg[:, 0], leg[:, 1])
        reach = fleet.speeds[moving] * config.travel_seconds_per_day
        arrive = dist <= reach

        arrived = moving[arrive]
        pos[arrived] = fleet.waypoints[arrived]
        fleet.traveling[arrived] = False
        fleet.rest_remaining[arrived] = rng.integers(config.t_rest_min, config.t_rest_max + 1, size=arrived.size)

        en_route = moving[~arrive]
        frac = reach[~arrive] / dist[~arrive]
        pos[en_route] += leg[~arrive] * frac[:, None]
        np.clip(pos, 0.0, a, out=pos)

    resting = np.flatnonzero(resting_at_start)
    if resting.size:
        fleet.rest_remaining[resting] = np.maximum(fleet.rest_remaining[resting] - 1, 0)
        depart = resting[fleet.rest_remaining[resting] == 0]
        if depart.size:
            fleet.waypoints[depart] = rng.uniform(0.0, a, size=(depart.size, 2))
            fleet.speeds[depart] = rng.uniform(config.v_min, config.v_max, size=depart.size)
            fleet.traveling[depart] = True

    return fleet
