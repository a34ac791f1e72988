import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial import KDTree

from src.models.geometry import Point2D, as_array, pair_distances, pairwise_row_sums

logger = logging.getLogger(__name__)

# Below this many nodes "auto" uses the all-pairs path
BRUTE_FORCE_LIMIT = 512

PointsLike = Union[np.ndarray, Sequence[Point2D]]


@dataclass
class ContactSnapshot:
    """
    Pairs (i, j, d_ij) with i < j and d_ij <= d_T at one tick, sorted by (i, j).
    Stored as parallel arrays; `pairs` gives the tuple view.
    """

    n: int
    i: np.ndarray
    j: np.ndarray
    d: np.ndarray
    tick: int = 0
    _directed: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.i)

    @property
    def pairs(self) -> List[Tuple[int, int, float]]:
        return [(int(a), int(b), float(dist)) for a, b, dist in zip(self.i, self.j, self.d)]

    def degrees(self) -> np.ndarray:
        """Incident pair count per node."""
        return np.bincount(self.i, minlength=self.n) + np.bincount(self.j, minlength=self.n)

    def directed(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Both directions of every pair as (target, neighbor, d), sorted by target
        and then ascending neighbor id. Reductions over this order are fixed.
        """
        if self._directed is None:
            target = np.concatenate([self.i, self.j])
            neighbor = np.concatenate([self.j, self.i])
            dist = np.concatenate([self.d, self.d])
            order = np.lexsort((neighbor, target))
            self._directed = (target[order], neighbor[order], dist[order])
        return self._directed


def _brute_pairs(pts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(len(pts), k=1)
    return i.astype(np.int64), j.astype(np.int64)


def _tree_pairs(pts: np.ndarray, d_T: float) -> Tuple[np.ndarray, np.ndarray]:
    # Slightly wider query; the exact filter below uses pair_distances
    radius = d_T * (1.0 + 1e-9) + 1e-12
    found = KDTree(pts).query_pairs(r=radius, output_type="ndarray")
    if len(found) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    found = np.sort(found.astype(np.int64), axis=1)
    return found[:, 0], found[:, 1]


def build_snapshot(positions: PointsLike, d_T: float, tick: int = 0, method: str = "auto") -> ContactSnapshot:
    """
    Collect every pair within the threshold distance (inclusive).

    Args:
        positions: node positions
        d_T: threshold distance in meters
        tick: day index stamped on the snapshot
        method: "brute" (all pairs, the reference), "tree" (KDTree) or "auto"

    Returns:
        ContactSnapshot in canonical (i, j) order
    """
    if d_T < 0:
        raise ValueError(f"d_T must be >= 0, got {d_T}")
    pts = as_array(positions)
    n = len(pts)
    if method == "auto":
        method = "brute" if n <= BRUTE_FORCE_LIMIT else "tree"
    if method == "brute":
        i, j = _brute_pairs(pts)
    elif method == "tree":
        i, j = _tree_pairs(pts, d_T)
    else:
        raise ValueError(f"unknown snapshot method {method!r}")

    d = pair_distances(pts, i, j)
    keep = d <= d_T
    i, j, d = i[keep], j[keep], d[keep]
    order = np.lexsort((j, i))
    return ContactSnapshot(n=n, i=i[order], j=j[order], d=d[order], tick=tick)


def estimate_edges(
    positions: PointsLike,
    speeds: Sequence[float],
    area: float,
    d_T: float,
    horizon_T: float,
    workers: int = 1,
) -> float:
    """Total connection count E = Σ_i (Σ_j d_ij / A)(v_i T / d_T)."""
    if area <= 0:
        raise ValueError(f"area must be > 0, got {area}")
    if d_T <= 0:
        raise ValueError(f"d_T must be > 0, got {d_T}")
    dist_sums = pairwise_row_sums(positions, workers=workers).distance
    v = np.asarray(speeds, dtype=np.float64)
    if len(v) != len(dist_sums):
        raise ValueError(f"{len(v)} speeds for {len(dist_sums)} positions")
    return float(np.sum((dist_sums / area) * (v * horizon_T / d_T)))


def degree_from_row_sums(dist_sums: np.ndarray, area: float) -> Tuple[np.ndarray, float]:
    """Per-node <k_i> = N Σ_j d_ij / A and their mean."""
    k = len(dist_sums) * dist_sums / area
    return k, float(np.mean(k))


def average_degree(positions: PointsLike, area: float, workers: int = 1) -> Tuple[np.ndarray, float]:
    """
    Distance-based average degree.

    Returns:
        (per-node <k_i> array, mean <k>)
    """
    if area <= 0:
        raise ValueError(f"area must be > 0, got {area}")
    pts = as_array(positions)
    if len(pts) < 1:
        raise ValueError("need at least one node")
    return degree_from_row_sums(pairwise_row_sums(pts, workers=workers).distance, area)


@dataclass
class DegreeHistogram:
    bins: Dict[Tuple[int, int], float]      # [lo, hi) -> probability
    mean_degree: float
    degrees: np.ndarray = field(repr=False)

    def rows(self) -> List[Tuple[int, int, float]]:
        return [(lo, hi, p) for (lo, hi), p in sorted(self.bins.items())]


def accumulate_degrees(snapshots: Sequence[ContactSnapshot]) -> np.ndarray:
    if not snapshots:
        raise ValueError("need at least one snapshot")
    degrees = np.zeros(snapshots[0].n, dtype=np.int64)
    for snap in snapshots:
        degrees += snap.degrees()
    return degrees


def histogram_from_degrees(degrees: np.ndarray, bin_width: int) -> DegreeHistogram:
    if bin_width <= 0:
        raise ValueError(f"bin_width must be >= 1, got {bin_width}")
    degrees = np.asarray(degrees, dtype=np.int64)
    if degrees.size == 0:
        return DegreeHistogram(bins={}, mean_degree=0.0, degrees=degrees)
    counts = np.bincount(degrees // bin_width)
    probs = counts / degrees.size
    bins = {(k * bin_width, (k + 1) * bin_width): float(p) for k, p in enumerate(probs)}
    return DegreeHistogram(bins=bins, mean_degree=float(degrees.mean()), degrees=degrees)


def degree_histogram(snapshots: Sequence[ContactSnapshot], bin_width: int) -> DegreeHistogram:
    """Degrees accumulated over all snapshots, binned and normalized to probabilities."""
    if bin_width <= 0:
        raise ValueError(f"bin_width must be >= 1, got {bin_width}")
    return histogram_from_degrees(accumulate_degrees(snapshots), bin_width)


def snapshot_frame(snapshot: ContactSnapshot) -> pd.DataFrame:
    return pd.DataFrame({
        "tick": np.full(len(snapshot), snapshot.tick, dtype=np.int64),
        "i": snapshot.i,
        "j": snapshot.j,
        "d_ij": snapshot.d,
    })


def write_snapshot_csv(snapshot: ContactSnapshot, path) -> None:
    """CSV with header tick,i,j,d_ij (0-based ids, d_ij with 6 decimals)."""
    snapshot_frame(snapshot).to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
