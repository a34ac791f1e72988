import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.errors import IntegratorInstabilityError, NoFiniteThresholdError
from src.models.geometry import MobilityFleet, pairwise_row_sums, step_mobility
from src.models.metrics import beta_critical_from_mass, r0_from_mass, spreading_speed
from src.models.network import ContactSnapshot, build_snapshot, degree_from_row_sums

logger = logging.getLogger(__name__)

# Pre-clamp fractions outside this band mean the explicit step is too large
STABLE_LOW = -0.1
STABLE_HIGH = 1.1

TRAJECTORY_COLUMNS = ["tick", "S", "I", "R", "k_mean", "R_t", "beta_critical", "spreading_speed"]


def kernel(d: Union[float, np.ndarray], sigma: float, d_T: float) -> Union[float, np.ndarray]:
    """Gaussian distance attenuation exp(-d²/2σ²), zero beyond d_T."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    d_arr = np.asarray(d, dtype=np.float64)
    value = np.where(d_arr <= d_T, np.exp(-(d_arr * d_arr) / (2.0 * sigma * sigma)), 0.0)
    if np.ndim(d) == 0:
        return float(value)
    return value


@dataclass
class EpidemicParams:
    beta: float             # per day
    mu: float               # per day
    sigma: float            # meters
    d_T: float              # meters
    dt: float = 1.0         # days
    r_critical: float = 1.0

    def __post_init__(self):
        if self.beta < 0 or self.mu < 0:
            raise ValueError(f"rates must be >= 0, got beta={self.beta}, mu={self.mu}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.d_T < 0:
            raise ValueError(f"d_T must be >= 0, got {self.d_T}")

    @classmethod
    def from_config(cls, config) -> "EpidemicParams":
        return cls(
            beta=config.beta,
            mu=config.mu,
            sigma=config.sigma,
            d_T=config.threshold,
            dt=config.dt,
            r_critical=config.r_critical,
        )


@dataclass
class CompartmentState:
    """Per-node S/I/R fractions; counts are fraction * cohort_size."""

    s: np.ndarray
    i: np.ndarray
    r: np.ndarray
    tick: int = 0
    cohort_size: float = 1.0
    clamped: int = 0        # nodes clamped on the step that produced this state

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        self.i = np.asarray(self.i, dtype=np.float64)
        self.r = np.asarray(self.r, dtype=np.float64)
        if not (len(self.s) == len(self.i) == len(self.r)):
            raise ValueError("s, i and r must have one entry per node")

    @classmethod
    def seeded(cls, n: int, infected: Sequence[int] = (), cohort_size: float = 1.0) -> "CompartmentState":
        """Fully susceptible population with the listed nodes fully infectious."""
        s = np.ones(n)
        i = np.zeros(n)
        idx = np.asarray(list(infected), dtype=np.int64)
        s[idx] = 0.0
        i[idx] = 1.0
        return cls(s=s, i=i, r=np.zeros(n), cohort_size=cohort_size)

    @property
    def n(self) -> int:
        return len(self.s)

    def totals(self):
        """Aggregate (S, I, R) in individuals."""
        c = self.cohort_size
        return c * float(np.sum(self.s)), c * float(np.sum(self.i)), c * float(np.sum(self.r))

    def conservation_error(self) -> float:
        return float(np.max(np.abs(self.s + self.i + self.r - 1.0))) if self.n else 0.0


def _coupling(state: CompartmentState, snapshot: ContactSnapshot, params: EpidemicParams, workers: int) -> np.ndarray:
    """Σ_j kernel(d_ij) i_j per node, summed in ascending neighbor id."""
    n = state.n
    target, neighbor, dist = snapshot.directed()
    if len(target) == 0:
        return np.zeros(n)
    weights = kernel(dist, params.sigma, params.d_T) * state.i[neighbor]

    if workers <= 1:
        return np.bincount(target, weights=weights, minlength=n)

    bounds = np.linspace(0, n, workers + 1).astype(np.int64)

    def _chunk(k: int) -> np.ndarray:
        lo_node, hi_node = bounds[k], bounds[k + 1]
        lo, hi = np.searchsorted(target, [lo_node, hi_node])
        return np.bincount(target[lo:hi] - lo_node, weights=weights[lo:hi], minlength=hi_node - lo_node)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_chunk, range(workers)))
    return np.concatenate(parts)


def _guard(s: np.ndarray, i: np.ndarray, r: np.ndarray, tick: int):
    """Reject unstable steps, then clamp negatives and renormalize the touched nodes."""
    for arr in (s, i, r):
        low = int(np.argmin(arr))
        if arr[low] < STABLE_LOW:
            raise IntegratorInstabilityError(tick, low, float(arr[low]))
        high = int(np.argmax(arr))
        if arr[high] > STABLE_HIGH:
            raise IntegratorInstabilityError(tick, high, float(arr[high]))

    negative = (s < 0) | (i < 0) | (r < 0)
    clamped = int(np.count_nonzero(negative))
    if clamped:
        for arr in (s, i, r):
            np.maximum(arr, 0.0, out=arr, where=negative)
        total = s + i + r
        s[negative] /= total[negative]
        i[negative] /= total[negative]
        r[negative] /= total[negative]
        logger.warning(f"Tick {tick}: clamped negative fractions on {clamped} nodes")
    return clamped


def step_network_sir(
    state: CompartmentState,
    snapshot: ContactSnapshot,
    k_mean: float,
    params: EpidemicParams,
    workers: int = 1,
) -> CompartmentState:
    """
    One explicit Euler step of the distance-modulated network SIR.

    force_i = beta <k> s_i Σ_j kernel(d_ij) i_j over the snapshot's pairs;
    s loses dt*force, i gains dt*(force - mu i), r gains dt*mu*i.
    """
    if snapshot.n != state.n:
        raise ValueError(f"snapshot has {snapshot.n} nodes, state has {state.n}")
    # Without pairs the coupling is zero and <k> never enters the step
    if params.beta > 0 and len(snapshot) > 0 and not k_mean > 0:
        raise ValueError(f"k_mean must be > 0 when beta > 0 and nodes are in contact, got {k_mean}")

    tick = state.tick + 1
    coupling = _coupling(state, snapshot, params, workers)
    force = params.beta * k_mean * state.s * coupling
    recovery = params.mu * state.i

    s = state.s - params.dt * force
    i = state.i + params.dt * (force - recovery)
    r = state.r + params.dt * recovery
    clamped = _guard(s, i, r, tick)
    return CompartmentState(s=s, i=i, r=r, tick=tick, cohort_size=state.cohort_size, clamped=clamped)


@dataclass
class TrajectoryRecord:
    """
    Aggregate S/I/R per tick plus the per-tick metric values.

    beta_critical is not the plain threshold of the tick's geometry: it is
    that threshold divided by S/N, i.e. the beta at which R_t = r0 * S/N
    reaches r_critical. It grows as susceptibles deplete even on a static
    network; +inf once S = 0.
    """

    n_nodes: int
    cohort_size: float = 1.0
    dt: float = 1.0
    area: Optional[float] = None
    params: Optional[EpidemicParams] = None
    ticks: List[int] = field(default_factory=list)
    S: List[float] = field(default_factory=list)
    I: List[float] = field(default_factory=list)
    R: List[float] = field(default_factory=list)
    k_mean: List[float] = field(default_factory=list)
    kernel_mass: List[float] = field(default_factory=list)     # (1/N) Σ_i Σ_j exp(-d_ij²/2σ²)
    r0: List[float] = field(default_factory=list)
    r_t: List[float] = field(default_factory=list)
    beta_critical: List[float] = field(default_factory=list)
    spreading_speed: List[float] = field(default_factory=list)
    clamp_events: int = 0

    def __len__(self) -> int:
        return len(self.ticks)

    def times(self) -> np.ndarray:
        return np.asarray(self.ticks, dtype=np.float64) * self.dt

    @property
    def population(self) -> float:
        return self.n_nodes * self.cohort_size

    def append(self, tick: int, totals, k_mean=math.nan, kernel_mass=math.nan, r0=math.nan, r_t=math.nan,
               beta_critical=math.nan) -> None:
        self.ticks.append(tick)
        self.S.append(totals[0])
        self.I.append(totals[1])
        self.R.append(totals[2])
        self.k_mean.append(k_mean)
        self.kernel_mass.append(kernel_mass)
        self.r0.append(r0)
        self.r_t.append(r_t)
        self.beta_critical.append(beta_critical)

    def to_frame(self) -> pd.DataFrame:
        speed = self.spreading_speed if len(self.spreading_speed) == len(self) else [math.nan] * len(self)
        return pd.DataFrame({
            "tick": self.ticks,
            "S": self.S,
            "I": self.I,
            "R": self.R,
            "k_mean": self.k_mean,
            "R_t": self.r_t,
            "beta_critical": self.beta_critical,
            "spreading_speed": speed,
        }, columns=TRAJECTORY_COLUMNS)

    def write_csv(self, path) -> None:
        """Header tick,S,I,R,k_mean,R_t,beta_critical,spreading_speed."""
        frame = self.to_frame()
        for col in ("S", "I", "R", "k_mean"):
            frame[col] = frame[col].map(lambda v: f"{v:.6f}")
        for col in ("R_t", "beta_critical", "spreading_speed"):
            frame[col] = frame[col].map(lambda v: f"{v:.6e}")
        frame.to_csv(path, index=False, lineterminator="\n")


class NetworkSIRSimulation:
    """
    Tick-serial driver: mobility, snapshot, <k>, compartment step, record.
    One instance owns its fleet, state and RNG stream.
    """

    def __init__(
        self,
        config,
        fleet: MobilityFleet,
        state: CompartmentState,
        params: EpidemicParams,
        rng: Optional[np.random.Generator] = None,
        workers: int = 1,
        snapshot_method: str = "auto",
        on_snapshot: Optional[Callable[[ContactSnapshot], None]] = None,
        on_tick: Optional[Callable[[float], None]] = None,
    ):
        if len(fleet) != state.n:
            raise ValueError(f"fleet has {len(fleet)} nodes, state has {state.n}")
        self.config = config
        self.fleet = fleet
        self.state = state
        self.params = params
        self.rng = rng if rng is not None else np.random.default_rng([config.seed, 1])
        self.workers = workers
        self.snapshot_method = snapshot_method
        self.on_snapshot = on_snapshot
        self.on_tick = on_tick
        self.record = TrajectoryRecord(
            n_nodes=state.n,
            cohort_size=state.cohort_size,
            dt=params.dt,
            area=config.area,
            params=params,
        )
        self._warned_undefined = False
        self.k_mean, self._mass = self._geometry()
        self._observe()

    def _geometry(self):
        """<k> and kernel mass of the current positions from one blocked pass."""
        sums = pairwise_row_sums(self.fleet.positions, sigma=self.params.sigma, workers=self.workers)
        _, k_mean = degree_from_row_sums(sums.distance, self.config.area)
        return k_mean, float(np.sum(sums.kernel)) / len(self.fleet)

    def _observe(self) -> None:
        """Record aggregates and metrics for the current tick."""
        k_mean, mass = self.k_mean, self._mass
        totals = self.state.totals()
        susceptible = totals[0] / self.record.population

        r0 = beta_c = r_t = math.nan
        p = self.params
        if p.mu > 0 and k_mean > 0:
            r0 = r0_from_mass(p.beta, p.mu, p.sigma, p.d_T, k_mean, mass)
            r_t = r0 * susceptible
            try:
                base = beta_critical_from_mass(p.mu, p.sigma, p.d_T, k_mean, mass, p.r_critical)
                beta_c = base / susceptible if susceptible > 0 else math.inf
            except NoFiniteThresholdError:
                beta_c = math.inf
        elif not self._warned_undefined:
            logger.warning("R_t and beta_critical are undefined when mu = 0 or <k> = 0; recording NaN")
            self._warned_undefined = True

        self.record.append(self.state.tick, totals, k_mean, mass, r0, r_t, beta_c)

    def step(self) -> CompartmentState:
        started = time.perf_counter()
        tick = self.state.tick + 1
        self.fleet = step_mobility(self.fleet, self.config, self.rng)
        snapshot = build_snapshot(self.fleet.positions, self.params.d_T, tick=tick, method=self.snapshot_method)
        if self.on_snapshot is not None:
            self.on_snapshot(snapshot)

        self.k_mean, self._mass = self._geometry()
        self.state = step_network_sir(self.state, snapshot, self.k_mean, self.params, workers=self.workers)
        self.record.clamp_events += self.state.clamped
        self._observe()

        if self.on_tick is not None:
            self.on_tick(time.perf_counter() - started)
        return self.state

    def run(self, horizon: int) -> TrajectoryRecord:
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        for _ in range(horizon):
            self.step()
        self.finish()
        return self.record

    def finish(self) -> TrajectoryRecord:
        if len(self.record) >= 2:
            self.record.spreading_speed = list(spreading_speed(self.record, self.config.area))
        return self.record


def run_network_sir(
    init: CompartmentState,
    fleet: MobilityFleet,
    config,
    params: EpidemicParams,
    horizon: int,
    rng: Optional[np.random.Generator] = None,
    workers: int = 1,
    snapshot_method: str = "auto",
    on_snapshot: Optional[Callable[[ContactSnapshot], None]] = None,
    on_tick: Optional[Callable[[float], None]] = None,
) -> TrajectoryRecord:
    """
    Run the network SIR for `horizon` ticks.

    Args:
        init: per-node compartments at tick 0
        fleet: mobility state at tick 0
        config: ScenarioConfig (area, mobility ranges, seed)
        params: epidemic parameters
        horizon: number of ticks (days)
        rng: mobility stream; defaults to one derived from config.seed

    Returns:
        TrajectoryRecord with horizon + 1 rows
    """
    sim = NetworkSIRSimulation(
        config, fleet, init, params,
        rng=rng, workers=workers, snapshot_method=snapshot_method,
        on_snapshot=on_snapshot, on_tick=on_tick,
    )
    record = sim.run(horizon)
    logger.info(
        f"Network SIR finished: {horizon} ticks, final S={record.S[-1]:.1f} I={record.I[-1]:.1f} R={record.R[-1]:.1f}"
    )
    return record


def _classical_derivative(y: np.ndarray, beta: float, mu: float) -> np.ndarray:
    s, i, _ = y
    return np.array([-beta * s * i, beta * s * i - mu * i, mu * i])


def run_classical_sir(
    s0: float,
    i0: float,
    r0: float,
    beta: float,
    mu: float,
    dt: float,
    horizon: float,
) -> TrajectoryRecord:
    """Well-mixed SIR fractions integrated with classical RK4, one row per step."""
    if beta < 0 or mu < 0:
        raise ValueError(f"rates must be >= 0, got beta={beta}, mu={mu}")
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if abs(s0 + i0 + r0 - 1.0) > 1e-9:
        raise ValueError(f"initial fractions must sum to 1, got {s0 + i0 + r0}")

    steps = int(round(horizon / dt))
    record = TrajectoryRecord(n_nodes=1, dt=dt)
    y = np.array([s0, i0, r0], dtype=np.float64)
    record.append(0, tuple(y))
    for k in range(1, steps + 1):
        k1 = _classical_derivative(y, beta, mu)
        k2 = _classical_derivative(y + k1 * dt / 2.0, beta, mu)
        k3 = _classical_derivative(y + k2 * dt / 2.0, beta, mu)
        k4 = _classical_derivative(y + k3 * dt, beta, mu)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        record.append(k, tuple(y))
    return record
