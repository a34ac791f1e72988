import hashlib
import json
import logging
import os
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from src.errors import ConfigError

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "GNMN_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "output"

SNAPSHOT_METHODS = ("auto", "tree", "brute")


@dataclass
class ScenarioConfig:
    """
    Flat scenario description. Defaults follow the Brightkite parameter table
    (25 km square, r = 2 m, 1-50 m/s, 2-115 rest days) and the sampled
    Maharashtra cohort (7724 people, 3944 of them migrants).
    """

    side_length: float = 25000.0            # a, meters
    connectivity_radius: float = 2.0        # r, meters
    d_T: Optional[float] = None             # threshold distance; None means r
    sigma: float = 2.0                      # kernel dispersion, meters
    v_min: float = 1.0                      # m/s
    v_max: float = 50.0
    t_rest_min: int = 2                     # days
    t_rest_max: int = 115
    travel_seconds_per_day: float = 3600.0
    beta: float = 0.3                       # per day
    mu: float = 0.1                         # per day
    horizon: int = 100                      # days
    n_static: int = 3780
    n_migrated: int = 3944
    seed: int = 42
    r_critical: float = 1.0
    dt: float = 1.0
    cohort_size: float = 1.0                # individuals represented by one node
    seed_migrated_infected: bool = True
    infected_fraction: float = 0.01
    workers: int = 1
    snapshot_method: str = "auto"
    histogram_bin_width: int = 10
    sweep_radii: List[float] = field(default_factory=lambda: [1.0, 2.0, 5.0, 10.0])
    # origin label -> migrated nodes; empty means one unlabelled cohort
    migrant_origins: Dict[str, int] = field(default_factory=dict)

    @property
    def threshold(self) -> float:
        """Resolved d_T."""
        return self.connectivity_radius if self.d_T is None else self.d_T

    @property
    def area(self) -> float:
        return self.side_length * self.side_length

    @property
    def n_nodes(self) -> int:
        return self.n_static + self.n_migrated

    def validate(self) -> "ScenarioConfig":
        """Check every invariant; raise ConfigError naming the first offending field."""
        for name in ("side_length", "connectivity_radius", "sigma", "travel_seconds_per_day", "dt", "cohort_size"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.threshold < 0:
            raise ConfigError(f"d_T must be >= 0, got {self.threshold!r}")
        if self.v_min < 0 or self.v_min > self.v_max:
            raise ConfigError(f"velocity range inverted or negative: [{self.v_min}, {self.v_max}]")
        if self.t_rest_min < 0 or self.t_rest_min > self.t_rest_max:
            raise ConfigError(f"rest range inverted or negative: [{self.t_rest_min}, {self.t_rest_max}]")
        if self.beta < 0 or self.mu < 0:
            raise ConfigError(f"rates must be >= 0, got beta={self.beta}, mu={self.mu}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1 day, got {self.horizon}")
        if self.n_static < 0 or self.n_migrated < 0 or self.n_nodes < 1:
            raise ConfigError(f"need at least one node, got n_static={self.n_static}, n_migrated={self.n_migrated}")
        if not 0.0 <= self.infected_fraction <= 1.0:
            raise ConfigError(f"infected_fraction must lie in [0, 1], got {self.infected_fraction}")
        if self.r_critical <= 0:
            raise ConfigError(f"r_critical must be > 0, got {self.r_critical}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.snapshot_method not in SNAPSHOT_METHODS:
            raise ConfigError(f"snapshot_method must be one of {SNAPSHOT_METHODS}, got {self.snapshot_method!r}")
        if self.histogram_bin_width < 1:
            raise ConfigError(f"histogram_bin_width must be >= 1, got {self.histogram_bin_width}")
        if not self.sweep_radii or any(r < 0 for r in self.sweep_radii):
            raise ConfigError(f"sweep_radii must be a non-empty list of lengths >= 0, got {self.sweep_radii}")
        if self.migrant_origins:
            slugs = [origin_slug(label) for label in self.migrant_origins]
            if any(not slug for slug in slugs):
                raise ConfigError(f"migrant_origins labels need a letter or digit, got {list(self.migrant_origins)}")
            if len(set(slugs)) != len(slugs):
                raise ConfigError(f"migrant_origins labels collide once lowercased: {sorted(self.migrant_origins)}")
            if any(count < 0 for count in self.migrant_origins.values()):
                raise ConfigError(f"migrant_origins counts must be >= 0, got {self.migrant_origins}")
            total = sum(self.migrant_origins.values())
            if total != self.n_migrated:
                raise ConfigError(f"migrant_origins sum to {total}, expected n_migrated={self.n_migrated}")
        return self

    def origin_ranges(self) -> Dict[str, range]:
        """
        Node id range of every labelled migrant cohort. Labels are laid out in
        sorted order after the static cohort, so the layout does not depend on
        the key order of the config file.
        """
        ranges = {}
        start = self.n_static
        for label in sorted(self.migrant_origins):
            stop = start + self.migrant_origins[label]
            ranges[label] = range(start, stop)
            start = stop
        return ranges

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        """sha256 over the canonical JSON form; worker count is excluded since it never changes results."""
        payload = self.to_dict()
        payload.pop("workers")
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def replace(self, **changes: Any) -> "ScenarioConfig":
        data = self.to_dict()
        data.update(changes)
        return config_from_dict(data)


_INT_FIELDS = {"t_rest_min", "t_rest_max", "horizon", "n_static", "n_migrated", "seed", "workers", "histogram_bin_width"}
_BOOL_FIELDS = {"seed_migrated_infected"}
_STR_FIELDS = {"snapshot_method"}


def _coerce(name: str, value: Any) -> Any:
    if name in _BOOL_FIELDS:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false, got {value!r}")
        return value
    if name in _STR_FIELDS:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}")
        return value
    if name == "sweep_radii":
        if not isinstance(value, list) or not all(_is_number(v) for v in value):
            raise ConfigError(f"sweep_radii must be a list of numbers, got {value!r}")
        return [float(v) for v in value]
    if name == "migrant_origins":
        if not isinstance(value, dict) or not all(
            isinstance(k, str) and _is_number(v) and float(v).is_integer() for k, v in value.items()
        ):
            raise ConfigError(f"migrant_origins must map labels to integer node counts, got {value!r}")
        return {k: int(v) for k, v in value.items()}
    if name == "d_T" and value is None:
        return None
    if not _is_number(value):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if name in _INT_FIELDS:
        if float(value) != int(value):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def origin_slug(label: str) -> str:
    """File-name form of an origin label: lowercase, runs of other characters become '_'."""
    return re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_")


def config_from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    """Build and validate a config from a flat mapping; unknown keys are rejected."""
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {name: _coerce(name, value) for name, value in data.items()}
    return ScenarioConfig(**kwargs).validate()


def load_config(path: Optional[str], seed: Optional[int] = None) -> ScenarioConfig:
    """
    Load a flat JSON scenario file.

    Args:
        path: JSON file; None yields the defaults
        seed: optional override for the file's seed

    Returns:
        Validated ScenarioConfig
    """
    data: Dict[str, Any] = {}
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {str(e)}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a single JSON object")
    if seed is not None:
        data["seed"] = seed
    config = config_from_dict(data)
    logger.info(f"Loaded scenario config (hash {config.config_hash()[:12]})")
    return config


def default_output_dir() -> str:
    """Output directory from GNMN_OUTPUT_DIR (a .env file is honoured), else 'output'."""
    load_dotenv()
    return os.getenv(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR)
