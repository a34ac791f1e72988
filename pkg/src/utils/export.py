import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from src import __version__
from src.models.network import DegreeHistogram

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(payload: Any, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=False)
        f.write("\n")


def write_histogram_csv(histogram: DegreeHistogram, path) -> None:
    """bin_lo,bin_hi,probability; probabilities keep enough digits to sum to 1."""
    frame = pd.DataFrame(histogram.rows(), columns=["bin_lo", "bin_hi", "probability"])
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


def comparison_frame(
    empirical: Sequence[Tuple[int, float]],
    model: Sequence[Tuple[int, float]],
) -> pd.DataFrame:
    """Outer join of two (day, value) series on the day index; gaps stay empty."""
    left = pd.DataFrame(list(empirical), columns=["day", "rt_empirical"]).set_index("day")
    right = pd.DataFrame(list(model), columns=["day", "rt_model"]).set_index("day")
    joined = left.join(right, how="outer").sort_index()
    joined.index = joined.index.astype("int64")
    return joined.reset_index()


def write_comparison_csv(frame: pd.DataFrame, path) -> None:
    frame.to_csv(path, index=False, float_format="%.6f", na_rep="", lineterminator="\n")


def write_sweep_csv(rows: Sequence[Tuple[int, float, float]], path) -> None:
    """tick,radius,beta_critical rows, ordered by radius then tick."""
    frame = pd.DataFrame(list(rows), columns=["tick", "radius", "beta_critical"])
    frame = frame.sort_values(["radius", "tick"], kind="mergesort")
    frame["beta_critical"] = frame["beta_critical"].map(lambda v: f"{v:.6e}")
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


@dataclass
class RunManifest:
    """What a run produced and enough to reproduce it."""

    command: str
    config_hash: Optional[str]
    seed: Optional[int]
    config: Optional[Dict[str, Any]] = None
    version: str = __version__
    outputs: List[Dict[str, str]] = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    performance: Dict[str, float] = field(default_factory=dict)
    created_at: str = field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))

    def add_output(self, path, root=None) -> None:
        """Checksum an output; the file must already exist. Paths are stored relative to root."""
        if not os.path.isfile(path):
            raise FileNotFoundError(f"output listed in manifest does not exist: {path}")
        name = os.path.relpath(path, root) if root is not None else os.path.basename(path)
        self.outputs.append({"path": name.replace(os.sep, "/"), "sha256": file_sha256(path)})

    def write(self, out_dir) -> str:
        path = os.path.join(out_dir, MANIFEST_NAME)
        write_json(asdict(self), path)
        logger.info(f"Wrote manifest with {len(self.outputs)} outputs to {path}")
        return path
