import logging
import math
import re
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd

from src.errors import (
    CellError,
    HeaderError,
    InsufficientDataError,
    InvariantViolationError,
    MissingFileError,
)

logger = logging.getLogger(__name__)

POPULATION_HEADER = ["region", "total_population", "migrated_population"]
CASES_HEADER = ["date", "confirmed", "recovered"]

_INTEGER = re.compile(r"^[0-9]+$")


def round_half_away(x: float) -> int:
    """Nearest integer, ties away from zero (Python's round() ties to even)."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


@dataclass(frozen=True)
class SampleSpec:
    """
    Sampling precision. e = 0.005 is what reproduces the published sample of
    7724; e = 0.01 (the "1%" margin) gives 1931.
    """

    z: float = 2.576        # 99% confidence
    p: float = 0.03
    e: float = 0.005

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError(f"z must be > 0, got {self.z}")
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if not 0 < self.e < 1:
            raise ValueError(f"e must lie in (0, 1), got {self.e}")

    def to_dict(self) -> Dict[str, float]:
        return {"z": self.z, "p": self.p, "e": self.e}


@dataclass(frozen=True)
class PopulationRecord:
    region: str
    total: int
    migrated: int
    sampled_total: int = 0
    sampled_migrated: int = 0

    def check(self) -> None:
        if not 0 <= self.migrated <= self.total:
            raise ValueError(f"{self.region}: migrated {self.migrated} outside [0, total {self.total}]")
        if not 0 <= self.sampled_total <= self.total:
            raise ValueError(f"{self.region}: sampled_total {self.sampled_total} outside [0, {self.total}]")
        if not 0 <= self.sampled_migrated <= self.sampled_total:
            raise ValueError(
                f"{self.region}: sampled_migrated {self.sampled_migrated} outside [0, {self.sampled_total}]"
            )

    @property
    def sampled_static(self) -> int:
        return self.sampled_total - self.sampled_migrated


@dataclass
class CaseSeries:
    region: str
    entries: List[Tuple[date, float, float]] = field(default_factory=list)  # (date, confirmed, recovered)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def dates(self) -> List[date]:
        return [d for d, _, _ in self.entries]

    @property
    def confirmed(self) -> List[float]:
        return [c for _, c, _ in self.entries]


def sample_size(N: int, spec: SampleSpec = SampleSpec()) -> int:
    """
    Finite-population sample size.

    n0 = z² p (1-p) / e², n = n0 / (1 + n0/N), rounded and clamped to [1, N].
    """
    if N < 1:
        raise ValueError(f"population must be >= 1, got {N}")
    n0 = spec.z * spec.z * spec.p * (1.0 - spec.p) / (spec.e * spec.e)
    n = n0 / (1.0 + n0 / N)
    return min(max(round_half_away(n), 1), N)


def allocate_migrated_sample(record: PopulationRecord) -> int:
    """Migrated share of the sample, proportional to the census migration share."""
    if record.total == 0:
        return 0
    return round_half_away(record.sampled_total * record.migrated / record.total)


def sample_record(record: PopulationRecord, spec: SampleSpec = SampleSpec()) -> PopulationRecord:
    """Record with sampled_total and sampled_migrated filled in."""
    sampled_total = sample_size(record.total, spec) if record.total >= 1 else 0
    sampled = replace(record, sampled_total=sampled_total)
    return replace(sampled, sampled_migrated=allocate_migrated_sample(sampled))


def build_sample_report(records: List[PopulationRecord], spec: SampleSpec = SampleSpec()) -> List[Dict]:
    report = []
    for record in records:
        sampled = sample_record(record, spec)
        report.append({
            "region": sampled.region,
            "total": sampled.total,
            "sampled_total": sampled.sampled_total,
            "migrated": sampled.migrated,
            "sampled_migrated": sampled.sampled_migrated,
            "spec": spec.to_dict(),
        })
    return report


def _read_frame(path, expected: List[str]) -> pd.DataFrame:
    csv_path = Path(path)
    if not csv_path.is_file():
        raise MissingFileError("file not found", path=str(path))
    try:
        frame = pd.read_csv(
            csv_path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise HeaderError(f"missing header, expected {','.join(expected)}", path=str(path), line=1)
    except pd.errors.ParserError as e:
        raise CellError(f"malformed row: {str(e)}", path=str(path))

    header = [str(c).strip() for c in frame.columns]
    if header != expected:
        raise HeaderError(
            f"bad header {','.join(header)!r}, expected {','.join(expected)!r}", path=str(path), line=1
        )
    frame.columns = expected
    return frame


def _rows(frame: pd.DataFrame):
    """(line number, stripped cells) for every non-blank data row."""
    for idx, values in enumerate(frame.itertuples(index=False, name=None)):
        cells = [str(v).strip() for v in values]
        if all(c == "" for c in cells):
            continue
        yield idx + 2, cells


def _parse_count(value: str, column: str, path, line: int) -> int:
    if not _INTEGER.match(value):
        raise CellError(f"{column} is not a non-negative integer: {value!r}", path=str(path), line=line)
    return int(value)


def _parse_rate(value: str, column: str, path, line: int) -> float:
    try:
        number = float(value)
    except ValueError:
        raise CellError(f"{column} is not a number: {value!r}", path=str(path), line=line)
    if not math.isfinite(number):
        raise CellError(f"{column} is not finite: {value!r}", path=str(path), line=line)
    if number < 0:
        raise InvariantViolationError(f"{column} must be >= 0, got {value}", path=str(path), line=line)
    return number


def load_population_csv(path) -> List[PopulationRecord]:
    """
    Parse a census CSV with header region,total_population,migrated_population.

    Returns:
        One record per row, sampled fields left at 0
    """
    frame = _read_frame(path, POPULATION_HEADER)
    records = []
    for line, (region, total_raw, migrated_raw) in _rows(frame):
        if not region:
            raise CellError("region is empty", path=str(path), line=line)
        total = _parse_count(total_raw, "total_population", path, line)
        migrated = _parse_count(migrated_raw, "migrated_population", path, line)
        if migrated > total:
            raise InvariantViolationError(
                f"row {region!r}: migrated_population {migrated} exceeds total_population {total}",
                path=str(path),
                line=line,
            )
        records.append(PopulationRecord(region=region, total=total, migrated=migrated))
    logger.info(f"Loaded {len(records)} population records from {path}")
    return records


def load_cases_csv(path, region: Optional[str] = None) -> CaseSeries:
    """Parse a per-region case CSV (date,confirmed,recovered); region defaults to the file stem."""
    frame = _read_frame(path, CASES_HEADER)
    series = CaseSeries(region=region or Path(path).stem)
    previous: Optional[date] = None
    for line, (raw_date, confirmed_raw, recovered_raw) in _rows(frame):
        try:
            day = date.fromisoformat(raw_date)
        except ValueError:
            raise CellError(f"date is not ISO-8601: {raw_date!r}", path=str(path), line=line)
        if previous is not None and day <= previous:
            raise InvariantViolationError(
                f"dates must be strictly increasing, {day.isoformat()} follows {previous.isoformat()}",
                path=str(path),
                line=line,
            )
        confirmed = _parse_rate(confirmed_raw, "confirmed", path, line)
        recovered = _parse_rate(recovered_raw, "recovered", path, line)
        series.entries.append((day, confirmed, recovered))
        previous = day
    logger.info(f"Loaded {len(series)} days of cases for {series.region}")
    return series


def _format_count(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def write_population_csv(records: List[PopulationRecord], path) -> None:
    frame = pd.DataFrame(
        [(r.region, r.total, r.migrated) for r in records],
        columns=POPULATION_HEADER,
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def write_cases_csv(series: CaseSeries, path) -> None:
    frame = pd.DataFrame(
        [(d.isoformat(), _format_count(c), _format_count(r)) for d, c, r in series.entries],
        columns=CASES_HEADER,
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def empirical_rt(series: CaseSeries, window: int) -> List[Tuple[date, float]]:
    """
    Window-ratio reproduction number from daily confirmed cases.

    R_t(d) = Σ confirmed over (d, d+w] / Σ confirmed over (d-w, d], kept only
    where both windows lie inside the series and the denominator is positive.

    Args:
        series: daily case counts
        window: window length w in days

    Returns:
        (date, R_t) pairs in date order; undefined days are omitted
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if len(series) < 2 * window:
        raise InsufficientDataError(
            f"{series.region}: {len(series)} days of cases cannot cover two windows of {window} days"
        )
    confirmed = pd.Series(series.confirmed, index=pd.Index(series.dates), dtype="float64")
    backward = confirmed.rolling(window).sum()
    forward = backward.shift(-window)
    ratio = forward / backward
    defined = backward.notna() & forward.notna() & (backward > 0)
    return [(day, float(value)) for day, value in ratio[defined].items()]
