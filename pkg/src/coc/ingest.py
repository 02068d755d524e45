"""Airline on-time pipeline: parse, filter, pick destination centres, sample, build the design.

Input follows the ASA Data Expo 2009 CSV schema; only ``ArrDelay, Cancelled,
CRSArrTime, Distance, DayOfWeek, Month, Dest`` are read.  The response is
``1{ArrDelay >= 15}`` and the design holds Distance, DayOfWeek dummies (reference
1), Month dummies (reference 1) and scheduled-arrival-hour dummies (reference
0-5), 22 columns plus an optional leading intercept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ValidationError
from .models import Dataset
from .rng import stream

COLUMNS = ("ArrDelay", "Cancelled", "CRSArrTime", "Distance", "DayOfWeek", "Month", "Dest")
DELAY_THRESHOLD = 15
HOUR_BINS = ((0, 5), (6, 8), (9, 14), (15, 21), (22, 24))
HOUR_LABELS = ("hour_0_5", "hour_6_8", "hour_9_14", "hour_15_21", "hour_22_24")
DESIGN_COLUMNS = (
    ["Distance"]
    + [f"dow_{d}" for d in range(2, 8)]
    + [f"month_{m}" for m in range(2, 13)]
    + list(HOUR_LABELS[1:])
)


@dataclass
class IngestReport:
    rows_read: int = 0
    malformed: int = 0
    cancelled: int = 0
    missing_delay: int = 0
    usable: int = 0
    destinations: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "malformed": self.malformed,
            "cancelled": self.cancelled,
            "missing_delay": self.missing_delay,
            "usable": self.usable,
            "destinations": dict(sorted(self.destinations.items())),
        }


def fixture_path() -> Path:
    """The bundled 2,000-row synthetic file in the full 29-column schema."""
    return Path(str(resources.files("coc") / "data" / "airline_fixture.csv"))


def hour_bin(crs_arr_time) -> np.ndarray:
    """Index into ``HOUR_BINS`` for HHMM times; 2400 falls in the last bin."""
    t = np.asarray(crs_arr_time)
    hour = t // 100
    if np.any((t < 0) | (t > 2400) | (t % 100 >= 60)):
        raise ValidationError("scheduled arrival time outside 0000..2400")
    edges = np.array([hi for _, hi in HOUR_BINS[:-1]])
    return np.searchsorted(edges, hour, side="left")


def read_flights(path, report: IngestReport | None = None) -> pd.DataFrame:
    """Read the consumed columns; malformed rows are counted in ``report`` and dropped."""
    report = report if report is not None else IngestReport()
    try:
        raw = pd.read_csv(path, usecols=list(COLUMNS), dtype=str, keep_default_na=False)
    except (OSError, ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ValidationError(f"{path}: cannot read flights: {exc}") from exc
    report.rows_read += len(raw)
    frame = pd.DataFrame({"Dest": raw["Dest"].str.strip()})
    delay = raw["ArrDelay"].str.strip()
    frame["ArrDelay"] = pd.to_numeric(delay.where(delay != "NA", ""), errors="coerce")
    bad = delay.ne("NA") & delay.ne("") & frame["ArrDelay"].isna()
    for col in ("Cancelled", "CRSArrTime", "Distance", "DayOfWeek", "Month"):
        frame[col] = pd.to_numeric(raw[col].str.strip(), errors="coerce")
        bad |= frame[col].isna()
    t = frame["CRSArrTime"]
    bad |= ~frame["DayOfWeek"].between(1, 7) | ~frame["Month"].between(1, 12)
    bad |= ~t.between(0, 2400) | (t % 100 >= 60) | ~frame["Cancelled"].isin([0, 1])
    bad |= frame["Dest"].eq("") | (frame["Distance"] < 0)
    report.malformed += int(bad.sum())
    frame = frame.loc[~bad].copy()
    for col in ("Cancelled", "CRSArrTime", "DayOfWeek", "Month"):
        frame[col] = frame[col].astype(np.int64)
    return frame.reset_index(drop=True)


def filter_usable(frame: pd.DataFrame, report: IngestReport | None = None) -> pd.DataFrame:
    """Keep flights that were not cancelled and have an arrival delay."""
    cancelled = frame["Cancelled"] == 1
    missing = frame["ArrDelay"].isna() & ~cancelled
    keep = ~cancelled & ~missing
    if report is not None:
        report.cancelled += int(cancelled.sum())
        report.missing_delay += int(missing.sum())
        report.usable += int(keep.sum())
    return frame.loc[keep].reset_index(drop=True)


def select_and_sample(
    frame: pd.DataFrame,
    min_flights: int = 100_000,
    sample_size: int = 100_000,
    seed: int = 0,
    report: IngestReport | None = None,
) -> dict[str, pd.DataFrame]:
    """Destinations with at least ``max(min_flights, sample_size)`` usable flights, each downsampled.

    The sample for destination ``d`` is drawn without replacement from
    ``stream(seed, "ingest", d)`` and kept in file order.
    """
    if sample_size < 1 or min_flights < 1:
        raise ValidationError("min_flights and sample_size must be positive")
    counts = frame["Dest"].value_counts()
    need = max(min_flights, sample_size)
    out = {}
    for dest in sorted(counts.index[counts >= need]):
        rows = np.flatnonzero(frame["Dest"].to_numpy() == dest)
        pick = stream(seed, "ingest", str(dest)).choice(rows.shape[0], size=sample_size, replace=False)
        out[str(dest)] = frame.iloc[rows[np.sort(pick)]].reset_index(drop=True)
        if report is not None:
            report.destinations[str(dest)] = int(counts[dest])
    return out


def build_design(frame: pd.DataFrame, intercept: bool = True) -> tuple[Dataset, list[str]]:
    """Response and the 22-column design (plus a leading intercept if requested)."""
    if len(frame) == 0:
        raise ValidationError("no rows to build a design from")
    if frame["ArrDelay"].isna().any():
        raise ValidationError("build_design needs usable rows (arrival delay present)")
    n = len(frame)
    y = (frame["ArrDelay"].to_numpy(dtype=float) >= DELAY_THRESHOLD).astype(float)
    cols = [frame["Distance"].to_numpy(dtype=float)]
    dow = frame["DayOfWeek"].to_numpy()
    cols += [(dow == d).astype(float) for d in range(2, 8)]
    month = frame["Month"].to_numpy()
    cols += [(month == m).astype(float) for m in range(2, 13)]
    bins = hour_bin(frame["CRSArrTime"].to_numpy())
    cols += [(bins == b).astype(float) for b in range(1, len(HOUR_BINS))]
    names = list(DESIGN_COLUMNS)
    if intercept:
        cols.insert(0, np.ones(n))
        names.insert(0, "intercept")
    return Dataset(np.column_stack(cols), y), names


def delay_rates(centres: dict[str, pd.DataFrame]) -> dict[str, float]:
    """Share of flights arriving at least 15 minutes late, per destination."""
    return {d: float(np.mean(f["ArrDelay"].to_numpy() >= DELAY_THRESHOLD)) for d, f in centres.items()}


def load_centres(
    path,
    min_flights: int = 100_000,
    sample_size: int = 100_000,
    seed: int = 0,
) -> tuple[dict[str, pd.DataFrame], IngestReport]:
    """Read, filter, select and sample in one call."""
    report = IngestReport()
    frame = filter_usable(read_flights(path, report), report)
    return select_and_sample(frame, min_flights, sample_size, seed, report), report
