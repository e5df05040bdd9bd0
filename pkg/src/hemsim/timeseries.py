"""Regular 15-minute time series and CSV ingestion.

Input files are two-column CSVs with header ``timestamp,value``. Timestamps
are ISO-8601 with a UTC offset. Load and PV values are in watts and get
averaged onto the 15-minute grid; prices are in EUR/kWh and are step-held.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np
import pandas as pd

from hemsim.assets import EvSession

STEP = timedelta(minutes=15)
STEP_H = 0.25


class DataGapError(ValueError):
    """A requested instant or window is not covered by the series."""


@dataclass
class Series:
    """Values on a dense, regular time grid. ``values[i]`` holds the interval
    ``[start + i*step, start + (i+1)*step)``."""

    start: datetime
    step: timedelta
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.start.tzinfo is None:
            raise ValueError("series start must be timezone-aware")
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> datetime:
        return self.start + len(self.values) * self.step

    def index_of(self, t: datetime) -> int:
        offset = (t - self.start) / self.step
        idx = int(offset)
        if offset != idx:
            raise DataGapError(f"{t.isoformat()} is not aligned to the {self.step} grid")
        if not 0 <= idx < len(self.values):
            raise DataGapError(
                f"{t.isoformat()} outside series range "
                f"[{self.start.isoformat()}, {self.end.isoformat()})"
            )
        return idx

    def value_at(self, t: datetime) -> float:
        return float(self.values[self.index_of(t)])

    def window(self, start: datetime, n: int) -> np.ndarray:
        """The ``n`` values from ``start`` onwards; raises on any gap."""
        i = self.index_of(start)
        if i + n > len(self.values):
            raise DataGapError(
                f"window of {n} steps from {start.isoformat()} exceeds series end "
                f"{self.end.isoformat()}"
            )
        return self.values[i : i + n]

    def covers(self, start: datetime, end: datetime) -> bool:
        return self.start <= start and end <= self.end

    def shifted(self, delta: timedelta) -> "Series":
        return Series(self.start + delta, self.step, self.values.copy())


def _read_frame(path: str) -> pd.DataFrame:
    df = pd.read_csv(path)
    expected = ["timestamp", "value"]
    if list(df.columns[:2]) != expected:
        raise ValueError(f"{path}: expected header {expected}, got {list(df.columns)}")
    ts = pd.to_datetime(df["timestamp"], utc=True, format="ISO8601")
    if not ts.is_monotonic_increasing or ts.duplicated().any():
        bad = ts[~ts.diff().fillna(pd.Timedelta(seconds=1)).gt(pd.Timedelta(0))]
        where = bad.iloc[0].isoformat() if len(bad) else "?"
        raise ValueError(f"{path}: timestamps not strictly increasing (near {where})")
    df = df.assign(timestamp=ts)
    return df


def _check_gaps(path: str, ts: pd.Series, native: pd.Timedelta) -> None:
    # One missing native sample is tolerated, larger holes are an error.
    diffs = ts.diff().dropna()
    too_big = diffs > 2 * native
    if too_big.any():
        pos = diffs.index[too_big][0]
        prev = ts.loc[pos - 1]
        nxt = ts.loc[pos]
        raise ValueError(
            f"{path}: data gap from {prev.isoformat()} to {nxt.isoformat()} "
            f"(native step {native})"
        )


def load_timeseries(path: str, kind: str, *, shift_days: int = 0) -> Series:
    """Load a load/pv/price CSV onto the 15-minute grid.

    ``shift_days`` moves every timestamp forward by whole days; used to align
    weekdays between a historical dataset and the experiment period.
    """
    if kind not in ("load", "pv", "price"):
        raise ValueError(f"kind must be load|pv|price, got {kind!r}")
    df = _read_frame(path)
    if len(df) < 2:
        raise ValueError(f"{path}: need at least two samples")
    ts = df["timestamp"]
    native = ts.diff().dropna().min()
    _check_gaps(path, ts, native)

    if shift_days:
        ts = ts + pd.Timedelta(days=shift_days)
        df = df.assign(timestamp=ts)

    df = df.set_index("timestamp")
    if kind == "price":
        # Hourly (or coarser) prices are held constant over the 15-min steps.
        held = df["value"].resample("15min").ffill()
        values = held.to_numpy(dtype=float)
        start = held.index[0].to_pydatetime()
    else:
        bucket = df["value"].resample("15min").mean() / 1000.0  # W -> kW
        if bucket.isna().any():
            missing = bucket.index[bucket.isna()][0]
            raise ValueError(f"{path}: no samples in 15-min bucket starting {missing.isoformat()}")
        values = bucket.to_numpy(dtype=float)
        start = bucket.index[0].to_pydatetime()
    return Series(start, STEP, values)


def load_sessions(path: str) -> list[EvSession]:
    """Read an EV session CSV (``arrival,departure,soc_start,soc_goal``)."""
    sessions: list[EvSession] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"arrival", "departure", "soc_start", "soc_goal"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected header with columns {sorted(expected)}")
        for i, row in enumerate(reader, start=2):
            try:
                sessions.append(
                    EvSession(
                        arrival=datetime.fromisoformat(row["arrival"]),
                        departure=datetime.fromisoformat(row["departure"]),
                        soc_start=float(row["soc_start"]),
                        soc_goal=float(row["soc_goal"]),
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{i}: {exc}") from exc
            if sessions[-1].arrival.tzinfo is None:
                raise ValueError(f"{path}:{i}: timestamps must carry a UTC offset")
    sessions.sort(key=lambda s: s.arrival)
    for prev, nxt in zip(sessions, sessions[1:]):
        if nxt.arrival < prev.departure:
            raise ValueError(
                f"{path}: overlapping sessions, {prev.departure.isoformat()} > "
                f"{nxt.arrival.isoformat()}"
            )
    return sessions


def save_sessions(path: str, sessions: list[EvSession]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arrival", "departure", "soc_start", "soc_goal"])
        for s in sessions:
            writer.writerow([s.arrival.isoformat(), s.departure.isoformat(), s.soc_start, s.soc_goal])
