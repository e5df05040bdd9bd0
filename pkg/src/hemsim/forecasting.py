"""Forecasters feeding the predictive controller.

Load and PV use a seasonal-naive (24 h persistence) baseline behind the same
interface a learned model would implement. EV sessions are predicted with a
k-nearest-neighbors lookup over completed sessions using cosine similarity;
the hour of day is embedded on the unit circle so 23:00 and 00:00 stay close.
A perfect-foresight variant backs the benchmark controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from hemsim.assets import EvParams, EvSession
from hemsim.timeseries import STEP, DataGapError, Series


@dataclass(frozen=True)
class Forecast:
    start: datetime
    values: np.ndarray  # kW per 15-min step

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SessionForecast:
    departure: datetime
    final_soc: float


@dataclass(frozen=True)
class SessionRecord:
    """A completed charging session reduced to kNN features and targets."""

    soc_start: float
    arrival_hour: float
    duration_h: float
    energy_kwh: float

    @classmethod
    def from_session(cls, session: EvSession, ev: EvParams) -> "SessionRecord":
        return cls(
            soc_start=session.soc_start,
            arrival_hour=session.arrival.hour + session.arrival.minute / 60.0,
            duration_h=session.duration_h,
            energy_kwh=session.energy_need_kwh(ev.capacity_kwh),
        )


def persistence_forecast(history: Series, start: datetime, n_steps: int) -> Forecast:
    """Seasonal-naive forecast: each step repeats the value 24 h earlier."""
    day = timedelta(hours=24)
    if history.start > start - day:
        raise DataGapError(
            f"persistence needs 24 h of history before {start.isoformat()}, "
            f"series begins {history.start.isoformat()}"
        )
    values = history.window(start - day, n_steps)
    return Forecast(start, np.array(values, dtype=float))


def _features(soc: float, hour: float) -> np.ndarray:
    angle = 2.0 * math.pi * hour / 24.0
    return np.array([soc, math.cos(angle), math.sin(angle)])


def knn_ev_forecast(
    history: list[SessionRecord],
    soc_start: float,
    arrival: datetime,
    ev: EvParams,
    k: int = 5,
) -> SessionForecast:
    """Mean duration/energy of the k most cosine-similar historical sessions."""
    if not history:
        raise ValueError("kNN session forecast needs at least one completed session")
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, len(history))
    hour = arrival.hour + arrival.minute / 60.0
    q = _features(soc_start, hour)
    qn = float(np.linalg.norm(q))
    sims = np.empty(len(history))
    for i, rec in enumerate(history):
        f = _features(rec.soc_start, rec.arrival_hour)
        sims[i] = float(q @ f) / (qn * float(np.linalg.norm(f)))
    # Stable sort keeps insertion order on ties for determinism.
    order = np.argsort(-sims, kind="stable")[:k]
    duration = float(np.mean([history[i].duration_h for i in order]))
    energy = float(np.mean([history[i].energy_kwh for i in order]))
    final_soc = min(soc_start + energy / ev.capacity_kwh, 1.0)
    return SessionForecast(arrival + timedelta(hours=duration), final_soc)


def perfect_forecast(series: Series, start: datetime, n_steps: int) -> Forecast:
    """The realized future, exactly."""
    return Forecast(start, np.array(series.window(start, n_steps), dtype=float))


class Forecaster:
    """What the predictive controller consumes."""

    def load(self, start: datetime, n_steps: int) -> np.ndarray:
        raise NotImplementedError

    def pv(self, start: datetime, n_steps: int) -> np.ndarray:
        raise NotImplementedError

    def session(self, session: EvSession, ev: EvParams) -> SessionForecast:
        raise NotImplementedError

    def record_session(self, session: EvSession, ev: EvParams) -> None:
        """Feed back a completed session (no-op unless the model learns)."""


class PerfectForecaster(Forecaster):
    def __init__(self, load: Series, pv: Series):
        self._load = load
        self._pv = pv

    def load(self, start, n_steps):
        return perfect_forecast(self._load, start, n_steps).values

    def pv(self, start, n_steps):
        return perfect_forecast(self._pv, start, n_steps).values

    def session(self, session, ev):
        return SessionForecast(session.departure, session.soc_goal)


class PersistenceForecaster(Forecaster):
    """Seasonal-naive load/PV plus kNN session predictions."""

    def __init__(
        self,
        load: Series,
        pv: Series,
        session_history: list[SessionRecord] | None = None,
        k: int = 5,
    ):
        self._load = load
        self._pv = pv
        self.history: list[SessionRecord] = list(session_history or [])
        self.k = k

    def load(self, start, n_steps):
        return persistence_forecast(self._load, start, n_steps).values

    def pv(self, start, n_steps):
        return persistence_forecast(self._pv, start, n_steps).values

    def session(self, session, ev):
        if not self.history:
            # Cold start: assume the plug-in window is used as requested.
            return SessionForecast(session.departure, session.soc_goal)
        return knn_ev_forecast(self.history, session.soc_start, session.arrival, ev, self.k)

    def record_session(self, session, ev):
        self.history.append(SessionRecord.from_session(session, ev))
