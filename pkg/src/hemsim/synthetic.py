"""Deterministic synthetic inputs for tests, demos and desk-scale training.

Profiles are plausible rather than faithful: a double-peak household load, a
clear-sky PV bell with daily cloud factors, a day-night price swing and
overnight EV sessions that never span the 15:00 switch.
"""

from __future__ import annotations

import csv
import os
from datetime import datetime, timedelta
from math import pi, sin

import numpy as np

from hemsim.assets import EvSession, HouseConfig, default_houses
from hemsim.simulation import ScenarioData
from hemsim.timeseries import STEP, Series


def synthetic_load(start: datetime, days: int, seed: int = 0) -> Series:
    """Household consumption in kW, 15-min steps, ~2.5 kW evening peaks."""
    rng = np.random.default_rng(seed)
    n = days * 96
    values = np.empty(n)
    for i in range(n):
        t = start + i * STEP
        h = t.hour + t.minute / 60.0
        base = 0.25
        morning = 1.1 * np.exp(-((h - 7.5) ** 2) / 2.0)
        evening = 1.9 * np.exp(-((h - 19.0) ** 2) / 4.5)
        weekend = 0.25 if t.weekday() >= 5 else 0.0
        values[i] = base + morning + evening + weekend
    values *= rng.uniform(0.85, 1.15, size=n)
    return Series(start, STEP, np.maximum(values, 0.05))


def synthetic_pv(start: datetime, days: int, peak_kwp: float, seed: int = 0) -> Series:
    """Clear-sky bell scaled by a per-day cloud factor."""
    rng = np.random.default_rng(seed + 1000)
    clouds = rng.uniform(0.3, 1.0, size=days)
    n = days * 96
    values = np.zeros(n)
    for i in range(n):
        t = start + i * STEP
        h = t.hour + t.minute / 60.0
        sun = sin(pi * (h - 7.0) / 12.0)
        if sun > 0.0:
            day_idx = i // 96
            values[i] = peak_kwp * (sun**1.6) * clouds[day_idx]
    return Series(start, STEP, values)


def synthetic_prices(start: datetime, days: int, seed: int = 0) -> Series:
    """Hourly day-ahead prices in EUR/kWh, held onto the 15-min grid."""
    rng = np.random.default_rng(seed + 2000)
    hours = days * 24
    hourly = np.empty(hours)
    for i in range(hours):
        t = start + timedelta(hours=i)
        h = t.hour
        hourly[i] = 0.09 + 0.06 * sin(2 * pi * (h - 4) / 24.0) + rng.normal(0, 0.012)
    hourly = np.clip(hourly, -0.05, 0.4)
    return Series(start, STEP, np.repeat(hourly, 4))


def synthetic_sessions(start: datetime, days: int, seed: int = 0) -> list[EvSession]:
    """Overnight sessions (about 4 days out of 5), aligned to the grid."""
    rng = np.random.default_rng(seed + 3000)
    sessions: list[EvSession] = []
    day0 = start.replace(hour=0, minute=0, second=0, microsecond=0)
    for d in range(days):
        if rng.uniform() > 0.8:
            continue
        arrival = day0 + timedelta(days=d, hours=17, minutes=int(rng.integers(0, 8)) * 15)
        departure = arrival + timedelta(hours=float(rng.uniform(11, 14)))
        departure = departure - timedelta(
            minutes=departure.minute % 15,
            seconds=departure.second,
            microseconds=departure.microsecond,
        )
        soc_start = float(rng.uniform(0.3, 0.5))
        soc_goal = float(rng.uniform(0.75, 0.9))
        sessions.append(EvSession(arrival, departure, soc_start, soc_goal))
    return sessions


def synthetic_scenario(
    start: datetime,
    days: int,
    house: HouseConfig,
    seed: int = 0,
    with_ev: bool = True,
) -> ScenarioData:
    """One house's full scenario; series begin one day before ``start`` so
    persistence forecasters have history."""
    data_start = start - timedelta(days=1)
    data_days = days + 2
    sessions = synthetic_sessions(start, days, seed) if with_ev else []
    return ScenarioData(
        load=synthetic_load(data_start, data_days, seed),
        pv=synthetic_pv(data_start, data_days, house.pv_peak_kwp, seed + house.house_id),
        prices=synthetic_prices(data_start, data_days, seed),
        sessions=sessions,
    )


def write_csv_bundle(outdir: str, start: datetime, days: int, seed: int = 0) -> dict:
    """Write a loadable CSV bundle (load/pv per house/prices/sessions)."""
    os.makedirs(outdir, exist_ok=True)
    houses = default_houses()
    data_start = start - timedelta(days=1)
    data_days = days + 2
    paths = {
        "load": os.path.join(outdir, "load.csv"),
        "prices": os.path.join(outdir, "prices.csv"),
        "sessions": os.path.join(outdir, "sessions.csv"),
        "pv": {h: os.path.join(outdir, f"pv{h}.csv") for h in houses},
    }

    load = synthetic_load(data_start, data_days, seed)
    with open(paths["load"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "value"])
        for i, v in enumerate(load.values):
            w.writerow([(load.start + i * STEP).isoformat(), f"{v * 1000.0:.1f}"])

    prices = synthetic_prices(data_start, data_days, seed)
    with open(paths["prices"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "value"])
        for i in range(0, len(prices.values), 4):  # hourly rows
            w.writerow([(prices.start + i * STEP).isoformat(), f"{prices.values[i]:.5f}"])

    for h, cfg in houses.items():
        pv = synthetic_pv(data_start, data_days, cfg.pv_peak_kwp, seed + h)
        with open(paths["pv"][h], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", "value"])
            for i, v in enumerate(pv.values):
                w.writerow([(pv.start + i * STEP).isoformat(), f"{v * 1000.0:.1f}"])

    sessions = synthetic_sessions(start, days, seed)
    with open(paths["sessions"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arrival", "departure", "soc_start", "soc_goal"])
        for s in sessions:
            w.writerow([s.arrival.isoformat(), s.departure.isoformat(), s.soc_start, s.soc_goal])
    return paths
