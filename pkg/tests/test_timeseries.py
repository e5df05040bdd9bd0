from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from hemsim.timeseries import (
    STEP,
    DataGapError,
    Series,
    load_sessions,
    load_timeseries,
    save_sessions,
)
from hemsim.assets import EvSession

from conftest import T0, make_series

UTC = timezone.utc


def write_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("timestamp,value\n")
        for t, v in rows:
            fh.write(f"{t.isoformat()},{v}\n")


class TestSeries:
    def test_value_at_and_window(self):
        s = make_series([1.0, 2.0, 3.0, 4.0])
        assert s.value_at(T0 + STEP) == 2.0
        assert list(s.window(T0 + STEP, 2)) == [2.0, 3.0]

    def test_unaligned_time_rejected(self):
        s = make_series([1.0, 2.0])
        with pytest.raises(DataGapError):
            s.value_at(T0 + timedelta(minutes=7))

    def test_out_of_range_rejected(self):
        s = make_series([1.0, 2.0])
        with pytest.raises(DataGapError):
            s.window(T0, 3)


class TestLoadTimeseries:
    def test_ten_second_data_resampled_to_means(self, tmp_path):
        path = tmp_path / "load.csv"
        rows = [
            (T0 + timedelta(seconds=10 * i), 600.0)
            for i in range(360)  # one hour of 10 s samples
        ]
        write_csv(path, rows)
        series = load_timeseries(str(path), "load")
        assert len(series) == 4
        assert all(v == pytest.approx(0.6) for v in series.values)  # W -> kW

    def test_gap_is_error_with_location(self, tmp_path):
        path = tmp_path / "load.csv"
        rows = [(T0 + i * STEP, 500.0) for i in range(4)]
        rows += [(T0 + (i + 12) * STEP, 500.0) for i in range(4)]  # 2 h hole
        write_csv(path, rows)
        with pytest.raises(ValueError) as err:
            load_timeseries(str(path), "load")
        assert "gap" in str(err.value)
        assert (T0 + 3 * STEP).isoformat() in str(err.value)

    def test_non_monotonic_rejected(self, tmp_path):
        path = tmp_path / "load.csv"
        rows = [(T0, 1.0), (T0 + STEP, 2.0), (T0 + STEP, 3.0)]
        write_csv(path, rows)
        with pytest.raises(ValueError):
            load_timeseries(str(path), "load")

    def test_hourly_prices_step_held(self, tmp_path):
        path = tmp_path / "prices.csv"
        rows = [(T0 + timedelta(hours=i), 0.1 + 0.01 * i) for i in range(3)]
        write_csv(path, rows)
        series = load_timeseries(str(path), "price")
        assert series.value_at(T0) == pytest.approx(0.1)
        assert series.value_at(T0 + timedelta(minutes=45)) == pytest.approx(0.1)
        assert series.value_at(T0 + timedelta(hours=1)) == pytest.approx(0.11)

    def test_weekday_shift(self, tmp_path):
        path = tmp_path / "load.csv"
        write_csv(path, [(T0 + i * STEP, 1000.0) for i in range(4)])
        series = load_timeseries(str(path), "load", shift_days=7)
        assert series.start == T0 + timedelta(days=7)

    def test_unknown_kind(self, tmp_path):
        path = tmp_path / "x.csv"
        write_csv(path, [(T0, 1.0), (T0 + STEP, 1.0)])
        with pytest.raises(ValueError):
            load_timeseries(str(path), "wind")


class TestSessions:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "sessions.csv")
        sessions = [
            EvSession(T0, T0 + timedelta(hours=8), 0.3, 0.8),
            EvSession(T0 + timedelta(days=1), T0 + timedelta(days=1, hours=9), 0.4, 0.9),
        ]
        save_sessions(path, sessions)
        assert load_sessions(path) == sessions

    def test_arrival_after_departure_rejected(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text(
            "arrival,departure,soc_start,soc_goal\n"
            f"{(T0 + timedelta(hours=2)).isoformat()},{T0.isoformat()},0.3,0.8\n"
        )
        with pytest.raises(ValueError):
            load_sessions(str(path))

    def test_goal_below_start_rejected(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text(
            "arrival,departure,soc_start,soc_goal\n"
            f"{T0.isoformat()},{(T0 + timedelta(hours=2)).isoformat()},0.8,0.3\n"
        )
        with pytest.raises(ValueError):
            load_sessions(str(path))

    def test_overlap_rejected(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text(
            "arrival,departure,soc_start,soc_goal\n"
            f"{T0.isoformat()},{(T0 + timedelta(hours=8)).isoformat()},0.3,0.8\n"
            f"{(T0 + timedelta(hours=4)).isoformat()},{(T0 + timedelta(hours=12)).isoformat()},0.3,0.8\n"
        )
        with pytest.raises(ValueError) as err:
            load_sessions(str(path))
        assert "overlap" in str(err.value)
