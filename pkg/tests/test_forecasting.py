from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from hemsim.assets import EvParams, EvSession
from hemsim.forecasting import (
    PerfectForecaster,
    PersistenceForecaster,
    SessionRecord,
    knn_ev_forecast,
    perfect_forecast,
    persistence_forecast,
)
from hemsim.timeseries import STEP, DataGapError

from conftest import T0, flat_series, make_series

EV = EvParams()


class TestPersistence:
    def test_constant_history(self):
        history = flat_series(0.5, 8 * 96, start=T0 - timedelta(days=2))
        fc = persistence_forecast(history, T0, 96)
        assert len(fc) == 96
        assert all(v == 0.5 for v in fc.values)

    def test_periodic_history_exact(self):
        n = 3 * 96
        values = [math.sin(2 * math.pi * (i % 96) / 96) ** 2 for i in range(n)]
        history = make_series(values, start=T0 - timedelta(days=3))
        fc = persistence_forecast(history, T0 - timedelta(days=1), 96)
        np.testing.assert_allclose(fc.values, values[96:192])

    def test_lookup_is_yesterday(self):
        values = list(range(2 * 96))
        history = make_series(values, start=T0 - timedelta(days=2))
        fc = persistence_forecast(history, T0 - timedelta(days=1) + 5 * STEP, 4)
        assert list(fc.values) == [5.0, 6.0, 7.0, 8.0]

    def test_insufficient_history(self):
        history = flat_series(0.5, 96, start=T0 - timedelta(hours=12))
        with pytest.raises(DataGapError):
            persistence_forecast(history, T0, 96)


class TestKnn:
    def rec(self, soc, hour, dur, energy):
        return SessionRecord(soc, hour, dur, energy)

    def test_single_history_recalled(self):
        history = [self.rec(0.4, 18.0, 10.0, 20.0)]
        fc = knn_ev_forecast(history, 0.4, T0.replace(hour=18), EV, k=1)
        assert fc.departure == T0.replace(hour=18) + timedelta(hours=10)
        assert fc.final_soc == pytest.approx(0.4 + 20.0 / 60.0)

    def test_exact_query_recall(self):
        history = [
            self.rec(0.2, 8.0, 4.0, 10.0),
            self.rec(0.5, 18.0, 12.0, 24.0),
            self.rec(0.9, 23.0, 2.0, 3.0),
        ]
        fc = knn_ev_forecast(history, 0.5, T0.replace(hour=18), EV, k=1)
        assert fc.departure - T0.replace(hour=18) == timedelta(hours=12)

    def test_k3_matches_exhaustive_ranking(self):
        rng = np.random.default_rng(8)
        history = [
            self.rec(
                float(rng.uniform(0, 1)), float(rng.uniform(0, 24)),
                float(rng.uniform(2, 14)), float(rng.uniform(5, 30)),
            )
            for _ in range(5)
        ]
        q_soc, q_hour = 0.45, 19.0

        def feats(soc, hour):
            a = 2 * math.pi * hour / 24.0
            return np.array([soc, math.cos(a), math.sin(a)])

        q = feats(q_soc, q_hour)
        sims = [
            float(q @ feats(r.soc_start, r.arrival_hour))
            / (np.linalg.norm(q) * np.linalg.norm(feats(r.soc_start, r.arrival_hour)))
            for r in history
        ]
        top3 = sorted(range(5), key=lambda i: -sims[i])[:3]
        expected_dur = np.mean([history[i].duration_h for i in top3])
        arrival = T0.replace(hour=19)
        fc = knn_ev_forecast(history, q_soc, arrival, EV, k=3)
        assert (fc.departure - arrival).total_seconds() / 3600.0 == pytest.approx(expected_dur)

    def test_k_larger_than_history_uses_all(self):
        history = [self.rec(0.3, 10.0, 5.0, 10.0), self.rec(0.7, 20.0, 9.0, 20.0)]
        fc = knn_ev_forecast(history, 0.5, T0, EV, k=10)
        assert (fc.departure - T0).total_seconds() / 3600.0 == pytest.approx(7.0)

    def test_midnight_wraparound_similarity(self):
        # 23:30 and 00:30 must be more similar than 23:30 and 12:00.
        history = [self.rec(0.5, 0.5, 6.0, 10.0), self.rec(0.5, 12.0, 12.0, 20.0)]
        fc = knn_ev_forecast(history, 0.5, T0.replace(hour=23, minute=30), EV, k=1)
        assert (fc.departure - T0.replace(hour=23, minute=30)) == timedelta(hours=6)

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            knn_ev_forecast([], 0.5, T0, EV)


class TestPerfect:
    def test_equals_truth(self):
        series = make_series(list(range(96)))
        fc = perfect_forecast(series, T0 + 4 * STEP, 8)
        assert list(fc.values) == list(range(4, 12))

    def test_session_truth(self):
        fcer = PerfectForecaster(flat_series(1, 96), flat_series(0, 96))
        s = EvSession(T0, T0 + timedelta(hours=9), 0.3, 0.85)
        fc = fcer.session(s, EV)
        assert fc.departure == s.departure
        assert fc.final_soc == s.soc_goal

    def test_beyond_data_errors(self):
        series = make_series([1.0] * 4)
        with pytest.raises(DataGapError):
            perfect_forecast(series, T0, 5)


class TestPersistenceForecaster:
    def test_records_sessions(self):
        load = flat_series(0.5, 3 * 96, start=T0 - timedelta(days=2))
        fcer = PersistenceForecaster(load, load, [], k=2)
        s = EvSession(T0, T0 + timedelta(hours=8), 0.3, 0.8)
        # Cold start trusts the session as plugged in.
        cold = fcer.session(s, EV)
        assert cold.departure == s.departure
        fcer.record_session(s, EV)
        warm = fcer.session(s, EV)
        assert warm.departure == s.departure
        assert warm.final_soc == pytest.approx(0.8)
