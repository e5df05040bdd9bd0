from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from hemsim.assets import EvParams, HouseConfig, default_houses
from hemsim.timeseries import STEP, Series

UTC = timezone.utc
T0 = datetime(2024, 4, 11, 15, 0, tzinfo=UTC)


def make_series(values, start=T0, step=STEP) -> Series:
    return Series(start, step, np.asarray(values, dtype=float))


def flat_series(value: float, n_steps: int, start=T0) -> Series:
    return make_series([value] * n_steps, start=start)


@pytest.fixture
def ev_defaults() -> EvParams:
    return EvParams()


@pytest.fixture
def house1() -> HouseConfig:
    return default_houses()[1]


@pytest.fixture
def house4() -> HouseConfig:
    return default_houses()[4]


@pytest.fixture
def houses() -> dict[int, HouseConfig]:
    return default_houses()
