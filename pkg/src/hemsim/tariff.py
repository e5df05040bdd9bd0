"""Four-part electricity cost model: day-ahead, offtake extras, peak, yearly.

Billing happens on 15-minute steps. Traces recorded at a finer resolution are
aggregated per billing step first, which is what makes the import/export
accounting differ from net-consumption accounting: within one step both
imported and exported energy can be positive.
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass
from datetime import datetime, timedelta, tzinfo
from typing import Iterable, Optional, Sequence

from hemsim.assets import StepTrace
from hemsim.timeseries import Series

STEP_H = 0.25
STEPS_PER_DAY = 96


@dataclass(frozen=True)
class TariffParams:
    """Contract constants (EUR)."""

    injection_adder: float = 0.011  # added to the day-ahead price on offtake
    offtake_subtractor: float = 0.009  # subtracted for injection remuneration
    vat: float = 1.06
    offtake_extras: float = 0.114  # EUR/kWh on every offtaken kWh
    peak_price: float = 3.5  # EUR/kW on the monthly 15-min offtake peak
    peak_floor_kw: float = 2.5
    yearly: float = 115.84  # EUR per billing year

    def __post_init__(self) -> None:
        if self.vat < 1.0:
            raise ValueError("vat must be >= 1")
        if self.peak_floor_kw <= 0.0:
            raise ValueError("peak_floor_kw must be positive")


@dataclass(frozen=True)
class CostBreakdown:
    day_ahead: float
    offtake_extras: float
    peak: float
    yearly: float

    @property
    def total(self) -> float:
        return self.day_ahead + self.offtake_extras + self.peak + self.yearly

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(
            self.day_ahead + other.day_ahead,
            self.offtake_extras + other.offtake_extras,
            self.peak + other.peak,
            self.yearly + other.yearly,
        )


def spot_prices(vd: float, params: TariffParams = TariffParams()) -> tuple[float, float]:
    """Offtake and injection prices (vo, vi) from the day-ahead price.

    VAT applies to the offtake price only when it is positive.
    """
    vo = vd + params.injection_adder
    if vo >= 0.0:
        vo *= params.vat
    vi = vd - params.offtake_subtractor
    return vo, vi


def peak_cost(
    month_step_energies_kwh: Sequence[float],
    billed_fraction: float,
    params: TariffParams = TariffParams(),
) -> float:
    """Monthly peak charge from the billed steps' offtake energies."""
    if not 0.0 <= billed_fraction <= 1.0:
        raise ValueError("billed_fraction must be in [0,1]")
    peak_kw = params.peak_floor_kw
    for e in month_step_energies_kwh:
        if e < 0.0:
            raise ValueError("offtake energies must be non-negative")
        peak_kw = max(peak_kw, e / STEP_H)
    return billed_fraction * params.peak_price * peak_kw


@dataclass(frozen=True)
class BillingStep:
    """One 15-minute billing interval."""

    time: datetime
    imported_kwh: float
    exported_kwh: float


def billing_steps(traces: Iterable[StepTrace]) -> list[BillingStep]:
    """Aggregate (possibly sub-step) trace rows onto the 15-minute grid."""
    buckets: dict[datetime, list[float]] = {}
    for tr in traces:
        t = tr.time
        bucket = t - timedelta(
            minutes=t.minute % 15, seconds=t.second, microseconds=t.microsecond
        )
        acc = buckets.setdefault(bucket, [0.0, 0.0])
        acc[0] += tr.imported_kwh
        acc[1] += tr.exported_kwh
    return [BillingStep(t, eo, ei) for t, (eo, ei) in sorted(buckets.items())]


def _steps_in_year(year: int) -> int:
    return STEPS_PER_DAY * (366 if calendar.isleap(year) else 365)


def _steps_in_month(year: int, month: int) -> int:
    return STEPS_PER_DAY * calendar.monthrange(year, month)[1]


def _cost_of_steps(
    steps: Sequence[BillingStep],
    vd_series: Series,
    params: TariffParams,
    tz: Optional[tzinfo],
) -> CostBreakdown:
    day_ahead = 0.0
    extras = 0.0
    yearly = 0.0
    months: dict[tuple[int, int], list[float]] = {}
    for st in steps:
        vo, vi = spot_prices(vd_series.value_at(st.time), params)
        day_ahead += st.imported_kwh * vo - st.exported_kwh * vi
        extras += st.imported_kwh * params.offtake_extras
        local = st.time.astimezone(tz) if tz is not None else st.time
        yearly += params.yearly / _steps_in_year(local.year)
        months.setdefault((local.year, local.month), []).append(st.imported_kwh)
    peak = 0.0
    for (year, month), energies in sorted(months.items()):
        fraction = len(energies) / _steps_in_month(year, month)
        peak += peak_cost(energies, fraction, params)
    return CostBreakdown(day_ahead, extras, peak, yearly)


def total_cost(
    traces: Iterable[StepTrace],
    vd_series: Series,
    params: TariffParams = TariffParams(),
    tz: Optional[tzinfo] = None,
) -> CostBreakdown:
    """Cost with separate import/export metering per billing step."""
    return _cost_of_steps(billing_steps(traces), vd_series, params, tz)


def net_consumption_cost(
    traces: Iterable[StepTrace],
    vd_series: Series,
    params: TariffParams = TariffParams(),
    tz: Optional[tzinfo] = None,
) -> CostBreakdown:
    """Cost when each billing step is netted to a single consumption value."""
    netted = [
        BillingStep(
            st.time,
            max(st.imported_kwh - st.exported_kwh, 0.0),
            max(st.exported_kwh - st.imported_kwh, 0.0),
        )
        for st in billing_steps(traces)
    ]
    return _cost_of_steps(netted, vd_series, params, tz)
