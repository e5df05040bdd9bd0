"""Domain types for houses, batteries, EV sessions and simulation state.

Sign conventions used throughout the package:

* BESS power setpoints are signed: charging is negative, discharging positive.
* EV charger power is always >= 0.
* Grid power is positive when injecting into the grid, negative on offtake.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import NamedTuple, Optional, Union


class _SelfConsumption:
    """Sentinel for the BESS self-consumption mode (track net load to zero)."""

    _instance: Optional["_SelfConsumption"] = None

    def __new__(cls) -> "_SelfConsumption":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "SELF_CONSUMPTION"


SELF_CONSUMPTION = _SelfConsumption()

BessSetpoint = Union[float, _SelfConsumption]


@dataclass(frozen=True)
class EvParams:
    """EV battery and charger parameters.

    The charger follows a constant-current/constant-voltage profile: full power
    up to ``soc_cc_cv``, then a linear taper down to ``p_min_at_full`` at 100%.
    """

    capacity_kwh: float = 60.0
    p_max_kw: float = 7.4
    p_min_at_full_kw: float = 1.0
    soc_cc_cv: float = 0.8
    charge_efficiency: float = 0.95

    def __post_init__(self) -> None:
        if not 0.0 < self.soc_cc_cv < 1.0:
            raise ValueError(f"soc_cc_cv must be in (0,1), got {self.soc_cc_cv}")
        if self.p_min_at_full_kw > self.p_max_kw:
            raise ValueError("p_min_at_full_kw must not exceed p_max_kw")
        if not 0.0 < self.charge_efficiency <= 1.0:
            raise ValueError("charge_efficiency must be in (0,1]")
        if self.capacity_kwh <= 0.0:
            raise ValueError("capacity_kwh must be positive")


@dataclass(frozen=True)
class HouseConfig:
    """Static asset parameters of one house."""

    house_id: int
    bess_capacity_kwh: float
    bess_max_charge_kw: float
    bess_max_discharge_kw: float
    bess_efficiency: float
    pv_peak_kwp: float
    grid_limit_active_kw: float
    grid_limit_apparent_kva: float
    # Some batteries refuse commands near full; the cap forces self-consumption
    # above it and becomes the enforced end-of-day SOC goal.
    bess_soc_cap: float = 1.0

    def __post_init__(self) -> None:
        if self.bess_capacity_kwh <= 0.0:
            raise ValueError("bess_capacity_kwh must be positive")
        if not 0.0 < self.bess_efficiency <= 1.0:
            raise ValueError("bess_efficiency must be in (0,1]")
        if self.bess_max_charge_kw <= 0.0 or self.bess_max_discharge_kw <= 0.0:
            raise ValueError("BESS power limits must be positive")
        if self.grid_limit_active_kw <= 0.0 or self.grid_limit_apparent_kva <= 0.0:
            raise ValueError("grid limits must be positive")
        if not 1 <= self.house_id <= 4:
            raise ValueError(f"house_id must be 1..4, got {self.house_id}")
        if not 0.0 < self.bess_soc_cap <= 1.0:
            raise ValueError("bess_soc_cap must be in (0,1]")


def default_houses() -> dict[int, HouseConfig]:
    """The four benchmark houses (BESS, PV and breaker ratings per house)."""
    return {
        1: HouseConfig(1, 5.12, 3.2, 3.2, 0.95, 3.4, 9.2, 9.2),
        2: HouseConfig(2, 5.0, 2.5, 2.5, 0.95, 5.6, 17.2, 17.2),
        3: HouseConfig(3, 15.3, 3.0, 4.0, 0.96, 3.0, 9.2, 9.2),
        4: HouseConfig(4, 3.55, 1.7, 2.5, 0.95, 2.6, 9.2, 9.2, bess_soc_cap=0.95),
    }


@dataclass(frozen=True)
class EvSession:
    """One EV charging session: plug-in window plus start and goal SOC."""

    arrival: datetime
    departure: datetime
    soc_start: float
    soc_goal: float

    def __post_init__(self) -> None:
        if self.arrival >= self.departure:
            raise ValueError(f"session arrival {self.arrival} not before departure {self.departure}")
        if self.soc_start > self.soc_goal:
            raise ValueError("soc_start must not exceed soc_goal")
        if not (0.0 <= self.soc_start <= 1.0 and 0.0 <= self.soc_goal <= 1.0):
            raise ValueError("session SOC values must be in [0,1]")

    @property
    def duration_h(self) -> float:
        return (self.departure - self.arrival).total_seconds() / 3600.0

    def energy_need_kwh(self, capacity_kwh: float) -> float:
        """Energy to be stored in the EV battery, before charger losses."""
        return (self.soc_goal - self.soc_start) * capacity_kwh


@dataclass
class SimState:
    """Dynamic per-house state at one instant."""

    time: datetime
    bess_soc: float
    ev_soc: Optional[float] = None
    active_session: Optional[EvSession] = None

    def __post_init__(self) -> None:
        if (self.ev_soc is None) != (self.active_session is None):
            raise ValueError("ev_soc and active_session must be both present or both absent")


@dataclass(frozen=True)
class ActionPair:
    """One EMS decision: BESS setpoint (signed kW or self-consumption) and EV kW."""

    bess: BessSetpoint
    ev: float

    @property
    def bess_is_self_consumption(self) -> bool:
        return self.bess is SELF_CONSUMPTION


class StepTrace(NamedTuple):
    """Realized outcome of one simulated (inner) step.

    Powers are step averages in kW, energies in kWh over ``dt_h``. SOC fields
    hold the state at the *end* of the step. ``exceedance_kw`` is the amount by
    which |grid| exceeded the grid limit (0 when within limits).
    """

    time: datetime
    dt_h: float
    load_kw: float
    pv_kw: float
    ev_kw: float
    bess_kw: float
    grid_kw: float
    imported_kwh: float
    exported_kwh: float
    bess_soc: float
    ev_soc: Optional[float]
    ev_connected: bool
    safety_active: bool
    fallback_used: bool
    correction_kw: float
    exceedance_kw: float
    clipped: bool
