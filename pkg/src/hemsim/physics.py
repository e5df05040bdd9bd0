"""Pure asset physics: CC-CV charging, BESS dynamics, power balance."""

from __future__ import annotations

from datetime import timedelta

from hemsim.assets import EvParams, HouseConfig

SOC_TOL = 1e-9


def ev_max_power(soc: float, ev: EvParams) -> float:
    """CC-CV charging power cap in kW at the given state of charge."""
    if not 0.0 <= soc <= 1.0:
        raise ValueError(f"EV SOC must be in [0,1], got {soc}")
    if soc <= ev.soc_cc_cv:
        return ev.p_max_kw
    frac = (soc - ev.soc_cc_cv) / (1.0 - ev.soc_cc_cv)
    return ev.p_max_kw - (ev.p_max_kw - ev.p_min_at_full_kw) * frac


def ev_soc_step(soc: float, p_kw: float, dt_h: float, ev: EvParams) -> float:
    """Advance the EV SOC by charging at ``p_kw`` for ``dt_h`` hours."""
    if p_kw < -1e-12 or p_kw > ev_max_power(soc, ev) + 1e-9:
        raise ValueError(f"EV power {p_kw} kW outside [0, CC-CV limit] at SOC {soc}")
    soc_next = soc + ev.charge_efficiency * p_kw * dt_h / ev.capacity_kwh
    return min(max(soc_next, 0.0), 1.0)


def bess_step(
    soc: float, setpoint_kw: float, dt_h: float, cfg: HouseConfig
) -> tuple[float, float]:
    """Advance the BESS SOC; returns (new soc, realized power).

    Charging (negative setpoint) stores |P|*eta, discharging delivers P while
    draining P/eta. Realized power is truncated so the SOC stays within
    [0, soc cap]; callers detect truncation by comparing with the setpoint.
    """
    eta = cfg.bess_efficiency
    cap = cfg.bess_soc_cap
    p = min(max(setpoint_kw, -cfg.bess_max_charge_kw), cfg.bess_max_discharge_kw)
    if p < 0.0:  # charging
        headroom_kw = (cap - soc) * cfg.bess_capacity_kwh / (eta * dt_h)
        realized = -min(-p, max(headroom_kw, 0.0))
        soc_next = soc + (-realized) * eta * dt_h / cfg.bess_capacity_kwh
    elif p > 0.0:  # discharging
        available_kw = soc * cfg.bess_capacity_kwh * eta / dt_h
        realized = min(p, max(available_kw, 0.0))
        soc_next = soc - (realized / eta) * dt_h / cfg.bess_capacity_kwh
    else:
        realized = 0.0
        soc_next = soc
    return min(max(soc_next, 0.0), 1.0), realized


def grid_power(load_kw: float, ev_kw: float, pv_kw: float, bess_kw: float) -> float:
    """Power balance at the meter: positive injects into the grid."""
    return -load_kw - ev_kw + pv_kw + bess_kw


def buffer_time(
    soc_goal: float, soc: float, b_min: timedelta, b_max: timedelta
) -> timedelta:
    """SOC-deficit-proportional safety margin before a charging deadline."""
    deficit = max(soc_goal - soc, 0.0)
    return b_min + (b_max - b_min) * deficit


def self_consumption_target(load_kw: float, ev_kw: float, pv_kw: float) -> float:
    """BESS power that zeroes the grid exchange (discharge positive)."""
    return load_kw + ev_kw - pv_kw


def bess_bounds(soc: float, cfg: HouseConfig) -> tuple[float, float]:
    """Signed setpoint box honoring full/empty gating (no charge at the cap,
    no discharge when empty)."""
    lo = -cfg.bess_max_charge_kw if soc < cfg.bess_soc_cap - SOC_TOL else 0.0
    hi = cfg.bess_max_discharge_kw if soc > SOC_TOL else 0.0
    return lo, hi


def resolve_self_consumption(
    load_kw: float, ev_kw: float, pv_kw: float, soc: float, cfg: HouseConfig
) -> float:
    lo, hi = bess_bounds(soc, cfg)
    return min(max(self_consumption_target(load_kw, ev_kw, pv_kw), lo), hi)
