"""Scenario simulation: enforced charging watchdog and the step loop.

The EMS acts on a 15-minute grid. Optionally each EMS step is refined into
inner steps (mimicking the real-time layer) at which the safety projection
and the enforced-charging watchdog re-evaluate against fresh state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, tzinfo
from typing import Optional

from hemsim import safety as safety_mod
from hemsim.assets import (
    SELF_CONSUMPTION,
    ActionPair,
    EvParams,
    EvSession,
    HouseConfig,
    StepTrace,
)
from hemsim.clock import next_switch
from hemsim.physics import (
    SOC_TOL,
    bess_bounds,
    bess_step,
    buffer_time,
    ev_max_power,
    ev_soc_step,
    grid_power,
    resolve_self_consumption,
    self_consumption_target,
)
from hemsim.timeseries import STEP, STEP_H, DataGapError, Series

__all__ = [
    "B_MIN",
    "B_MAX_BESS",
    "B_MAX_EV",
    "EmsController",
    "ScenarioData",
    "bess_bounds",
    "bess_step",
    "buffer_time",
    "enforced_charge_override",
    "ev_max_power",
    "ev_soc_step",
    "grid_power",
    "resolve_self_consumption",
    "run_scenario",
    "self_consumption_target",
]

B_MIN = timedelta(minutes=3)
B_MAX_BESS = timedelta(hours=1)
B_MAX_EV = timedelta(hours=4)


@dataclass
class ScenarioData:
    """Exogenous series (15-min grid) plus the EV session plan."""

    load: Series
    pv: Series
    prices: Series
    sessions: list[EvSession] = field(default_factory=list)
    reactive_kvar: float = 0.0


def _ev_charge_forward(
    soc: float,
    hours: float,
    ev: EvParams,
    *,
    first_power_kw: Optional[float] = None,
    first_hours: float = 0.0,
    goal: float = 1.0,
    chunk_h: float = STEP_H,
) -> float:
    """SOC after charging for ``hours``: an optional first phase at a fixed
    power, then CC-CV-limited maximum power. Early-exits once past ``goal``."""
    remaining = hours
    phase1 = min(first_hours, remaining) if first_power_kw is not None else 0.0
    while phase1 > 1e-12:
        dt = min(chunk_h, phase1)
        p = min(first_power_kw, ev_max_power(soc, ev))
        soc = ev_soc_step(soc, max(p, 0.0), dt, ev)
        phase1 -= dt
        remaining -= dt
        if soc >= goal - SOC_TOL:
            return soc
    while remaining > 1e-12:
        dt = min(chunk_h, remaining)
        soc = ev_soc_step(soc, ev_max_power(soc, ev), dt, ev)
        remaining -= dt
        if soc >= goal - SOC_TOL:
            return soc
    return soc


def _bess_charge_forward(
    soc: float,
    hours: float,
    cfg: HouseConfig,
    *,
    first_power_kw: Optional[float] = None,
    first_hours: float = 0.0,
) -> float:
    """SOC after an optional first phase at a fixed signed power, then
    maximum-power charging; closed form since the charge rate is constant."""
    remaining = hours
    if first_power_kw is not None and first_hours > 0.0 and remaining > 0.0:
        dt = min(first_hours, remaining)
        soc, _ = bess_step(soc, first_power_kw, dt, cfg)
        remaining -= dt
    if remaining > 0.0:
        soc, _ = bess_step(soc, -cfg.bess_max_charge_kw, remaining, cfg)
    return soc


def enforced_charge_override(
    soc: float,
    soc_goal: float,
    now: datetime,
    target_time: datetime,
    asset: str,
    cfg: HouseConfig,
    ev: EvParams,
    *,
    proposed_kw: float,
    commit_h: float,
) -> Optional[float]:
    """Watchdog guaranteeing SOC goals despite lazy EMS setpoints.

    Checks whether applying ``proposed_kw`` for the next ``commit_h`` hours and
    maximum power afterwards still reaches ``soc_goal`` by the buffered
    deadline. If not, returns the minimum charging power for the next commit
    period that does (capped at the asset maximum). Returns None when the
    proposal is fine. ``proposed_kw`` is signed for the BESS, >= 0 for the EV.
    """
    if soc >= soc_goal - SOC_TOL:
        return None
    b_max = B_MAX_BESS if asset == "bess" else B_MAX_EV
    intermediate = target_time - buffer_time(soc_goal, soc, B_MIN, b_max)
    horizon_h = max((intermediate - now).total_seconds() / 3600.0, 0.0)

    if asset == "bess":
        reached = _bess_charge_forward(
            soc, horizon_h, cfg, first_power_kw=proposed_kw, first_hours=commit_h
        )
        if reached >= soc_goal - 1e-7:
            return None
        h1 = min(commit_h, horizon_h)
        h2 = horizon_h - h1
        eta = cfg.bess_efficiency
        later_gain = cfg.bess_max_charge_kw * eta * h2 / cfg.bess_capacity_kwh
        needed_soc = soc_goal - soc - later_gain
        if h1 <= 0.0:
            return -cfg.bess_max_charge_kw
        p = needed_soc * cfg.bess_capacity_kwh / (eta * h1)
        return -min(max(p, 0.0), cfg.bess_max_charge_kw)

    if asset == "ev":
        reached = _ev_charge_forward(
            soc, horizon_h, ev,
            first_power_kw=proposed_kw, first_hours=commit_h, goal=soc_goal,
        )
        if reached >= soc_goal - 1e-7:
            return None
        cap_now = ev_max_power(soc, ev)
        at_max = _ev_charge_forward(
            soc, horizon_h, ev,
            first_power_kw=cap_now, first_hours=commit_h, goal=soc_goal,
        )
        if at_max < soc_goal - 1e-7:
            return cap_now
        # Minimum sufficient power for the commit period, by bisection (the
        # reached SOC is monotone in the first-phase power).
        lo, hi = max(proposed_kw, 0.0), cap_now
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            ok = (
                _ev_charge_forward(
                    soc, horizon_h, ev,
                    first_power_kw=mid, first_hours=commit_h, goal=soc_goal,
                )
                >= soc_goal - 1e-7
            )
            if ok:
                hi = mid
            else:
                lo = mid
        return hi

    raise ValueError(f"asset must be 'bess' or 'ev', got {asset!r}")


class EmsController:
    """Base controller: one action per 15-minute step, optional feedback."""

    def step(self, obs) -> ActionPair:
        raise NotImplementedError

    def observe(self, step_trace: StepTrace) -> None:
        """Realized 15-min outcome of the last action (for stateful EMSs)."""


def _effective_grid_limit(cfg: HouseConfig, mode: str, reactive_kvar: float) -> float:
    if mode == "apparent":
        head = cfg.grid_limit_apparent_kva**2 - reactive_kvar**2
        return math.sqrt(max(head, 0.0))
    return cfg.grid_limit_active_kw


def run_scenario(
    house: HouseConfig,
    controller: EmsController,
    data: ScenarioData,
    window: tuple[datetime, datetime],
    *,
    safety_on: bool = True,
    inner_dt: Optional[timedelta] = None,
    ev_params: EvParams = EvParams(),
    initial_bess_soc: Optional[float] = None,
    safety_mode: str = "active",
    d_threshold_w2: float = 1e6,
    tz: Optional[tzinfo] = None,
    switch_hour: int = 15,
) -> list[StepTrace]:
    """Simulate one EMS over a window; returns one trace row per inner step.

    Raises :class:`DataGapError` when the exogenous series do not cover the
    window. ``inner_dt`` must divide 15 minutes; with the default the safety
    layer and watchdog run once per EMS step.
    """
    start, end = window
    if (end - start) % STEP != timedelta(0) or end <= start:
        raise ValueError("window must span a positive whole number of 15-min steps")
    n_steps = (end - start) // STEP
    for name, series in (("load", data.load), ("pv", data.pv), ("prices", data.prices)):
        if not series.covers(start, end):
            raise DataGapError(
                f"{name} series covers [{series.start.isoformat()}, {series.end.isoformat()}) "
                f"but the window needs [{start.isoformat()}, {end.isoformat()})"
            )
    if inner_dt is None:
        inner_dt = STEP
    n_inner, rem = divmod(STEP, inner_dt)
    if rem != timedelta(0):
        raise ValueError(f"inner_dt {inner_dt} must divide 15 minutes")
    inner_h = inner_dt.total_seconds() / 3600.0
    tz = tz if tz is not None else start.tzinfo

    loads = data.load.window(start, n_steps)
    pvs = data.pv.window(start, n_steps)
    prices = data.prices.window(start, n_steps)

    bess_soc = house.bess_soc_cap if initial_bess_soc is None else initial_bess_soc
    ev_soc: Optional[float] = None
    session: Optional[EvSession] = None
    pending = sorted(
        (s for s in data.sessions if s.departure > start and s.arrival < end),
        key=lambda s: s.arrival,
    )
    grid_limit = _effective_grid_limit(house, safety_mode, data.reactive_kvar)
    ev_commit_until: Optional[datetime] = None
    bess_commit_until: Optional[datetime] = None
    realtime = inner_dt != STEP

    switch_end = next_switch(start, tz, switch_hour)
    switch_begin = switch_end - timedelta(days=1)
    day_min_price = _window_min(data.prices, switch_begin, switch_end)

    from hemsim.controllers import Observation  # deferred: controllers imports us

    traces: list[StepTrace] = []
    t = start
    for k in range(n_steps):
        if t >= switch_end:
            switch_begin, switch_end = switch_end, next_switch(t, tz, switch_hour)
            day_min_price = _window_min(data.prices, switch_begin, switch_end)

        if session is not None and t >= session.departure:
            session, ev_soc = None, None
        while pending and pending[0].arrival <= t:
            nxt = pending.pop(0)
            if nxt.departure > t:
                session, ev_soc = nxt, nxt.soc_start
        load, pv, price = float(loads[k]), float(pvs[k]), float(prices[k])
        local = t.astimezone(tz) if tz is not None else t
        obs = Observation(
            time=t,
            load_kw=load,
            pv_kw=pv,
            bess_soc=bess_soc,
            ev_soc=ev_soc,
            price=price,
            hour=local.hour + local.minute / 60.0,
            weekday=local.weekday(),
            shifted_price=price - day_min_price,
            minutes_to_switch=(switch_end - t).total_seconds() / 60.0,
            session=session,
        )
        action = controller.step(obs)

        clipped = False
        ev_req = action.ev
        if session is None:
            ev_req = 0.0
        elif not 0.0 <= ev_req <= ev_params.p_max_kw:
            ev_req = min(max(ev_req, 0.0), ev_params.p_max_kw)
            clipped = True

        bess_sp = action.bess
        if house.bess_soc_cap < 1.0 and bess_soc >= house.bess_soc_cap - SOC_TOL:
            bess_sp = SELF_CONSUMPTION
        if bess_sp is not SELF_CONSUMPTION:
            bounded = min(max(bess_sp, -house.bess_max_charge_kw), house.bess_max_discharge_kw)
            if bounded != bess_sp:
                clipped = True
            bess_sp = bounded

        if not realtime:
            # 15-min mode: the watchdog tops up the EMS request when needed.
            if session is not None and ev_soc is not None:
                ov = enforced_charge_override(
                    ev_soc, session.soc_goal, t, session.departure, "ev",
                    house, ev_params,
                    proposed_kw=min(ev_req, ev_max_power(ev_soc, ev_params)),
                    commit_h=STEP_H,
                )
                if ov is not None:
                    ev_req = max(ev_req, ov)
            sc_probe = (
                resolve_self_consumption(load, ev_req, pv, bess_soc, house)
                if bess_sp is SELF_CONSUMPTION
                else bess_sp
            )
            ov = enforced_charge_override(
                bess_soc, house.bess_soc_cap, t, switch_end, "bess",
                house, ev_params, proposed_kw=sc_probe, commit_h=STEP_H,
            )
            if ov is not None:
                bess_sp = min(sc_probe, ov)

        step_imported = step_exported = 0.0
        step_bess = step_ev = step_grid = 0.0
        step_active = step_fallback = False
        step_corr = step_exceed = 0.0
        t_in = t
        for _ in range(n_inner):
            ev_kw = min(ev_req, ev_max_power(ev_soc, ev_params)) if ev_soc is not None else 0.0
            bess_kw_prop = bess_sp
            if realtime:
                # Real-time watchdog: an unreachable goal triggers a one-minute
                # max-power commitment (or one inner step if that is longer).
                commit = max(inner_dt, timedelta(minutes=1))
                if (
                    session is not None
                    and ev_soc is not None
                    and (ev_commit_until is None or t_in >= ev_commit_until)
                ):
                    cap_now = ev_max_power(ev_soc, ev_params)
                    ov = enforced_charge_override(
                        ev_soc, session.soc_goal, t_in, session.departure, "ev",
                        house, ev_params, proposed_kw=cap_now, commit_h=0.0,
                    )
                    ev_commit_until = t_in + commit if ov is not None else None
                if ev_commit_until is not None and t_in < ev_commit_until and ev_soc is not None:
                    ev_kw = ev_max_power(ev_soc, ev_params)
                if bess_commit_until is None or t_in >= bess_commit_until:
                    ov = enforced_charge_override(
                        bess_soc, house.bess_soc_cap, t_in, switch_end, "bess",
                        house, ev_params,
                        proposed_kw=-house.bess_max_charge_kw, commit_h=0.0,
                    )
                    bess_commit_until = t_in + commit if ov is not None else None
                if bess_commit_until is not None and t_in < bess_commit_until:
                    bess_kw_prop = -house.bess_max_charge_kw

            if bess_kw_prop is SELF_CONSUMPTION:
                bess_kw_prop = resolve_self_consumption(load, ev_kw, pv, bess_soc, house)

            active = fallback = False
            corr = 0.0
            if safety_on:
                ctx = safety_mod.SafetyContext(
                    load_kw=load,
                    pv_kw=pv,
                    reactive_kvar=data.reactive_kvar,
                    bess_soc=bess_soc,
                    ev_soc=ev_soc,
                    house=house,
                    ev=ev_params,
                    mode=safety_mode,
                )
                res = safety_mod.apply(
                    ActionPair(bess_kw_prop, ev_kw), ctx, d_threshold=d_threshold_w2
                )
                corr = math.hypot(
                    res.safe_actions.bess - bess_kw_prop, res.safe_actions.ev - ev_kw
                )
                bess_kw_prop = res.safe_actions.bess
                ev_kw = res.safe_actions.ev
                active, fallback = res.activated, res.fallback_used

            bess_soc, bess_kw = bess_step(bess_soc, bess_kw_prop, inner_h, house)
            if ev_soc is not None:
                ev_kw = min(ev_kw, ev_max_power(ev_soc, ev_params))
                ev_soc = ev_soc_step(ev_soc, ev_kw, inner_h, ev_params)
            else:
                ev_kw = 0.0
            grid = grid_power(load, ev_kw, pv, bess_kw)
            imported = max(-grid, 0.0) * inner_h
            exported = max(grid, 0.0) * inner_h
            exceed = max(abs(grid) - grid_limit, 0.0)
            if exceed < 1e-9:  # numeric noise well under the 1e-6 kW feasibility tolerance
                exceed = 0.0
            traces.append(
                StepTrace(
                    time=t_in,
                    dt_h=inner_h,
                    load_kw=load,
                    pv_kw=pv,
                    ev_kw=ev_kw,
                    bess_kw=bess_kw,
                    grid_kw=grid,
                    imported_kwh=imported,
                    exported_kwh=exported,
                    bess_soc=bess_soc,
                    ev_soc=ev_soc,
                    ev_connected=session is not None,
                    safety_active=active,
                    fallback_used=fallback,
                    correction_kw=corr,
                    exceedance_kw=exceed,
                    clipped=clipped,
                )
            )
            step_imported += imported
            step_exported += exported
            step_bess += bess_kw / n_inner
            step_ev += ev_kw / n_inner
            step_grid += grid / n_inner
            step_active = step_active or active
            step_fallback = step_fallback or fallback
            step_corr = max(step_corr, corr)
            step_exceed = max(step_exceed, exceed)
            t_in += inner_dt

        controller.observe(
            StepTrace(
                time=t, dt_h=STEP_H, load_kw=load, pv_kw=pv, ev_kw=step_ev,
                bess_kw=step_bess, grid_kw=step_grid, imported_kwh=step_imported,
                exported_kwh=step_exported, bess_soc=bess_soc, ev_soc=ev_soc,
                ev_connected=session is not None, safety_active=step_active,
                fallback_used=step_fallback, correction_kw=step_corr,
                exceedance_kw=step_exceed, clipped=clipped,
            )
        )
        t += STEP
    return traces


def _window_min(prices: Series, start: datetime, end: datetime) -> float:
    lo = max(start, prices.start)
    hi = min(end, prices.end)
    if hi <= lo:
        raise DataGapError(
            f"price series does not overlap switch window "
            f"[{start.isoformat()}, {end.isoformat()})"
        )
    i = int((lo - prices.start) / prices.step)
    j = int((hi - prices.start) / prices.step)
    return float(prices.values[i:max(j, i + 1)].min())
