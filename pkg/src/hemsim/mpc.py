"""Receding-horizon dispatch as a mixed-integer linear program.

Solved every 15 minutes; the horizon ends at the next EMS switch instant. The
model mirrors the simulator dynamics, keeps linearity by capping the EV
charging power with the next step's SOC, forbids simultaneous BESS charging
and discharging with one binary per step, and encodes the grid limit through
the import/export energy split. Terminal SOC targets carry a heavy slack
penalty so corrupted forecasts degrade into flagged plans instead of crashes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, tzinfo
from typing import Optional

import numpy as np

from hemsim.assets import ActionPair, EvParams, EvSession, HouseConfig, StepTrace
from hemsim.controllers import Observation, RuleBasedController
from hemsim.forecasting import Forecaster
from hemsim.mathprog import (
    INFEASIBLE,
    OPTIMAL,
    LinearProgram,
    MipSolution,
    solve_lp,
    solve_milp,
)
from hemsim.physics import ev_max_power
from hemsim.simulation import enforced_charge_override
from hemsim.tariff import TariffParams, spot_prices
from hemsim.timeseries import STEP, STEP_H, Series

DEFAULT_SLACK_PENALTY = 1e4  # EUR per kWh of missed terminal SOC
INITIAL_PEAK_KW = 2.5


@dataclass
class MpcVars:
    """Variable indices of one built program, for extraction and tests."""

    charge: list[int] = field(default_factory=list)
    discharge: list[int] = field(default_factory=list)
    ev: dict[int, int] = field(default_factory=dict)  # step -> var
    imported: list[int] = field(default_factory=list)
    exported: list[int] = field(default_factory=list)
    gamma: list[int] = field(default_factory=list)
    peak: int = -1
    slack_bess: int = -1
    slack_ev: int = -1
    ev_steps: int = 0


@dataclass(frozen=True)
class SessionModel:
    """The EV as the optimizer sees it: current SOC, predicted departure step
    (exclusive), predicted final SOC and the enforced first-step minimum."""

    soc: float
    final_soc: float
    depart_step: int
    min_first_kw: float = 0.0


def mpc_build(
    *,
    horizon: int,
    bess_soc: float,
    house: HouseConfig,
    ev_params: EvParams,
    tariff: TariffParams,
    load_fc: np.ndarray,
    pv_fc: np.ndarray,
    vd: np.ndarray,
    session: Optional[SessionModel],
    prev_peak_kw: float = INITIAL_PEAK_KW,
    grid_limit_kw: Optional[float] = None,
    slack_penalty: float = DEFAULT_SLACK_PENALTY,
    include_gamma: bool = True,
) -> tuple[LinearProgram, MpcVars]:
    """Assemble the dispatch MILP over ``horizon`` 15-minute steps.

    ``include_gamma=False`` drops the charge/discharge binaries and their
    big-M rows, leaving a pure LP relaxation used as an exact presolve: when
    its optimum never charges and discharges simultaneously, it solves the
    full program too.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least one step")
    if not (len(load_fc) == len(pv_fc) == len(vd) == horizon):
        raise ValueError("forecast lengths must equal the horizon")
    limit = house.grid_limit_active_kw if grid_limit_kw is None else grid_limit_kw
    dt = STEP_H
    e_max_kwh = limit * dt

    lp = LinearProgram()
    v = MpcVars()
    pch, pdis = house.bess_max_charge_kw, house.bess_max_discharge_kw
    eta_b = house.bess_efficiency
    cap_b = house.bess_soc_cap
    eb = house.bess_capacity_kwh

    for k in range(horizon):
        vo, vi = spot_prices(float(vd[k]), tariff)
        v.charge.append(lp.add_variable(0.0, pch, name=f"c{k}"))
        v.discharge.append(lp.add_variable(0.0, pdis, name=f"d{k}"))
        v.imported.append(lp.add_variable(0.0, e_max_kwh, cost=vo + tariff.offtake_extras, name=f"eo{k}"))
        v.exported.append(lp.add_variable(0.0, e_max_kwh, cost=-vi, name=f"ei{k}"))
        if include_gamma:
            v.gamma.append(lp.add_variable(binary=True, name=f"g{k}"))
    v.peak = lp.add_variable(max(prev_peak_kw, 0.0), math.inf, cost=tariff.peak_price, name="peak")
    v.slack_bess = lp.add_variable(0.0, math.inf, cost=slack_penalty, name="sb")

    dep = 0
    if session is not None:
        dep = max(1, min(session.depart_step, horizon))
        v.ev_steps = dep
        for k in range(dep):
            v.ev[k] = lp.add_variable(0.0, ev_params.p_max_kw, name=f"ev{k}")
        v.slack_ev = lp.add_variable(0.0, math.inf, cost=slack_penalty, name="se")
        if session.min_first_kw > 0.0:
            lp.lower[v.ev[0]] = min(session.min_first_kw, ev_params.p_max_kw)

    # Power balance per step: Ei - Eo = dt * (pv - load - ev + d - c).
    for k in range(horizon):
        coeffs = {
            v.exported[k]: 1.0,
            v.imported[k]: -1.0,
            v.discharge[k]: -dt,
            v.charge[k]: dt,
        }
        if k in v.ev:
            coeffs[v.ev[k]] = dt
        rhs = dt * (float(pv_fc[k]) - float(load_fc[k]))
        lp.add_constraint(coeffs, lo=rhs, hi=rhs)

    # BESS SOC envelope and 100% (cap) target at the switch, with slack.
    alpha_c = eta_b * dt / eb
    alpha_d = dt / (eta_b * eb)
    for k in range(1, horizon + 1):
        coeffs = {}
        for j in range(k):
            coeffs[v.charge[j]] = alpha_c
            coeffs[v.discharge[j]] = -alpha_d
        lp.add_constraint(coeffs, lo=-bess_soc, hi=cap_b - bess_soc)
    terminal = {v.charge[j]: alpha_c for j in range(horizon)}
    terminal.update({v.discharge[j]: -alpha_d for j in range(horizon)})
    terminal[v.slack_bess] = 1.0 / eb
    lp.add_constraint(terminal, lo=cap_b - bess_soc)

    # No simultaneous charge and discharge.
    if include_gamma:
        for k in range(horizon):
            lp.add_constraint({v.charge[k]: 1.0, v.gamma[k]: -pch}, hi=0.0)
            lp.add_constraint({v.discharge[k]: 1.0, v.gamma[k]: pdis}, hi=pdis)

    # Peak epigraph: peak >= Eo_k / dt.
    for k in range(horizon):
        lp.add_constraint({v.imported[k]: 1.0, v.peak: -dt}, hi=0.0)

    if session is not None:
        alpha_e = ev_params.charge_efficiency * dt / ev_params.capacity_kwh
        slope = (ev_params.p_max_kw - ev_params.p_min_at_full_kw) / (1.0 - ev_params.soc_cc_cv)
        for k in range(dep):
            # SOC ceiling.
            lp.add_constraint(
                {v.ev[j]: alpha_e for j in range(k + 1)}, hi=1.0 - session.soc
            )
            # CC-CV cap linearized on the next step's SOC:
            #   ev_k <= pmax - slope * (soc_{k+1} - soc_cccv)
            coeffs = {v.ev[j]: slope * alpha_e for j in range(k + 1)}
            coeffs[v.ev[k]] = coeffs[v.ev[k]] + 1.0
            lp.add_constraint(
                coeffs,
                hi=ev_params.p_max_kw - slope * (session.soc - ev_params.soc_cc_cv),
            )
        target = {v.ev[j]: alpha_e for j in range(dep)}
        target[v.slack_ev] = 1.0 / ev_params.capacity_kwh
        lp.add_constraint(target, lo=session.final_soc - session.soc)

    return lp, v


def extract_action(sol: MipSolution, v: MpcVars) -> ActionPair:
    bess = float(sol.x[v.discharge[0]] - sol.x[v.charge[0]])
    ev_kw = float(sol.x[v.ev[0]]) if 0 in v.ev else 0.0
    if abs(bess) < 1e-9:
        bess = 0.0
    return ActionPair(bess, max(ev_kw, 0.0))


@dataclass
class _Plan:
    """Cached solution: expected pre-step state and the action per step."""

    times: list[datetime]
    actions: list[ActionPair]
    bess_soc: list[float]
    ev_soc: list[Optional[float]]
    session: Optional[EvSession]
    peak_kw: float

    def lookup(self, obs: Observation) -> Optional[ActionPair]:
        try:
            i = self.times.index(obs.time)
        except ValueError:
            return None
        if obs.session != self.session:
            return None
        if abs(obs.bess_soc - self.bess_soc[i]) > 1e-6:
            return None
        expected_ev = self.ev_soc[i]
        if (expected_ev is None) != (obs.ev_soc is None):
            return None
        if expected_ev is not None and abs(obs.ev_soc - expected_ev) > 1e-6:
            return None
        return self.actions[i]


class MpcController(RuleBasedController):
    """Predictive EMS; falls back to the simple rules on solver trouble.

    ``replan="always"`` re-solves each step (the deployed cadence);
    ``"on_event"`` reuses the cached plan while the realized state tracks it,
    which is equivalent under stationary forecasts and much faster.
    """

    def __init__(
        self,
        house: HouseConfig,
        forecaster: Forecaster,
        prices: Series,
        *,
        ev: EvParams = EvParams(),
        tariff: TariffParams = TariffParams(),
        grid_limit_kw: Optional[float] = None,
        slack_penalty: float = DEFAULT_SLACK_PENALTY,
        replan: str = "always",
        node_limit: int = 2000,
    ):
        super().__init__(ev)
        self.house = house
        self.forecaster = forecaster
        self.prices = prices
        self.tariff = tariff
        self.grid_limit_kw = grid_limit_kw
        self.slack_penalty = slack_penalty
        if replan not in ("always", "on_event"):
            raise ValueError("replan must be 'always' or 'on_event'")
        self.replan = replan
        self.node_limit = node_limit
        self.prev_peak_kw = INITIAL_PEAK_KW
        self.fallback_steps = 0
        self._plan: Optional[_Plan] = None
        self._last_session: Optional[EvSession] = None

    # -- EmsController interface --------------------------------------------

    def step(self, obs: Observation) -> ActionPair:
        horizon = int(round(obs.minutes_to_switch / 15.0))
        if horizon < 1:
            return super().step(obs)
        if self.replan == "on_event" and self._plan is not None:
            cached = self._plan.lookup(obs)
            if cached is not None and self._plan.peak_kw == self.prev_peak_kw:
                return cached
        try:
            sol, v, session_model = self._solve(obs, horizon)
        except Exception:
            self.fallback_steps += 1
            return super().step(obs)
        if sol.status == INFEASIBLE or not math.isfinite(sol.objective):
            self.fallback_steps += 1
            return super().step(obs)
        if self.replan == "on_event":
            self._plan = self._simulate_plan(obs, horizon, sol, v, session_model)
        return extract_action(sol, v)

    def observe(self, step_trace: StepTrace) -> None:
        peak = step_trace.imported_kwh / STEP_H
        if peak > self.prev_peak_kw:
            self.prev_peak_kw = peak
            self._plan = None
        if self._last_session is not None and not step_trace.ev_connected:
            self.forecaster.record_session(self._last_session, self.ev)
            self._last_session = None

    # -- internals -----------------------------------------------------------

    def _session_model(self, obs: Observation, horizon: int) -> Optional[SessionModel]:
        if obs.session is None or obs.ev_soc is None:
            return None
        self._last_session = obs.session
        fc = self.forecaster.session(obs.session, self.ev)
        depart_step = int(math.ceil((fc.departure - obs.time) / STEP))
        depart_step = max(1, min(depart_step, horizon))
        enforced = enforced_charge_override(
            obs.ev_soc, obs.session.soc_goal, obs.time, obs.session.departure,
            "ev", self.house, self.ev, proposed_kw=0.0, commit_h=STEP_H,
        )
        return SessionModel(
            soc=obs.ev_soc,
            final_soc=min(max(fc.final_soc, obs.ev_soc), 1.0),
            depart_step=depart_step,
            min_first_kw=enforced if enforced is not None else 0.0,
        )

    def _solve(self, obs: Observation, horizon: int):
        load_fc = self.forecaster.load(obs.time, horizon)
        pv_fc = self.forecaster.pv(obs.time, horizon)
        vd = self.prices.window(obs.time, horizon)
        session_model = self._session_model(obs, horizon)

        def build(include_gamma: bool):
            return mpc_build(
                horizon=horizon,
                bess_soc=obs.bess_soc,
                house=self.house,
                ev_params=self.ev,
                tariff=self.tariff,
                load_fc=load_fc,
                pv_fc=pv_fc,
                vd=vd,
                session=session_model,
                prev_peak_kw=self.prev_peak_kw,
                grid_limit_kw=self.grid_limit_kw,
                slack_penalty=self.slack_penalty,
                include_gamma=include_gamma,
            )

        # Exact presolve: without the binaries the program is a relaxation;
        # if its optimum never charges and discharges in the same step it is
        # feasible (hence optimal) for the full MILP as well.
        lp_light, v = build(False)
        sol = solve_lp(lp_light)
        if sol.status == INFEASIBLE:
            return sol, v, session_model
        if sol.status == OPTIMAL and not any(
            sol.x[v.charge[k]] > 1e-6 and sol.x[v.discharge[k]] > 1e-6
            for k in range(horizon)
        ):
            return sol, v, session_model
        lp_full, v_full = build(True)
        return solve_milp(lp_full, node_limit=self.node_limit), v_full, session_model

    def _simulate_plan(
        self,
        obs: Observation,
        horizon: int,
        sol: MipSolution,
        v: MpcVars,
        session_model: Optional[SessionModel],
    ) -> _Plan:
        """Forward the model dynamics to produce per-step expected state."""
        eta_b = self.house.bess_efficiency
        eb = self.house.bess_capacity_kwh
        times, actions, bsocs, esocs = [], [], [], []
        b = obs.bess_soc
        e: Optional[float] = obs.ev_soc
        t = obs.time
        for k in range(horizon):
            c = float(sol.x[v.charge[k]])
            d = float(sol.x[v.discharge[k]])
            ev_kw = float(sol.x[v.ev[k]]) if k in v.ev else 0.0
            times.append(t)
            actions.append(ActionPair(d - c if abs(d - c) > 1e-9 else 0.0, ev_kw))
            bsocs.append(b)
            esocs.append(e)
            b = min(max(b + (c * eta_b - d / eta_b) * STEP_H / eb, 0.0), 1.0)
            if e is not None:
                e = min(e + self.ev.charge_efficiency * ev_kw * STEP_H / self.ev.capacity_kwh, 1.0)
            t = t + STEP
        return _Plan(times, actions, bsocs, esocs, obs.session, self.prev_peak_kw)
