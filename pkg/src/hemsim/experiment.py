"""Experiment orchestration: rotate EMSs over houses, collect metrics.

Each scheduled day runs 15:00 to 15:00 with the BESS state carried across
days within a house. Failures of a single (day, house) simulation are
isolated and reported rather than cascading. Optionally every EMS gets a
perfect-foresight benchmark simulated on its own (day, house) set.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, tzinfo
from typing import Callable, Optional, Sequence, Union

from hemsim.assets import EvParams, HouseConfig, StepTrace
from hemsim.clock import next_switch, prev_switch
from hemsim.controllers import (
    ExplorationStubController,
    RuleBasedController,
    TreeController,
)
from hemsim.forecasting import PerfectForecaster, PersistenceForecaster, SessionRecord
from hemsim.mpc import MpcController
from hemsim.policytree import PolicyPair
from hemsim.schedule import EMS_NAMES, DayAssignment, Schedule
from hemsim.simulation import EmsController, ScenarioData, run_scenario
from hemsim.tariff import CostBreakdown, TariffParams, net_consumption_cost, total_cost
from hemsim.timeseries import Series


@dataclass
class ExperimentData:
    """Shared load/prices, per-house PV, switch-adjusted sessions."""

    load: Series
    pv: dict[int, Series]
    prices: Series
    sessions: list = field(default_factory=list)
    reactive_kvar: float = 0.0

    def scenario(self, house_id: int) -> ScenarioData:
        return ScenarioData(
            load=self.load,
            pv=self.pv[house_id],
            prices=self.prices,
            sessions=self.sessions,
            reactive_kvar=self.reactive_kvar,
        )


@dataclass
class ExperimentOptions:
    safety_on: bool = True
    inner_dt: Optional[timedelta] = None
    safety_mode: str = "active"
    d_threshold_w2: float = 1e6
    switch_hour: int = 15
    tz: Optional[tzinfo] = None
    seed: int = 0
    include_mpcp: bool = False
    ev: EvParams = field(default_factory=EvParams)
    tariff: TariffParams = field(default_factory=TariffParams)
    mpc_forecaster: str = "persistence"  # or "perfect"
    mpc_replan: str = "always"
    mpc_grid_limit_kw: Optional[float] = None
    treec_policies: Optional[dict[int, PolicyPair]] = None
    stub_seed: int = 0


@dataclass
class DayRecord:
    day: int
    house: int
    ems: str
    start: str  # ISO timestamp of the day's switch
    day_ahead: float = 0.0
    extras: float = 0.0
    imported_kwh: float = 0.0
    exported_kwh: float = 0.0
    activations: int = 0
    fallbacks: int = 0
    exceedance_wh: float = 0.0
    failed: bool = False
    error: str = ""
    mpcp_day_ahead: Optional[float] = None
    mpcp_extras: Optional[float] = None

    @property
    def mpcp_delta(self) -> Optional[float]:
        if self.mpcp_day_ahead is None:
            return None
        return (self.day_ahead + self.extras) - (self.mpcp_day_ahead + self.mpcp_extras)


@dataclass
class EmsResult:
    ems: str
    cost_ie: CostBreakdown
    cost_net: CostBreakdown
    imported_kwh: float
    exported_kwh: float
    safety_activations: int
    fallback_steps: int
    exceedance_wh: float
    days: list[DayRecord]
    mpcp_cost: Optional[CostBreakdown] = None

    @property
    def net_kwh(self) -> float:
        return self.imported_kwh - self.exported_kwh


@dataclass
class ExperimentReport:
    start: str
    n_days: int
    per_ems: dict[str, EmsResult]
    failures: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        raw = json.loads(text)
        per_ems = {}
        for name, r in raw["per_ems"].items():
            days = [DayRecord(**d) for d in r.pop("days")]
            cost_ie = CostBreakdown(**r.pop("cost_ie"))
            cost_net = CostBreakdown(**r.pop("cost_net"))
            mpcp = r.pop("mpcp_cost")
            per_ems[name] = EmsResult(
                days=days,
                cost_ie=cost_ie,
                cost_net=cost_net,
                mpcp_cost=CostBreakdown(**mpcp) if mpcp else None,
                **r,
            )
        return cls(raw["start"], raw["n_days"], per_ems, raw["failures"])


ControllerFactory = Callable[[str, HouseConfig], EmsController]


def default_controller_factory(
    houses: dict[int, HouseConfig],
    data: ExperimentData,
    options: ExperimentOptions,
    experiment_start: datetime,
) -> ControllerFactory:
    """Controllers the benchmark protocol expects, one instance per
    (ems, house) with state persisting across that pair's days."""

    def session_history() -> list[SessionRecord]:
        return [
            SessionRecord.from_session(s, options.ev)
            for s in data.sessions
            if s.departure <= experiment_start
        ]

    def factory(ems: str, house: HouseConfig) -> EmsController:
        if ems == "rbc":
            return RuleBasedController(options.ev)
        if ems == "rl-stub":
            return ExplorationStubController(
                house, options.ev, seed=options.stub_seed * 1000 + house.house_id
            )
        if ems == "treec":
            if not options.treec_policies or house.house_id not in options.treec_policies:
                raise ValueError(f"no trained policy configured for house {house.house_id}")
            return TreeController(options.treec_policies[house.house_id], house, options.ev)
        if ems == "mpc":
            if options.mpc_forecaster == "perfect":
                fc = PerfectForecaster(data.load, data.pv[house.house_id])
            else:
                fc = PersistenceForecaster(
                    data.load, data.pv[house.house_id], session_history()
                )
            return MpcController(
                house,
                fc,
                data.prices,
                ev=options.ev,
                tariff=options.tariff,
                grid_limit_kw=options.mpc_grid_limit_kw,
                replan=options.mpc_replan,
            )
        raise ValueError(f"unknown EMS {ems!r}")

    return factory


def _accumulate(record: DayRecord, traces: Sequence[StepTrace], data, options) -> None:
    cost = total_cost(traces, data.prices, options.tariff, options.tz)
    record.day_ahead = cost.day_ahead
    record.extras = cost.offtake_extras
    record.imported_kwh = sum(tr.imported_kwh for tr in traces)
    record.exported_kwh = sum(tr.exported_kwh for tr in traces)
    record.activations = sum(1 for tr in traces if tr.safety_active)
    record.fallbacks = sum(1 for tr in traces if tr.fallback_used)
    record.exceedance_wh = sum(tr.exceedance_kw * tr.dt_h * 1000.0 for tr in traces)


def run_experiment(
    schedule: Union[Schedule, Sequence[DayAssignment]],
    houses: dict[int, HouseConfig],
    data: ExperimentData,
    start: datetime,
    options: ExperimentOptions = ExperimentOptions(),
    controller_factory: Optional[ControllerFactory] = None,
) -> ExperimentReport:
    days = list(schedule.days) if isinstance(schedule, Schedule) else list(schedule)
    tz = options.tz if options.tz is not None else start.tzinfo
    if prev_switch(start, tz, options.switch_hour) != start:
        raise ValueError(
            f"experiment start {start.isoformat()} must fall on the "
            f"{options.switch_hour}:00 local switch instant"
        )
    if controller_factory is None:
        controller_factory = default_controller_factory(houses, data, options, start)

    controllers: dict[tuple[str, int], EmsController] = {}

    def controller(ems: str, house: HouseConfig) -> EmsController:
        key = (ems, house.house_id)
        if key not in controllers:
            controllers[key] = controller_factory(ems, house)
        return controllers[key]

    carry = {h: cfg.bess_soc_cap for h, cfg in houses.items()}
    traces_by_ems: dict[str, list[StepTrace]] = {e: [] for e in EMS_NAMES}
    records_by_ems: dict[str, list[DayRecord]] = {e: [] for e in EMS_NAMES}
    failures: list[str] = []

    t = start
    windows: list[tuple[datetime, datetime]] = []
    for _ in days:
        t_next = next_switch(t, tz, options.switch_hour)
        windows.append((t, t_next))
        t = t_next

    for d, (assignment, window) in enumerate(zip(days, windows)):
        for house_id in sorted(houses):
            cfg = houses[house_id]
            ems = assignment[house_id - 1]
            record = DayRecord(d, house_id, ems, window[0].isoformat())
            try:
                traces = run_scenario(
                    cfg,
                    controller(ems, cfg),
                    data.scenario(house_id),
                    window,
                    safety_on=options.safety_on,
                    inner_dt=options.inner_dt,
                    ev_params=options.ev,
                    initial_bess_soc=carry[house_id],
                    safety_mode=options.safety_mode,
                    d_threshold_w2=options.d_threshold_w2,
                    tz=tz,
                    switch_hour=options.switch_hour,
                )
            except Exception as exc:  # isolate per-day failures
                record.failed = True
                record.error = f"{type(exc).__name__}: {exc}"
                failures.append(f"day {d} house {house_id} ems {ems}: {record.error}")
                carry[house_id] = cfg.bess_soc_cap  # switch condition restores state
                records_by_ems[ems].append(record)
                continue
            carry[house_id] = traces[-1].bess_soc
            _accumulate(record, traces, data, options)
            traces_by_ems[ems].extend(traces)
            records_by_ems[ems].append(record)

    mpcp_traces: dict[str, list[StepTrace]] = {e: [] for e in EMS_NAMES}
    if options.include_mpcp:
        for ems in EMS_NAMES:
            benchmark_controllers: dict[int, MpcController] = {}
            for record in records_by_ems[ems]:
                if record.failed:
                    continue
                cfg = houses[record.house]
                if record.house not in benchmark_controllers:
                    benchmark_controllers[record.house] = MpcController(
                        cfg,
                        PerfectForecaster(data.load, data.pv[record.house]),
                        data.prices,
                        ev=options.ev,
                        tariff=options.tariff,
                        grid_limit_kw=options.mpc_grid_limit_kw,
                        replan="on_event",
                    )
                window = windows[record.day]
                traces = run_scenario(
                    cfg,
                    benchmark_controllers[record.house],
                    data.scenario(record.house),
                    window,
                    safety_on=options.safety_on,
                    inner_dt=options.inner_dt,
                    ev_params=options.ev,
                    initial_bess_soc=cfg.bess_soc_cap,
                    safety_mode=options.safety_mode,
                    d_threshold_w2=options.d_threshold_w2,
                    tz=tz,
                    switch_hour=options.switch_hour,
                )
                cost = total_cost(traces, data.prices, options.tariff, options.tz)
                record.mpcp_day_ahead = cost.day_ahead
                record.mpcp_extras = cost.offtake_extras
                mpcp_traces[ems].extend(traces)

    per_ems: dict[str, EmsResult] = {}
    for ems in EMS_NAMES:
        traces = traces_by_ems[ems]
        records = records_by_ems[ems]
        if not records:
            continue
        cost_ie = total_cost(traces, data.prices, options.tariff, options.tz)
        cost_net = net_consumption_cost(traces, data.prices, options.tariff, options.tz)
        per_ems[ems] = EmsResult(
            ems=ems,
            cost_ie=cost_ie,
            cost_net=cost_net,
            imported_kwh=sum(r.imported_kwh for r in records),
            exported_kwh=sum(r.exported_kwh for r in records),
            safety_activations=sum(r.activations for r in records),
            fallback_steps=sum(r.fallbacks for r in records),
            exceedance_wh=sum(r.exceedance_wh for r in records),
            days=records,
            mpcp_cost=(
                total_cost(mpcp_traces[ems], data.prices, options.tariff, options.tz)
                if options.include_mpcp and mpcp_traces[ems]
                else None
            ),
        )
    return ExperimentReport(start.isoformat(), len(days), per_ems, failures)
