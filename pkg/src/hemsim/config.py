"""Experiment configuration: one nested YAML file describes a full run.

Sections: ``experiment`` (window, seed, safety), ``data`` (CSV paths),
``houses`` (overrides of the four benchmark houses), ``tariff``, ``ev`` and
``controllers`` (per-EMS settings, including trained tree files).
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, Optional
from zoneinfo import ZoneInfo

import yaml

from hemsim.assets import EvParams, HouseConfig, default_houses
from hemsim.experiment import ExperimentData, ExperimentOptions
from hemsim.policytree import PolicyPair, load_pair
from hemsim.schedule import adjust_sessions
from hemsim.tariff import TariffParams
from hemsim.timeseries import load_sessions, load_timeseries


class ConfigError(ValueError):
    """The configuration file is malformed or inconsistent."""


@dataclass
class ExperimentSetup:
    start: datetime
    days: int
    seed: int
    options: ExperimentOptions
    houses: dict[int, HouseConfig]
    data_paths: dict[str, Any]
    weekday_shift_days: int = 0
    treec_tree_paths: dict[int, str] = field(default_factory=dict)

    def load_data(self) -> ExperimentData:
        """Ingest the CSVs and apply the switch-time session adjustment."""
        load = load_timeseries(
            self.data_paths["load"], "load", shift_days=self.weekday_shift_days
        )
        prices = load_timeseries(self.data_paths["prices"], "price")
        pv = {
            h: load_timeseries(p, "pv", shift_days=self.weekday_shift_days)
            for h, p in sorted(self.data_paths["pv"].items())
        }
        missing = set(self.houses) - set(pv)
        if missing:
            raise ConfigError(f"no PV series configured for houses {sorted(missing)}")
        sessions = adjust_sessions(
            load_sessions(self.data_paths["sessions"]),
            self.options.tz,
            self.options.switch_hour,
        )
        return ExperimentData(load=load, pv=pv, prices=prices, sessions=sessions)

    def load_policies(self) -> Optional[dict[int, PolicyPair]]:
        if not self.treec_tree_paths:
            return None
        return {h: load_pair(p) for h, p in sorted(self.treec_tree_paths.items())}


def _override_dataclass(instance, overrides: dict, what: str):
    valid = {f.name for f in dataclasses.fields(instance)}
    unknown = set(overrides) - valid
    if unknown:
        raise ConfigError(f"unknown {what} fields: {sorted(unknown)}")
    return dataclasses.replace(instance, **overrides)


def load_config(path: str) -> ExperimentSetup:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be a mapping")

    exp = raw.get("experiment", {})
    try:
        start = datetime.fromisoformat(str(exp["start"]))
    except KeyError:
        raise ConfigError("experiment.start is required (ISO-8601 with offset)")
    except ValueError as e:
        raise ConfigError(f"experiment.start: {e}")
    if start.tzinfo is None:
        raise ConfigError("experiment.start must carry a UTC offset")
    days = int(exp.get("days", 48))
    seed = int(exp.get("seed", 0))

    tz = None
    if exp.get("timezone"):
        try:
            tz = ZoneInfo(str(exp["timezone"]))
        except Exception as e:
            raise ConfigError(f"experiment.timezone: {e}")

    ev = _override_dataclass(EvParams(), raw.get("ev", {}) or {}, "ev")
    tariff = _override_dataclass(TariffParams(), raw.get("tariff", {}) or {}, "tariff")

    houses = default_houses()
    for key, overrides in (raw.get("houses", {}) or {}).items():
        try:
            hid = int(key)
        except ValueError:
            raise ConfigError(f"house keys must be integers 1..4, got {key!r}")
        if hid not in houses:
            raise ConfigError(f"house id {hid} out of range 1..4")
        merged = dataclasses.asdict(houses[hid])
        unknown = set(overrides or {}) - set(merged)
        if unknown:
            raise ConfigError(f"unknown house fields: {sorted(unknown)}")
        merged.update(overrides or {})
        houses[hid] = HouseConfig(**merged)

    data = raw.get("data", {}) or {}
    for key in ("load", "prices", "sessions", "pv"):
        if key not in data:
            raise ConfigError(f"data.{key} is required")
    pv_paths = {int(k): str(v) for k, v in dict(data["pv"]).items()}

    ctrl = raw.get("controllers", {}) or {}
    mpc_cfg = ctrl.get("mpc", {}) or {}
    stub_cfg = ctrl.get("stub", {}) or {}
    treec_cfg = ctrl.get("treec", {}) or {}
    tree_paths = {int(k): str(v) for k, v in (treec_cfg.get("trees", {}) or {}).items()}

    inner_minutes = exp.get("inner_dt_minutes")
    inner_dt = None
    if inner_minutes is not None and float(inner_minutes) != 15.0:
        inner_dt = timedelta(minutes=float(inner_minutes))

    options = ExperimentOptions(
        safety_on=bool(exp.get("safety", True)),
        inner_dt=inner_dt,
        safety_mode=str(exp.get("safety_mode", "active")),
        d_threshold_w2=float(exp.get("d_threshold_w2", 1e6)),
        switch_hour=int(exp.get("switch_hour", 15)),
        tz=tz,
        seed=seed,
        include_mpcp=bool(exp.get("include_mpcp", False)),
        ev=ev,
        tariff=tariff,
        mpc_forecaster=str(mpc_cfg.get("forecaster", "persistence")),
        mpc_replan=str(mpc_cfg.get("replan", "always")),
        mpc_grid_limit_kw=(
            float(mpc_cfg["grid_limit_kw"]) if "grid_limit_kw" in mpc_cfg else None
        ),
        stub_seed=int(stub_cfg.get("seed", 0)),
    )
    if options.safety_mode not in ("active", "apparent"):
        raise ConfigError("experiment.safety_mode must be 'active' or 'apparent'")
    if options.mpc_forecaster not in ("persistence", "perfect"):
        raise ConfigError("controllers.mpc.forecaster must be 'persistence' or 'perfect'")

    return ExperimentSetup(
        start=start,
        days=days,
        seed=seed,
        options=options,
        houses=houses,
        data_paths={
            "load": str(data["load"]),
            "prices": str(data["prices"]),
            "sessions": str(data["sessions"]),
            "pv": pv_paths,
        },
        weekday_shift_days=int(data.get("weekday_shift_days", 0)),
        treec_tree_paths=tree_paths,
    )
