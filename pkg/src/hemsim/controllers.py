"""The EMS policies: rule-based, decision-tree and the exploratory stub.

The predictive controller lives in :mod:`hemsim.mpc`; all controllers share
the :class:`hemsim.simulation.EmsController` step/observe interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Optional

import numpy as np

from hemsim.assets import SELF_CONSUMPTION, ActionPair, EvParams, EvSession, HouseConfig
from hemsim.policytree import PolicyPair, tree_action_map, tree_eval
from hemsim.simulation import EmsController


@dataclass(frozen=True)
class Observation:
    """What a controller sees at the start of a 15-minute step."""

    time: datetime
    load_kw: float
    pv_kw: float
    bess_soc: float
    ev_soc: Optional[float]
    price: float
    hour: float
    weekday: int
    shifted_price: float
    minutes_to_switch: float
    session: Optional[EvSession]

    def features(self) -> tuple[float, ...]:
        """Vector consumed by policy trees (absent EV encodes as SOC 0)."""
        return (
            self.load_kw,
            self.pv_kw,
            self.bess_soc,
            self.ev_soc if self.ev_soc is not None else 0.0,
            self.price,
            self.hour,
            float(self.weekday),
            self.shifted_price,
        )


class RuleBasedController(EmsController):
    """Self-consumption BESS; charge the EV immediately at full power."""

    def __init__(self, ev: EvParams = EvParams()):
        self.ev = ev

    def step(self, obs: Observation) -> ActionPair:
        ev_kw = self.ev.p_max_kw if obs.session is not None else 0.0
        return ActionPair(SELF_CONSUMPTION, ev_kw)


class TreeController(EmsController):
    """Evaluates one decision tree per asset and denormalizes the outputs."""

    def __init__(self, pair: PolicyPair, house: HouseConfig, ev: EvParams = EvParams()):
        self.pair = pair
        self.house = house
        self.ev = ev

    def step(self, obs: Observation) -> ActionPair:
        feats = obs.features()
        bess = tree_action_map(tree_eval(self.pair.bess, feats), "bess", self.house, self.ev)
        if obs.session is not None:
            ev_kw = tree_action_map(tree_eval(self.pair.ev, feats), "ev", self.house, self.ev)
        else:
            ev_kw = 0.0
        return ActionPair(bess, ev_kw)


class ExplorationStubController(EmsController):
    """Uniform random actions over the full (possibly infeasible) action box.

    Stands in for an exploring learner so the safety layer sees the same kind
    of unconstrained proposals; useless without the layer, by design.
    """

    def __init__(self, house: HouseConfig, ev: EvParams = EvParams(), seed: int = 0):
        self.house = house
        self.ev = ev
        self.rng = np.random.default_rng(seed)

    def step(self, obs: Observation) -> ActionPair:
        bess = float(
            self.rng.uniform(-self.house.bess_max_charge_kw, self.house.bess_max_discharge_kw)
        )
        ev_kw = float(self.rng.uniform(0.0, self.ev.p_max_kw))
        return ActionPair(bess, ev_kw if obs.session is not None else 0.0)
