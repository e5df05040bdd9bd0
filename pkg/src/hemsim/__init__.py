"""Desk-scale home energy management simulation and benchmarking."""

from hemsim.assets import (
    SELF_CONSUMPTION,
    ActionPair,
    EvParams,
    EvSession,
    HouseConfig,
    SimState,
    StepTrace,
    default_houses,
)

__version__ = "0.1.0"

__all__ = [
    "ActionPair",
    "EvParams",
    "EvSession",
    "HouseConfig",
    "SELF_CONSUMPTION",
    "SimState",
    "StepTrace",
    "default_houses",
    "__version__",
]
