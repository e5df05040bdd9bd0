"""Real-time safety layer: project proposed actions onto the feasible set.

The projection minimizes the summed squared per-action deviation, in watts,
subject to the grid exchange limit, the CC-CV cap of the EV charger and the
SOC-gated power box of the BESS. A charge/discharge branch flag is enumerated
explicitly and each branch reduces to a two-variable projection onto a box
intersected with one slab, solved in closed form. When the correction
distance exceeds a threshold (or no feasible action exists) an a-priori safe
fallback is substituted: BESS self-consumption plus the largest EV power the
projection accepts unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from hemsim.assets import SELF_CONSUMPTION, ActionPair, EvParams, HouseConfig
from hemsim.physics import bess_bounds, ev_max_power, resolve_self_consumption

INFEASIBLE = math.inf

_W = 1000.0  # kW -> W
_FEAS_TOL_W = 1e-3  # 1e-6 kW


@dataclass(frozen=True)
class SafetyContext:
    """Measurements and limits the projection acts under."""

    load_kw: float
    pv_kw: float
    bess_soc: float
    house: HouseConfig
    ev: EvParams
    ev_soc: Optional[float] = None  # None when no EV is connected
    reactive_kvar: float = 0.0  # used in apparent mode only
    mode: str = "active"  # "active" | "apparent"

    def grid_limit_kw(self) -> float:
        if self.mode == "apparent":
            head = self.house.grid_limit_apparent_kva**2 - self.reactive_kvar**2
            return math.sqrt(max(head, 0.0))
        return self.house.grid_limit_active_kw


@dataclass(frozen=True)
class SafetyResult:
    safe_actions: ActionPair
    distance: float  # W^2; 0 iff the proposal was feasible, inf if no feasible set
    activated: bool
    fallback_used: bool

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.distance)


def _project_branch(
    xt: float, yt: float,
    xl: float, xu: float,
    yl: float, yu: float,
    g_lo: float, g_hi: float,
) -> Optional[tuple[float, float, float]]:
    """Project (xt, yt) onto {x in [xl,xu], y in [yl,yu], g_lo <= x-y <= g_hi}.

    Returns (x, y, half squared distance) or None when the set is empty.
    """
    if xl > xu + _FEAS_TOL_W or yl > yu + _FEAS_TOL_W:
        return None
    lo = max(g_lo, xl - yu)
    hi = min(g_hi, xu - yl)
    if lo > hi + _FEAS_TOL_W:
        return None

    x0 = min(max(xt, xl), xu)
    y0 = min(max(yt, yl), yu)
    g0 = x0 - y0
    if g_lo <= g0 <= g_hi:
        return x0, y0, 0.5 * ((x0 - xt) ** 2 + (y0 - yt) ** 2)

    # The slab is active; the optimum lies on the violated face x - y = c.
    c = g_hi if g0 > g_hi else g_lo
    x_seg_lo = max(xl, yl + c)
    x_seg_hi = min(xu, yu + c)
    x = min(max(0.5 * (xt + yt + c), x_seg_lo), x_seg_hi)
    y = x - c
    return x, y, 0.5 * ((x - xt) ** 2 + (y - yt) ** 2)


def correct_actions(proposed: ActionPair, ctx: SafetyContext) -> SafetyResult:
    """Minimal-norm feasible correction of a numeric action pair.

    The proposal's BESS entry must be a concrete setpoint (resolve
    self-consumption against measurements first). Distances are in W^2.
    """
    if proposed.bess is SELF_CONSUMPTION:
        raise ValueError("resolve self-consumption to a numeric setpoint before projecting")
    xt = float(proposed.bess) * _W
    yt = float(proposed.ev) * _W

    ev_cap_w = (
        ev_max_power(ctx.ev_soc, ctx.ev) * _W if ctx.ev_soc is not None else 0.0
    )
    ch_lo_kw, dis_hi_kw = bess_bounds(ctx.bess_soc, ctx.house)
    limit_w = ctx.grid_limit_kw() * _W
    residual_w = (ctx.pv_kw - ctx.load_kw) * _W
    # -limit <= residual + x - y <= limit
    g_lo = -limit_w - residual_w
    g_hi = limit_w - residual_w

    best: Optional[tuple[float, float, float]] = None
    for xl, xu in ((ch_lo_kw * _W, 0.0), (0.0, dis_hi_kw * _W)):
        cand = _project_branch(xt, yt, xl, xu, 0.0, ev_cap_w, g_lo, g_hi)
        if cand is not None and (best is None or cand[2] < best[2]):
            best = cand

    if best is None:
        clamped = ActionPair(
            min(max(proposed.bess, ch_lo_kw), dis_hi_kw),
            min(max(proposed.ev, 0.0), ev_cap_w / _W),
        )
        return SafetyResult(clamped, INFEASIBLE, True, False)

    x, y, dist = best
    return SafetyResult(
        ActionPair(x / _W, y / _W), dist, activated=dist > 0.0, fallback_used=False
    )


def fallback_policy(ctx: SafetyContext) -> ActionPair:
    """A-priori safe actions: self-consumption BESS, largest acceptable EV power.

    The BESS in self-consumption tracks the net household power including the
    EV, so the grid exchange as a function of the EV power is piecewise linear
    and non-increasing; the largest feasible EV setpoint sits on one of its
    breakpoints or bounds.
    """
    cap = ev_max_power(ctx.ev_soc, ctx.ev) if ctx.ev_soc is not None else 0.0
    if cap <= 0.0:
        return ActionPair(SELF_CONSUMPTION, 0.0)
    lo_b, hi_b = bess_bounds(ctx.bess_soc, ctx.house)
    limit = ctx.grid_limit_kw()
    r = ctx.load_kw - ctx.pv_kw

    def grid_at(y: float) -> float:
        bess = min(max(r + y, lo_b), hi_b)
        return -r - y + bess

    candidates = [0.0, cap, limit + hi_b - r, lo_b - r - limit, hi_b - r, lo_b - r]
    best = 0.0
    found = False
    for y in candidates:
        if not 0.0 <= y <= cap:
            continue
        if abs(grid_at(y)) <= limit + 1e-9:
            found = True
            best = max(best, y)
    if not found:
        best = 0.0
    return ActionPair(SELF_CONSUMPTION, best)


def apply(
    proposed: ActionPair, ctx: SafetyContext, d_threshold: float = 1e6
) -> SafetyResult:
    """Run the projection; far-from-feasible proposals trigger the fallback.

    ``d_threshold`` is compared against the squared-distance in W^2 (the
    default 1e6 corresponds to roughly a 1.4 kW combined correction).
    """
    if d_threshold <= 0.0:
        raise ValueError("d_threshold must be positive")
    res = correct_actions(proposed, ctx)
    if res.distance <= d_threshold:
        return res
    fb = fallback_policy(ctx)
    bess_sc = resolve_self_consumption(
        ctx.load_kw, fb.ev, ctx.pv_kw, ctx.bess_soc, ctx.house
    )
    reproj = correct_actions(ActionPair(bess_sc, fb.ev), ctx)
    return SafetyResult(
        reproj.safe_actions, res.distance, activated=True, fallback_used=True
    )
