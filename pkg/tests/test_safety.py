from __future__ import annotations

import math

import numpy as np
import pytest

from hemsim.assets import SELF_CONSUMPTION, ActionPair, EvParams, HouseConfig
from hemsim.physics import ev_max_power, grid_power, resolve_self_consumption
from hemsim.safety import SafetyContext, apply, correct_actions, fallback_policy

EV = EvParams()


def ctx_for(
    load=2.0, pv=0.0, bess_soc=0.5, ev_soc=0.5, house=None, mode="active", reactive=0.0
) -> SafetyContext:
    house = house or HouseConfig(1, 5.12, 3.2, 3.2, 0.95, 3.4, 9.2, 9.2)
    return SafetyContext(
        load_kw=load, pv_kw=pv, bess_soc=bess_soc, ev_soc=ev_soc,
        house=house, ev=EV, reactive_kvar=reactive, mode=mode,
    )


def oracle_project(proposed: ActionPair, ctx: SafetyContext):
    """Exhaustive scan: 1 W lattice over the EV action (plus the exact
    breakpoints), per-branch interval clamp for the BESS action."""
    xt = proposed.bess * 1000.0
    yt = proposed.ev * 1000.0
    cap = (ev_max_power(ctx.ev_soc, ctx.ev) if ctx.ev_soc is not None else 0.0) * 1000.0
    limit = ctx.grid_limit_kw() * 1000.0
    residual = (ctx.pv_kw - ctx.load_kw) * 1000.0
    g_lo, g_hi = -limit - residual, limit - residual
    ch = -ctx.house.bess_max_charge_kw * 1000.0 if ctx.bess_soc < ctx.house.bess_soc_cap - 1e-9 else 0.0
    dis = ctx.house.bess_max_discharge_kw * 1000.0 if ctx.bess_soc > 1e-9 else 0.0

    ys = np.arange(0.0, math.floor(cap) + 1.0)
    extras = [cap, xt - g_lo, xt - g_hi, ch - g_lo, ch - g_hi, dis - g_lo, dis - g_hi]
    ys = np.concatenate([ys, [e for e in extras if 0.0 <= e <= cap]])
    best = None
    for xl, xu in ((ch, 0.0), (0.0, dis)):
        lo = np.maximum(xl, g_lo + ys)
        hi = np.minimum(xu, g_hi + ys)
        feas = lo <= hi + 1e-9
        if not feas.any():
            continue
        x = np.clip(xt, lo[feas], hi[feas])
        y = ys[feas]
        obj = 0.5 * ((x - xt) ** 2 + (y - yt) ** 2)
        i = int(np.argmin(obj))
        cand = (float(x[i]), float(y[i]), float(obj[i]))
        if best is None or cand[2] < best[2]:
            best = cand
    return best  # (x W, y W, distance W^2) or None


def random_context(rng) -> tuple[SafetyContext, ActionPair]:
    house = HouseConfig(
        1,
        bess_capacity_kwh=float(rng.uniform(3, 16)),
        bess_max_charge_kw=float(rng.uniform(1.5, 4.0)),
        bess_max_discharge_kw=float(rng.uniform(1.5, 4.0)),
        bess_efficiency=0.95,
        pv_peak_kwp=3.4,
        grid_limit_active_kw=float(rng.uniform(3.0, 10.0)),
        grid_limit_apparent_kva=9.2,
    )
    has_ev = rng.uniform() < 0.7
    ctx = SafetyContext(
        load_kw=float(rng.uniform(0, 8)),
        pv_kw=float(rng.uniform(0, 6)),
        bess_soc=float(rng.choice([0.0, 1.0, rng.uniform(0, 1)])),
        ev_soc=float(rng.uniform(0, 1)) if has_ev else None,
        house=house,
        ev=EV,
    )
    proposed = ActionPair(
        float(rng.uniform(-1.5 * house.bess_max_charge_kw, 1.5 * house.bess_max_discharge_kw)),
        float(rng.uniform(0, EV.p_max_kw)),
    )
    return ctx, proposed


class TestCorrectActions:
    def test_grid_violation_split_between_actions(self):
        ctx = ctx_for(load=2.0, pv=0.0, bess_soc=0.5, ev_soc=0.5)
        res = correct_actions(ActionPair(-3.0, 7.4), ctx)
        assert res.safe_actions.bess == pytest.approx(-1.4, abs=1e-9)
        assert res.safe_actions.ev == pytest.approx(5.8, abs=1e-9)
        assert res.distance == pytest.approx(2.56e6, rel=1e-9)
        assert res.activated and not res.fallback_used

    def test_feasible_passthrough(self):
        ctx = ctx_for(load=1.0, pv=0.5, bess_soc=0.5, ev_soc=0.5)
        res = correct_actions(ActionPair(1.0, 2.0), ctx)
        assert res.safe_actions == ActionPair(1.0, 2.0)
        assert res.distance == 0.0
        assert not res.activated

    def test_empty_battery_discharge_blocked(self):
        ctx = ctx_for(bess_soc=0.0)
        res = correct_actions(ActionPair(2.0, 0.0), ctx)
        assert res.safe_actions.bess <= 0.0

    def test_infeasible_context_reports_sentinel(self):
        ctx = ctx_for(load=20.0, pv=0.0, bess_soc=0.0, ev_soc=None)
        res = correct_actions(ActionPair(0.0, 0.0), ctx)
        assert math.isinf(res.distance)
        assert res.activated

    def test_apparent_mode_tightens_limit(self):
        loose = correct_actions(ActionPair(-3.0, 7.4), ctx_for(mode="active"))
        tight = correct_actions(
            ActionPair(-3.0, 7.4), ctx_for(mode="apparent", reactive=6.0)
        )
        assert tight.distance > loose.distance

    def test_monotone_in_grid_limit(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            ctx, proposed = random_context(rng)
            prev = None
            for limit in (3.0, 5.0, 7.0, 9.0, 12.0):
                c = SafetyContext(
                    load_kw=ctx.load_kw, pv_kw=ctx.pv_kw, bess_soc=ctx.bess_soc,
                    ev_soc=ctx.ev_soc, house=HouseConfig(
                        1, ctx.house.bess_capacity_kwh, ctx.house.bess_max_charge_kw,
                        ctx.house.bess_max_discharge_kw, 0.95, 3.4, limit, limit,
                    ), ev=EV,
                )
                d = correct_actions(proposed, c).distance
                if prev is not None and math.isfinite(d):
                    assert d <= prev + 1e-6
                prev = d if math.isfinite(d) else prev

    def test_oracle_agreement_sample(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            ctx, proposed = random_context(rng)
            res = correct_actions(proposed, ctx)
            oracle = oracle_project(proposed, ctx)
            if oracle is None:
                assert math.isinf(res.distance)
                continue
            assert math.isfinite(res.distance)
            assert res.safe_actions.bess * 1000.0 == pytest.approx(oracle[0], abs=2.0)
            assert res.safe_actions.ev * 1000.0 == pytest.approx(oracle[1], abs=2.0)
            assert res.distance == pytest.approx(oracle[2], abs=4.0)

    def test_output_feasible(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            ctx, proposed = random_context(rng)
            res = correct_actions(proposed, ctx)
            if not math.isfinite(res.distance):
                continue
            a = res.safe_actions
            limit = ctx.grid_limit_kw()
            bess_kw = a.bess
            grid = grid_power(ctx.load_kw, a.ev, ctx.pv_kw, bess_kw)
            assert abs(grid) <= limit + 1e-6
            cap = ev_max_power(ctx.ev_soc, ctx.ev) if ctx.ev_soc is not None else 0.0
            assert -1e-6 <= a.ev <= cap + 1e-6
            assert -ctx.house.bess_max_charge_kw - 1e-6 <= bess_kw <= ctx.house.bess_max_discharge_kw + 1e-6


class TestFallbackPolicy:
    def test_high_load_caps_ev(self):
        ctx = ctx_for(load=8.0, pv=0.0, bess_soc=0.0, ev_soc=0.5)
        fb = fallback_policy(ctx)
        assert fb.bess is SELF_CONSUMPTION
        assert fb.ev == pytest.approx(1.2, abs=1e-9)

    def test_idle_house_full_ev_power(self):
        ctx = ctx_for(load=0.0, pv=0.0, bess_soc=0.0, ev_soc=0.5)
        assert fallback_policy(ctx).ev == pytest.approx(7.4)

    def test_no_ev(self):
        ctx = ctx_for(ev_soc=None)
        fb = fallback_policy(ctx)
        assert fb.bess is SELF_CONSUMPTION and fb.ev == 0.0

    def test_fallback_is_feasible_after_resolution(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            ctx, _ = random_context(rng)
            if ctx.load_kw - ctx.pv_kw > ctx.grid_limit_kw():
                continue  # nothing any action can do
            fb = fallback_policy(ctx)
            bess = resolve_self_consumption(ctx.load_kw, fb.ev, ctx.pv_kw, ctx.bess_soc, ctx.house)
            res = correct_actions(ActionPair(bess, fb.ev), ctx)
            assert res.distance == pytest.approx(0.0, abs=1e-6)

    def test_self_consumption_never_discharges_into_grid(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            ctx, _ = random_context(rng)
            fb = fallback_policy(ctx)
            bess = resolve_self_consumption(ctx.load_kw, fb.ev, ctx.pv_kw, ctx.bess_soc, ctx.house)
            grid = grid_power(ctx.load_kw, fb.ev, ctx.pv_kw, bess)
            if bess > 1e-9:
                assert grid <= 1e-9


class TestApply:
    def test_small_correction_kept(self):
        ctx = ctx_for(load=2.0, pv=0.0, bess_soc=0.5, ev_soc=0.5)
        # 0.7 kW of grid violation, split 0.35/0.35: distance 0.1225e6 W^2.
        res = apply(ActionPair(-0.5, 7.4), ctx)
        assert not res.fallback_used
        assert res.activated
        assert res.distance == pytest.approx(0.1225e6, rel=1e-9)
        assert res.safe_actions.bess == pytest.approx(-0.15, abs=1e-9)
        assert res.safe_actions.ev == pytest.approx(7.05, abs=1e-9)

    def test_large_correction_triggers_fallback(self):
        ctx = ctx_for(load=2.0, pv=0.0, bess_soc=0.5, ev_soc=0.5)
        res = apply(ActionPair(-3.0, 7.4), ctx)  # distance 2.56e6 > 1e6
        assert res.fallback_used and res.activated
        grid = grid_power(ctx.load_kw, res.safe_actions.ev, ctx.pv_kw, res.safe_actions.bess)
        assert abs(grid) <= ctx.grid_limit_kw() + 1e-6

    def test_threshold_configurable(self):
        ctx = ctx_for(load=2.0, pv=0.0, bess_soc=0.5, ev_soc=0.5)
        res = apply(ActionPair(-3.0, 7.4), ctx, d_threshold=1e9)
        assert not res.fallback_used
        assert res.safe_actions.bess == pytest.approx(-1.4, abs=1e-9)

    def test_feasible_passthrough(self):
        ctx = ctx_for(load=1.0, pv=0.0, bess_soc=0.5, ev_soc=0.5)
        res = apply(ActionPair(0.5, 1.0), ctx)
        assert res.safe_actions == ActionPair(0.5, 1.0)
        assert res.distance == 0.0 and not res.activated

    def test_infeasible_context_uses_fallback(self):
        ctx = ctx_for(load=20.0, pv=0.0, bess_soc=0.5, ev_soc=0.5)
        res = apply(ActionPair(0.0, 7.4), ctx)
        assert res.fallback_used

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        for _ in range(300):
            ctx, proposed = random_context(rng)
            first = apply(proposed, ctx)
            second = apply(first.safe_actions, ctx)
            assert second.safe_actions.bess == pytest.approx(first.safe_actions.bess, abs=1e-9)
            assert second.safe_actions.ev == pytest.approx(first.safe_actions.ev, abs=1e-9)
