"""Dense bounded-variable simplex and branch-and-bound over binaries.

Small, deterministic and dependency-free: receding-horizon dispatch programs
stay in the low hundreds of variables, so dense linear algebra is fine. Rows
are ranges ``lo <= a.x <= hi`` (equalities when lo == hi); every variable
carries explicit bounds. Anti-cycling falls back to Bland's rule after a
degenerate stall; branching picks the most fractional binary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Optional

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"

FEAS_TOL = 1e-7
INT_TOL = 1e-6
RCOST_TOL = 1e-9
_STALL_LIMIT = 100
_REFACTOR_EVERY = 150

INF = math.inf


@dataclass
class LinearProgram:
    """Minimize c.x subject to variable bounds and range rows."""

    costs: list[float] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    rows: list[tuple[dict[int, float], float, float]] = field(default_factory=list)
    binaries: set[int] = field(default_factory=set)

    @property
    def n_vars(self) -> int:
        return len(self.costs)

    def add_variable(
        self,
        lo: float = 0.0,
        hi: float = INF,
        cost: float = 0.0,
        *,
        binary: bool = False,
        name: Optional[str] = None,
    ) -> int:
        if lo > hi:
            raise ValueError(f"variable bounds inconsistent: [{lo}, {hi}]")
        if binary:
            lo, hi = max(lo, 0.0), min(hi, 1.0)
        idx = len(self.costs)
        self.costs.append(float(cost))
        self.lower.append(float(lo))
        self.upper.append(float(hi))
        self.names.append(name if name is not None else f"x{idx}")
        if binary:
            self.binaries.add(idx)
        return idx

    def add_constraint(
        self, coeffs: dict[int, float], lo: float = -INF, hi: float = INF
    ) -> int:
        if lo > hi:
            raise ValueError(f"constraint bounds inconsistent: [{lo}, {hi}]")
        clean = {}
        for j, a in coeffs.items():
            if not 0 <= j < self.n_vars:
                raise ValueError(f"unknown variable index {j}")
            if not math.isfinite(a):
                raise ValueError("constraint coefficients must be finite")
            if a != 0.0:
                clean[j] = float(a)
        self.rows.append((clean, float(lo), float(hi)))
        return len(self.rows) - 1

    def to_text(self) -> str:
        """Human-readable dump for debugging."""
        out = ["minimize"]
        terms = [
            f"{c:+g} {self.names[j]}" for j, c in enumerate(self.costs) if c != 0.0
        ]
        out.append("  " + (" ".join(terms) if terms else "0"))
        out.append("subject to")
        for coeffs, lo, hi in self.rows:
            expr = " ".join(f"{a:+g} {self.names[j]}" for j, a in sorted(coeffs.items()))
            if lo == hi:
                out.append(f"  {expr} = {lo:g}")
            else:
                left = f"{lo:g} <= " if math.isfinite(lo) else ""
                right = f" <= {hi:g}" if math.isfinite(hi) else ""
                out.append(f"  {left}{expr}{right}")
        out.append("bounds")
        for j in range(self.n_vars):
            kind = " binary" if j in self.binaries else ""
            out.append(f"  {self.lower[j]:g} <= {self.names[j]} <= {self.upper[j]:g}{kind}")
        return "\n".join(out)


@dataclass
class MipSolution:
    status: str
    objective: float
    x: np.ndarray
    gap: float = 0.0
    nodes: int = 0


# Nonbasic variable states.
_AT_LO = 0
_AT_HI = 1
_BASIC = 2
_FREE = 3


class _Simplex:
    """One solver instance over the standardized homogeneous system.

    Each row ``lo <= a.x <= hi`` becomes ``a.x + s = 0`` with the slack bounded
    in [-hi, -lo], so the rhs is identically zero and feasibility lives purely
    in the bounds.
    """

    def __init__(
        self,
        lp: LinearProgram,
        lower_override: Optional[dict[int, float]] = None,
        upper_override: Optional[dict[int, float]] = None,
        iteration_cap: int = 20000,
    ) -> None:
        n = lp.n_vars
        m = len(lp.rows)
        self.n, self.m = n, m
        self.iteration_cap = iteration_cap

        lower = np.array(lp.lower, dtype=float)
        upper = np.array(lp.upper, dtype=float)
        if lower_override:
            for j, v in lower_override.items():
                lower[j] = v
        if upper_override:
            for j, v in upper_override.items():
                upper[j] = v
        if np.any(lower > upper):
            self.trivially_infeasible = True
            return
        self.trivially_infeasible = False

        A = np.zeros((m, n + m), dtype=float)
        slo = np.empty(m)
        shi = np.empty(m)
        for i, (coeffs, lo, hi) in enumerate(lp.rows):
            for j, a in coeffs.items():
                A[i, j] = a
            A[i, n + i] = 1.0
            slo[i], shi[i] = -hi, -lo
        self.A = A
        self.lo = np.concatenate([lower, slo])
        self.hi = np.concatenate([upper, shi])
        self.c = np.concatenate([np.array(lp.costs, dtype=float), np.zeros(m)])

    def solve(self) -> tuple[str, float, Optional[np.ndarray]]:
        if self.trivially_infeasible:
            return INFEASIBLE, INF, None
        n, m = self.n, self.m
        N = n + m
        lo, hi = self.lo, self.hi

        # Initial point: nonbasic structurals at a finite bound, slacks basic.
        self.status = np.full(N, _AT_LO, dtype=np.int8)
        x = np.zeros(N)
        for j in range(n):
            if math.isfinite(lo[j]):
                x[j] = lo[j]
            elif math.isfinite(hi[j]):
                x[j] = hi[j]
                self.status[j] = _AT_HI
            else:
                x[j] = 0.0
                self.status[j] = _FREE
        self.basis = np.arange(n, N)
        self.status[n:] = _BASIC
        self.x = x
        self._recompute_basics()

        # Artificial columns absorb slack bound violations.
        viol_lo = self.x[self.basis] < lo[self.basis] - FEAS_TOL
        viol_hi = self.x[self.basis] > hi[self.basis] + FEAS_TOL
        art_cols = []
        art_rows = np.where(viol_lo | viol_hi)[0]
        if len(art_rows):
            for r in art_rows:
                b = self.basis[r]
                target = lo[b] if self.x[b] < lo[b] else hi[b]
                resid = self.x[b] - target  # slack moves to its bound
                sigma = 1.0 if resid > 0 else -1.0
                col = np.zeros(self.A.shape[0])
                col[r] = sigma
                art_cols.append((col, abs(resid), r, target))
            k = len(art_cols)
            self.A = np.hstack([self.A, np.zeros((m, k))])
            self.lo = np.concatenate([self.lo, np.zeros(k)])
            self.hi = np.concatenate([self.hi, np.full(k, INF)])
            self.c = np.concatenate([self.c, np.zeros(k)])
            self.x = np.concatenate([self.x, np.zeros(k)])
            self.status = np.concatenate([self.status, np.full(k, _AT_LO, dtype=np.int8)])
            phase1_cost = np.zeros(N + k)
            for t, (col, value, r, target) in enumerate(art_cols):
                jart = N + t
                self.A[:, jart] = col
                b = self.basis[r]
                self.x[b] = target
                self.status[b] = _AT_LO if target == self.lo[b] else _AT_HI
                self.basis[r] = jart
                self.x[jart] = value
                self.status[jart] = _BASIC
                phase1_cost[jart] = 1.0
            lo, hi = self.lo, self.hi
            self._refactor()

            res = self._iterate(phase1_cost)
            if res == ITERATION_LIMIT:
                return ITERATION_LIMIT, INF, None
            infeas = float(np.sum(self.x[N:]))
            if infeas > 1e-6:
                return INFEASIBLE, INF, None
            # Freeze artificials at zero for phase 2.
            self.hi[N:] = 0.0
            self.x[N:] = np.maximum(self.x[N:], 0.0)

        cost = np.zeros(len(self.x))
        cost[:N] = self.c[:N]
        res = self._iterate(cost)
        if res == "unbounded":
            raise ValueError("linear program is unbounded")
        if res == ITERATION_LIMIT:
            return ITERATION_LIMIT, INF, None
        obj = float(cost @ self.x)
        return OPTIMAL, obj, self.x[: self.n].copy()

    # -- internals ---------------------------------------------------------

    def _refactor(self) -> None:
        B = self.A[:, self.basis]
        self.B_inv = np.linalg.inv(B)

    def _recompute_basics(self) -> None:
        self._refactor()
        nonbasic_mask = np.ones(self.A.shape[1], dtype=bool)
        nonbasic_mask[self.basis] = False
        rhs = -self.A[:, nonbasic_mask] @ self.x[nonbasic_mask]
        self.x[self.basis] = self.B_inv @ rhs

    def _iterate(self, cost: np.ndarray) -> str:
        lo, hi = self.lo, self.hi
        bland = False
        stall = 0
        last_obj = INF
        pivots_since_refactor = 0
        for _ in range(self.iteration_cap):
            y = cost[self.basis] @ self.B_inv
            d = cost - y @ self.A
            d[self.basis] = 0.0

            at_lo = self.status == _AT_LO
            at_hi = self.status == _AT_HI
            free = self.status == _FREE
            improving = (at_lo & (d < -RCOST_TOL)) | (at_hi & (d > RCOST_TOL)) | (
                free & (np.abs(d) > RCOST_TOL)
            )
            if not improving.any():
                return OPTIMAL
            idxs = np.where(improving)[0]
            if bland:
                j = int(idxs[0])
            else:
                j = int(idxs[np.argmax(np.abs(d[idxs]))])

            sigma = 1.0 if (self.status[j] == _AT_LO or (self.status[j] == _FREE and d[j] < 0)) else -1.0
            u = self.B_inv @ self.A[:, j]

            # Ratio test: basics stay in bounds, entering may flip bounds.
            xb = self.x[self.basis]
            bound_step = hi[j] - lo[j] if self.status[j] != _FREE else INF
            move = sigma * u
            limits = np.full(self.m, INF)
            pos = move > 1e-11
            neg = move < -1e-11
            if pos.any():
                limits[pos] = (xb[pos] - lo[self.basis[pos]]) / move[pos]
            if neg.any():
                limits[neg] = (xb[neg] - hi[self.basis[neg]]) / move[neg]
            np.maximum(limits, 0.0, out=limits)
            min_row_limit = float(limits.min()) if self.m else INF
            step = min(bound_step, min_row_limit)
            if not math.isfinite(step):
                return "unbounded"
            if min_row_limit < bound_step - 1e-12:
                ties = np.where(limits <= min_row_limit + 1e-12)[0]
                if bland and len(ties) > 1:
                    leave = int(ties[np.argmin(self.basis[ties])])
                else:
                    leave = int(ties[0])
                step = min_row_limit
            else:
                leave = -1

            obj_now = float(cost @ self.x)
            if obj_now >= last_obj - 1e-12:
                stall += 1
                if stall > _STALL_LIMIT:
                    bland = True
            else:
                stall = 0
            last_obj = obj_now

            if leave < 0:
                # Bound flip: the entering variable crosses to its other bound.
                self.x[self.basis] = xb - move * step
                self.x[j] = self.x[j] + sigma * step
                self.status[j] = _AT_HI if self.status[j] == _AT_LO else _AT_LO
                continue

            jl = int(self.basis[leave])
            self.x[self.basis] = xb - move * step
            self.x[j] = self.x[j] + sigma * step
            # Leaving variable parks at the bound it hit.
            hit_lo = move[leave] > 0
            self.x[jl] = lo[jl] if hit_lo else hi[jl]
            self.status[jl] = _AT_LO if hit_lo else _AT_HI
            self.basis[leave] = j
            self.status[j] = _BASIC

            pivots_since_refactor += 1
            if pivots_since_refactor >= _REFACTOR_EVERY:
                self._recompute_basics()
                pivots_since_refactor = 0
            else:
                # Product-form update of the basis inverse.
                ur = u[leave]
                if abs(ur) < 1e-11:
                    self._recompute_basics()
                    pivots_since_refactor = 0
                else:
                    row = self.B_inv[leave, :] / ur
                    self.B_inv -= np.outer(u, row)
                    self.B_inv[leave, :] = row
        return ITERATION_LIMIT


def solve_lp(
    lp: LinearProgram,
    *,
    lower_override: Optional[dict[int, float]] = None,
    upper_override: Optional[dict[int, float]] = None,
    iteration_cap: int = 20000,
) -> MipSolution:
    """Solve the LP relaxation (binaries treated as [0,1] continuous)."""
    simplex = _Simplex(lp, lower_override, upper_override, iteration_cap)
    status, obj, x = simplex.solve()
    if status != OPTIMAL:
        return MipSolution(status, INF, np.zeros(lp.n_vars), gap=INF)
    return MipSolution(OPTIMAL, obj, x)


def _row_activity(lp: LinearProgram, x: np.ndarray) -> list[float]:
    return [sum(a * x[j] for j, a in coeffs.items()) for coeffs, _, _ in lp.rows]


def _feasible(lp: LinearProgram, x: np.ndarray, tol: float = INT_TOL) -> bool:
    for j in range(lp.n_vars):
        if x[j] < lp.lower[j] - tol or x[j] > lp.upper[j] + tol:
            return False
    for (coeffs, lo, hi), act in zip(lp.rows, _row_activity(lp, x)):
        if act < lo - tol or act > hi + tol:
            return False
    return True


def _try_repair(lp: LinearProgram, x: np.ndarray) -> Optional[np.ndarray]:
    """Round binaries without touching continuous variables.

    Per binary, pick the value in {0,1} that keeps every row it appears in
    feasible; verify the full candidate afterwards. Returns None when any
    binary genuinely conflicts.
    """
    x2 = x.copy()
    rows_of: dict[int, list[int]] = {}
    for i, (coeffs, _, _) in enumerate(lp.rows):
        for j in coeffs:
            if j in lp.binaries:
                rows_of.setdefault(j, []).append(i)
    for b in sorted(lp.binaries):
        frac = x2[b]
        candidates = [round(frac)] if abs(frac - round(frac)) <= INT_TOL else [0.0, 1.0]
        chosen = None
        for v in candidates if len(candidates) == 1 else sorted(
            candidates, key=lambda v: abs(v - frac)
        ):
            x2[b] = v
            ok = True
            for i in rows_of.get(b, []):
                coeffs, lo, hi = lp.rows[i]
                act = sum(a * x2[j] for j, a in coeffs.items())
                if act < lo - INT_TOL or act > hi + INT_TOL:
                    ok = False
                    break
            if ok and lp.lower[b] - INT_TOL <= v <= lp.upper[b] + INT_TOL:
                chosen = v
                break
        if chosen is None:
            return None
        x2[b] = chosen
    return x2 if _feasible(lp, x2) else None


def solve_milp(
    lp: LinearProgram,
    *,
    gap_tol: float = 1e-6,
    node_limit: int = 10000,
    iteration_cap: int = 20000,
) -> MipSolution:
    """Best-first branch-and-bound on fractional binaries.

    Deterministic: node order is (bound, insertion counter) and branching
    picks the most fractional binary (lowest index on ties).
    """
    if not lp.binaries:
        return solve_lp(lp, iteration_cap=iteration_cap)

    incumbent: Optional[np.ndarray] = None
    incumbent_obj = INF
    counter = 0
    heap: list[tuple[float, int, dict[int, float], dict[int, float]]] = []
    heappush(heap, (-INF, counter, {}, {}))
    nodes = 0
    hit_limit = False

    while heap:
        parent_bound, _, lo_over, hi_over = heappop(heap)
        if parent_bound >= incumbent_obj - gap_tol * max(1.0, abs(incumbent_obj)):
            continue
        if nodes >= node_limit:
            hit_limit = True
            break
        nodes += 1
        rel = solve_lp(
            lp, lower_override=lo_over, upper_override=hi_over, iteration_cap=iteration_cap
        )
        if rel.status == INFEASIBLE:
            continue
        if rel.status == ITERATION_LIMIT:
            hit_limit = True
            continue
        if rel.objective >= incumbent_obj - gap_tol * max(1.0, abs(incumbent_obj)):
            continue

        fracs = {b: abs(rel.x[b] - round(rel.x[b])) for b in lp.binaries}
        if max(fracs.values()) <= INT_TOL:
            if rel.objective < incumbent_obj:
                incumbent, incumbent_obj = rel.x.copy(), rel.objective
            continue

        repaired = _try_repair(lp, rel.x)
        if repaired is not None:
            obj = float(np.dot(lp.costs, repaired))
            if obj < incumbent_obj:
                incumbent, incumbent_obj = repaired, obj
            if obj <= rel.objective + 1e-9:
                continue  # node solved to optimality by the repair

        branch = max(
            (b for b in lp.binaries if fracs[b] > INT_TOL),
            key=lambda b: (fracs[b], -b),
        )
        for fixed in (0.0, 1.0):
            counter += 1
            lo2, hi2 = dict(lo_over), dict(hi_over)
            if fixed == 0.0:
                hi2[branch] = 0.0
            else:
                lo2[branch] = 1.0
            heappush(heap, (rel.objective, counter, lo2, hi2))

    best_remaining = min((node[0] for node in heap), default=incumbent_obj)
    if incumbent is None:
        if hit_limit:
            return MipSolution(ITERATION_LIMIT, INF, np.zeros(lp.n_vars), gap=INF, nodes=nodes)
        return MipSolution(INFEASIBLE, INF, np.zeros(lp.n_vars), gap=INF, nodes=nodes)
    gap = max(0.0, (incumbent_obj - best_remaining) / max(1.0, abs(incumbent_obj)))
    status = ITERATION_LIMIT if hit_limit else OPTIMAL
    return MipSolution(
        status, incumbent_obj, incumbent, gap=0.0 if not hit_limit else gap, nodes=nodes
    )
