"""Independent LP/MILP references for tests, backed by scipy's HiGHS."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog as scipy_linprog

from hemsim.mathprog import LinearProgram


def scipy_solve_lp(lp: LinearProgram, fixed: dict[int, float] | None = None):
    """Solve the LP relaxation with optional variables fixed; returns the
    scipy result object."""
    n = lp.n_vars
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for coeffs, lo, hi in lp.rows:
        a = np.zeros(n)
        for j, v in coeffs.items():
            a[j] = v
        if lo == hi:
            A_eq.append(a)
            b_eq.append(lo)
            continue
        if math.isfinite(hi):
            A_ub.append(a)
            b_ub.append(hi)
        if math.isfinite(lo):
            A_ub.append(-a)
            b_ub.append(-lo)
    bounds = list(zip(lp.lower, lp.upper))
    if fixed:
        for j, v in fixed.items():
            bounds[j] = (v, v)
    return scipy_linprog(
        lp.costs,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )


def scipy_milp_by_enumeration(lp: LinearProgram) -> float:
    """Exact MILP optimum: enumerate all binary assignments, solve each LP."""
    binaries = sorted(lp.binaries)
    best = math.inf
    for bits in itertools.product([0.0, 1.0], repeat=len(binaries)):
        res = scipy_solve_lp(lp, fixed=dict(zip(binaries, bits)))
        if res.status == 0:
            best = min(best, res.fun)
    return best
