"""Depth-first branch-and-bound over binaries, plus a HiGHS backend for large problems."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .problem import MapResult, MilpProblem, Status
from .simplex import solve_lp

INT_TOL = 1e-7
GAP = 1e-7


@dataclass(frozen=True)
class Limits:
    max_nodes: int = 200_000
    time_limit: float = 600.0
    rel_gap: float = 0.0  # HiGHS only; 0 proves optimality


def solve_bb(problem: MilpProblem, limits: Limits = Limits(), trace: list | None = None) -> MapResult:
    """Exact MILP solve.

    Branches on the first fractional binary in declaration order, exploring
    the nearer rounding first. ``trace`` (if given) receives one (node bound,
    incumbent at that time, lower bounds, upper bounds) tuple per solved node.
    """
    c, A, senses, b, lo0, hi0, is_bin = problem.dense()
    const = problem.objective_constant
    names = list(problem.names)
    start = time.monotonic()
    best_x, best = None, -math.inf
    nodes = 0
    stack = [(lo0.copy(), hi0.copy())]
    limited = False
    while stack:
        if nodes >= limits.max_nodes or time.monotonic() - start > limits.time_limit:
            limited = True
            break
        lo, hi = stack.pop()
        nodes += 1
        lp = solve_lp(c, A, senses, b, lo, hi)
        if lp.status != "optimal":
            if lp.status == "iteration_limit":
                limited = True
            continue
        bound = lp.objective + const
        if trace is not None:
            trace.append((bound, best, lo, hi))
        if bound <= best + GAP:
            continue
        x = lp.x
        frac = np.flatnonzero(is_bin & (np.abs(x - np.round(x)) > INT_TOL))
        if len(frac) == 0:
            x = _polish(c, A, senses, b, lo, hi, x, is_bin)
            if x is None:
                continue
            val = float(c @ x) + const
            if val > best:
                best, best_x = val, x
            continue
        j = int(frac[0])
        down = (lo.copy(), hi.copy())
        down[1][j] = 0.0
        up = (lo.copy(), hi.copy())
        up[0][j] = 1.0
        # the child pushed last is explored first
        if x[j] >= 0.5:
            stack.extend([down, up])
        else:
            stack.extend([up, down])
    if best_x is None:
        return MapResult(Status.RESOURCE_LIMIT if limited else Status.INFEASIBLE, -math.inf, None, names, nodes)
    status = Status.RESOURCE_LIMIT if limited else Status.OPTIMAL
    return MapResult(status, best, best_x, names, nodes)


def _polish(c, A, senses, b, lo, hi, x, is_bin):
    """Snap binaries and re-solve the continuous part."""
    xb = np.round(x[is_bin])
    lo, hi = lo.copy(), hi.copy()
    lo[is_bin] = xb
    hi[is_bin] = xb
    lp = solve_lp(c, A, senses, b, lo, hi)
    if lp.status != "optimal":
        return None
    out = lp.x.copy()
    out[is_bin] = xb
    return out


def solve_highs(problem: MilpProblem, limits: Limits = Limits()) -> MapResult:
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import csr_array

    n = len(problem)
    names = list(problem.names)
    if n == 0:
        return MapResult(Status.OPTIMAL, problem.objective_constant, np.zeros(0), names, 0)
    c = np.zeros(n)
    for j, v in problem.objective.items():
        c[j] = v
    rows, cols, vals, lb, ub = [], [], [], [], []
    for i, con in enumerate(problem.constraints):
        for j, a in con.coeffs.items():
            rows.append(i)
            cols.append(j)
            vals.append(a)
        lb.append(con.rhs if con.sense in (">=", "=") else -np.inf)
        ub.append(con.rhs if con.sense in ("<=", "=") else np.inf)
    cons = []
    if problem.constraints:
        A = csr_array((vals, (rows, cols)), shape=(len(problem.constraints), n))
        cons = [LinearConstraint(A, lb, ub)]
    res = milp(-c, constraints=cons, integrality=np.array(problem.binary, dtype=int),
               bounds=Bounds(problem.lo, problem.hi),
               options={"time_limit": limits.time_limit, "node_limit": limits.max_nodes,
                        "mip_rel_gap": limits.rel_gap, "presolve": True})
    if res.status == 0:
        x = np.asarray(res.x, dtype=float)
        b = np.array(problem.binary, dtype=bool)
        x[b] = np.round(x[b])
        return MapResult(Status.OPTIMAL, float(c @ x) + problem.objective_constant, x, names, 0)
    if res.status == 2:
        return MapResult(Status.INFEASIBLE, -math.inf, None, names, 0)
    if res.x is not None:
        x = np.asarray(res.x, dtype=float)
        return MapResult(Status.RESOURCE_LIMIT, float(c @ x) + problem.objective_constant, x, names, 0)
    return MapResult(Status.RESOURCE_LIMIT, -math.inf, None, names, 0)


def solve(problem: MilpProblem, backend: str = "auto", limits: Limits = Limits()) -> MapResult:
    """``auto`` uses the built-in solver for small problems and HiGHS otherwise."""
    if backend == "bb" or (backend == "auto" and len(problem) <= 60 and len(problem.constraints) <= 120):
        return solve_bb(problem, limits)
    if backend in ("highs", "auto"):
        return solve_highs(problem, limits)
    raise ValueError(f"unknown MILP backend {backend!r}")
