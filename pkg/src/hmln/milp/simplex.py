"""Bounded-variable primal simplex for small dense LPs.

Solves max c'x s.t. rows of A x (<=, >=, =) b, lo <= x <= hi. Slacks turn
every row into an equality; Phase 1 drives artificial variables to zero.
Pricing is Dantzig's rule, falling back to Bland's rule after a run of
degenerate pivots.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9
REFACTOR = 50
DEGENERATE_RUN = 30


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None = None
    objective: float = float("nan")
    iterations: int = 0


class _Tableau:
    def __init__(self, A, b, lo, hi, basis, at_hi):
        self.A, self.b, self.lo, self.hi = A, b, lo, hi
        self.basis = basis
        self.at_hi = at_hi  # nonbasic position flags
        self.refactor()

    def nonbasic_values(self):
        x = np.where(self.at_hi, self.hi, self.lo)
        x[self.basis] = 0.0
        return x

    def refactor(self):
        B = self.A[:, self.basis]
        xn = self.nonbasic_values()
        self.T = np.linalg.solve(B, self.A)
        self.beta = np.linalg.solve(B, self.b - self.A @ xn)
        self.since = 0

    def x(self):
        x = self.nonbasic_values()
        x[self.basis] = self.beta
        return x

    def run(self, c, fixed, max_iter):
        """Optimize c'x from the current basis; ``fixed`` marks columns that may not enter."""
        m, n = self.T.shape
        degenerate = 0
        for it in range(max_iter):
            d = c - c[self.basis] @ self.T
            d[self.basis] = 0.0
            up = (~self.at_hi) & (d > TOL) & (self.hi > self.lo)
            down = self.at_hi & (d < -TOL) & (self.hi > self.lo)
            cand = (up | down) & ~fixed
            cand[self.basis] = False
            if not cand.any():
                return "optimal", it
            idx = np.flatnonzero(cand)
            if degenerate >= DEGENERATE_RUN:
                j = int(idx[0])
            else:
                j = int(idx[np.argmax(np.abs(d[idx]))])
            direction = 1.0 if up[j] else -1.0
            col = direction * self.T[:, j]
            step = self.hi[j] - self.lo[j]
            leave, leave_hi = -1, False
            bl = self.lo[self.basis]
            bh = self.hi[self.basis]
            for i in range(m):
                a = col[i]
                if a > TOL:
                    r = (self.beta[i] - bl[i]) / a
                    to_hi = False
                elif a < -TOL:
                    r = (bh[i] - self.beta[i]) / (-a)
                    to_hi = True
                else:
                    continue
                r = max(r, 0.0)
                if r < step - TOL:
                    step, leave, leave_hi = r, i, to_hi
                elif r <= step + TOL and leave >= 0 and self.basis[i] < self.basis[leave]:
                    leave, leave_hi = i, to_hi
            if not np.isfinite(step):
                return "unbounded", it
            degenerate = degenerate + 1 if step <= TOL else 0
            self.beta -= step * col
            if leave < 0:
                self.at_hi[j] = not self.at_hi[j]
                continue
            entering_value = (self.lo[j] if not self.at_hi[j] else self.hi[j]) + direction * step
            out = self.basis[leave]
            self.at_hi[out] = leave_hi
            piv = self.T[leave, j]
            self.T[leave] /= piv
            others = np.arange(m) != leave
            self.T[others] -= np.outer(self.T[others, j], self.T[leave])
            self.basis[leave] = j
            self.at_hi[j] = False
            self.beta[leave] = entering_value
            self.since += 1
            if self.since >= REFACTOR:
                self.refactor()
        return "iteration_limit", max_iter


def solve_lp(c, A, senses, b, lo, hi, max_iter: int = 50_000) -> LpResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(len(b), len(c))
    b = np.asarray(b, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m, n = A.shape
    if np.any(lo > hi + TOL):
        return LpResult("infeasible")
    if m == 0:
        x = np.where(c > 0, hi, lo)
        return LpResult("optimal", x, float(c @ x))

    # slacks: row + s = b with s >= 0 (<=), s <= 0 (>=), s = 0 (=)
    slo = np.array([0.0 if s == "<=" else (-np.inf if s == ">=" else 0.0) for s in senses])
    shi = np.array([np.inf if s == "<=" else 0.0 for s in senses])
    x0 = lo.copy()
    resid = b - A @ x0
    slack_ok = (resid >= slo - TOL) & (resid <= shi + TOL)
    need = np.flatnonzero(~slack_ok)
    k = len(need)
    art = np.zeros((m, k))
    for col, i in enumerate(need):
        # slack sits at the bound nearest the residual, the artificial absorbs the rest
        target = min(max(resid[i], slo[i]), shi[i])
        art[i, col] = 1.0 if resid[i] - target > 0 else -1.0
    full = np.hstack([A, np.eye(m), art])
    flo = np.concatenate([lo, slo, np.zeros(k)])
    fhi = np.concatenate([hi, shi, np.full(k, np.inf)])
    N = n + m + k
    basis = np.empty(m, dtype=np.int64)
    at_hi = np.zeros(N, dtype=bool)
    for i in range(m):
        basis[i] = n + i
    for col, i in enumerate(need):
        basis[i] = n + m + col
        # the nonbasic slack rests at its upper bound unless that is +inf
        at_hi[n + i] = np.isfinite(shi[i]) and min(max(resid[i], slo[i]), shi[i]) == shi[i]
    tab = _Tableau(full, b, flo, fhi, basis, at_hi)
    total = 0
    if k:
        c1 = np.zeros(N)
        c1[n + m:] = -1.0
        status, it = tab.run(c1, np.zeros(N, dtype=bool), max_iter)
        total += it
        if status == "iteration_limit":
            return LpResult(status, iterations=total)
        if tab.x()[n + m:].sum() > 1e-7:
            return LpResult("infeasible", iterations=total)
        tab.hi[n + m:] = 0.0
        tab.refactor()
    c2 = np.concatenate([c, np.zeros(m + k)])
    fixed = np.zeros(N, dtype=bool)
    fixed[n + m:] = True
    status, it = tab.run(c2, fixed, max_iter)
    total += it
    if status != "optimal":
        return LpResult(status, iterations=total)
    tab.refactor()
    x = np.clip(tab.x()[:n], lo, hi)
    return LpResult("optimal", x, float(c @ x), total)
