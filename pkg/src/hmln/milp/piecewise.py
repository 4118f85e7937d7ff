"""Piecewise-linear approximations of univariate soft-term functions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import MilpProblem


@dataclass(frozen=True)
class PiecewiseSpec:
    breakpoints: np.ndarray
    values: np.ndarray
    max_error: float

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if len(bp) < 2 or np.any(np.diff(bp) <= 0):
            raise ValueError("need at least two strictly increasing breakpoints")

    @property
    def segments(self) -> int:
        return len(self.breakpoints) - 1

    def __call__(self, x):
        return np.interp(x, self.breakpoints, self.values)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)


def interpolation_error(f, breakpoints, per_segment: int = 256) -> float:
    bp = np.asarray(breakpoints, dtype=float)
    grid = np.concatenate([np.linspace(a, b, per_segment + 1)[:-1] for a, b in zip(bp[:-1], bp[1:])] + [bp[-1:]])
    vals = np.asarray(f(bp), dtype=float)
    return float(np.max(np.abs(np.asarray(f(grid), dtype=float) - np.interp(grid, bp, vals))))


def piecewise_linearize(f, lo: float, hi: float, segments: int = 16, breakpoints=None) -> PiecewiseSpec:
    """Interpolate ``f`` at equally spaced breakpoints (or the given ones) on [lo, hi]."""
    if not lo < hi:
        raise ValueError("piecewise range needs lo < hi")
    if segments < 1:
        raise ValueError("segments must be at least 1")
    bp = np.linspace(lo, hi, segments + 1) if breakpoints is None else np.asarray(breakpoints, dtype=float)
    vals = np.asarray(f(bp), dtype=float)
    return PiecewiseSpec(bp, vals, interpolation_error(f, bp))


def add_lambda(problem: MilpProblem, spec: PiecewiseSpec, prefix: str) -> tuple[list[int], list[int]]:
    """Convex-combination weights with adjacency enforced by segment binaries.

    Returns (lambda indices, segment binary indices). The caller links
    sum(lambda_b * breakpoint_b) to its argument and reads function values
    as sum(lambda_b * value_b).
    """
    nb = len(spec.breakpoints)
    lam = [problem.add_continuous(f"{prefix}_l{b}", 0.0, 1.0) for b in range(nb)]
    seg = [problem.add_binary(f"{prefix}_y{s}") for s in range(nb - 1)]
    problem.add_constraint({j: 1.0 for j in lam}, "=", 1.0)
    problem.add_constraint({j: 1.0 for j in seg}, "=", 1.0)
    for b in range(nb):
        row = {lam[b]: 1.0}
        if b > 0:
            row[seg[b - 1]] = -1.0
        if b < nb - 1:
            row[seg[b]] = -1.0
        problem.add_constraint(row, "<=", 0.0)
    return lam, seg
