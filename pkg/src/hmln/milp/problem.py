"""Mixed binary/continuous linear programs (maximization)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

SENSES = ("<=", ">=", "=")


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    RESOURCE_LIMIT = "ResourceLimit"


class ProblemError(ValueError):
    pass


@dataclass
class Constraint:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str = ""


class MilpProblem:
    """Variables are indexed by declaration order; the objective is maximized."""

    def __init__(self, name: str = "map"):
        self.name = name
        self.names: list[str] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.binary: list[bool] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self._by_name: dict[str, int] = {}

    def __len__(self):
        return len(self.names)

    @property
    def n_binaries(self) -> int:
        return sum(self.binary)

    def _add(self, name, lo, hi, binary):
        if name in self._by_name:
            raise ProblemError(f"duplicate variable {name!r}")
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ProblemError(f"variable {name!r} needs finite bounds")
        if lo > hi:
            raise ProblemError(f"variable {name!r} has empty bounds [{lo}, {hi}]")
        self._by_name[name] = len(self.names)
        self.names.append(name)
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        self.binary.append(binary)
        return len(self.names) - 1

    def add_binary(self, name: str) -> int:
        return self._add(name, 0.0, 1.0, True)

    def add_continuous(self, name: str, lo: float, hi: float) -> int:
        return self._add(name, lo, hi, False)

    def index(self, name: str) -> int:
        return self._by_name[name]

    def add_constraint(self, coeffs: dict[int, float], sense: str, rhs: float, name: str = "") -> None:
        if sense not in SENSES:
            raise ProblemError(f"unknown sense {sense!r}")
        clean = {}
        for j, a in coeffs.items():
            if not 0 <= j < len(self.names):
                raise ProblemError(f"constraint refers to undeclared variable {j}")
            if a != 0.0:
                clean[j] = clean.get(j, 0.0) + float(a)
        self.constraints.append(Constraint(clean, sense, float(rhs), name))

    def add_objective(self, j: int, coef: float) -> None:
        if not 0 <= j < len(self.names):
            raise ProblemError(f"objective refers to undeclared variable {j}")
        self.objective[j] = self.objective.get(j, 0.0) + float(coef)

    # --- evaluation ------------------------------------------------------------
    def evaluate(self, x) -> float:
        return self.objective_constant + sum(c * x[j] for j, c in self.objective.items())

    def violation(self, x) -> float:
        """Largest violation of bounds, constraints or integrality."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        lo, hi = np.array(self.lo), np.array(self.hi)
        if len(x):
            worst = max(worst, float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
            b = np.array(self.binary, dtype=bool)
            if b.any():
                worst = max(worst, float(np.max(np.abs(x[b] - np.round(x[b])))))
        for c in self.constraints:
            lhs = sum(a * x[j] for j, a in c.coeffs.items())
            if c.sense == "<=":
                worst = max(worst, lhs - c.rhs)
            elif c.sense == ">=":
                worst = max(worst, c.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - c.rhs))
        return worst

    def dense(self):
        """(c, A, senses, b, lo, hi, integrality) as numpy arrays."""
        n, m = len(self.names), len(self.constraints)
        c = np.zeros(n)
        for j, v in self.objective.items():
            c[j] = v
        A = np.zeros((m, n))
        for i, con in enumerate(self.constraints):
            for j, a in con.coeffs.items():
                A[i, j] = a
        senses = [con.sense for con in self.constraints]
        b = np.array([con.rhs for con in self.constraints], dtype=float)
        return c, A, senses, b, np.array(self.lo), np.array(self.hi), np.array(self.binary, dtype=bool)


@dataclass
class MapResult:
    status: Status
    objective: float = -math.inf
    x: np.ndarray | None = None
    names: list[str] = field(default_factory=list)
    nodes: int = 0

    @property
    def assignment(self) -> dict[str, float]:
        if self.x is None:
            return {}
        return dict(zip(self.names, (float(v) for v in self.x)))

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL
