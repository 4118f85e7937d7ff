"""CPLEX LP file export."""
from __future__ import annotations

from .problem import MilpProblem

_SENSE = {"<=": "<=", ">=": ">=", "=": "="}


def _num(x: float) -> str:
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def _expr(coeffs, names) -> str:
    if not coeffs:
        return "0 " + names[0] if names else "0"
    parts = []
    for k, (j, a) in enumerate(sorted(coeffs.items())):
        sign = "-" if a < 0 else "+"
        mag = _num(abs(a))
        term = names[j] if mag == "1" else f"{mag} {names[j]}"
        parts.append(("- " if sign == "-" else "") + term if k == 0 else f"{sign} {term}")
    return " ".join(parts)


def export_lp(problem: MilpProblem) -> str:
    names = problem.names
    out = [f"\\ Problem: {problem.name}", "Maximize"]
    obj = _expr(problem.objective, names) if problem.objective else ("0 " + names[0] if names else "")
    if problem.objective_constant:
        c = problem.objective_constant
        obj = (obj + " " if obj else "") + ("+ " if c >= 0 else "- ") + _num(abs(c))
    out.append(" obj: " + obj if obj else " obj:")
    out.append("Subject To")
    for i, con in enumerate(problem.constraints):
        lhs = _expr(con.coeffs, names) if con.coeffs else "0 " + names[0]
        out.append(f" c{i}: {lhs} {_SENSE[con.sense]} {_num(con.rhs)}")
    out.append("Bounds")
    for j, name in enumerate(names):
        if not problem.binary[j]:
            out.append(f" {_num(problem.lo[j])} <= {name} <= {_num(problem.hi[j])}")
    out.append("Binary")
    for j, name in enumerate(names):
        if problem.binary[j]:
            out.append(f" {name}")
    out.append("End")
    return "\n".join(out) + "\n"
