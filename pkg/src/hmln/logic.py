"""First-order representation for hybrid Markov logic.

Formulas are immutable trees. Variables are identifiers starting with a
lowercase letter; everything else in an argument position is a constant.
Symbolic atoms take values in {0, 1}, sub-symbolic atoms take real values.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Mapping, Sequence, Union

import numpy as np


class ConfigError(ValueError):
    """Malformed model structure (unknown domain, arity mismatch, ...)."""


class EvaluationError(ValueError):
    """A value needed for evaluation is missing."""


def is_variable(name: str) -> bool:
    return name[:1].islower()


@dataclass(frozen=True)
class Domain:
    name: str
    constants: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "constants", tuple(self.constants))
        if len(set(self.constants)) != len(self.constants):
            raise ConfigError(f"duplicate constant in domain {self.name}")

    def __len__(self) -> int:
        return len(self.constants)

    def index(self, constant: str) -> int:
        try:
            return self._lookup[constant]
        except KeyError:
            raise ConfigError(f"{constant!r} is not a constant of domain {self.name}") from None

    @property
    def _lookup(self) -> dict[str, int]:
        cached = self.__dict__.get("_lookup_cache")
        if cached is None:
            cached = {c: i for i, c in enumerate(self.constants)}
            object.__setattr__(self, "_lookup_cache", cached)
        return cached


class Kind(str, Enum):
    SYMBOLIC = "symbolic"
    SUBSYMBOLIC = "subsymbolic"


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    arg_domains: tuple[str, ...]
    kind: Kind = Kind.SYMBOLIC

    def __post_init__(self):
        object.__setattr__(self, "arg_domains", tuple(self.arg_domains))

    @property
    def arity(self) -> int:
        return len(self.arg_domains)


# --- formula tree -----------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def __str__(self):
        return f"{self.predicate}({','.join(self.args)})"


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    args: tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class Or:
    args: tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Iff:
    lhs: "Formula"
    rhs: "Formula"


NumTerm = Union[Atom, float]


@dataclass(frozen=True)
class SoftEq:
    """Soft equality lhs == rhs, valued -(lhs - rhs)^2."""

    lhs: NumTerm
    rhs: NumTerm


@dataclass(frozen=True)
class SoftIneq:
    """Soft inequality lhs < rhs (op '<') or lhs > rhs (op '>').

    Penalty-on-violation: -softplus(a * (lhs - rhs)) for '<' and
    -softplus(a * (rhs - lhs)) for '>'.
    """

    lhs: NumTerm
    rhs: NumTerm
    op: str = "<"
    softness: float = 1.0

    def __post_init__(self):
        if self.op not in ("<", ">"):
            raise ConfigError(f"unknown inequality operator {self.op!r}")
        if not self.softness > 0:
            raise ConfigError("softness must be positive")


@dataclass(frozen=True)
class Hybrid:
    """Product of a continuous part and a symbolic indicator.

    ``symbolic`` may be None for a purely continuous property.
    """

    continuous: "Continuous"
    symbolic: "Formula | None" = None


Formula = Union[Atom, Not, And, Or, Implies, Iff]
Continuous = Union[SoftEq, SoftIneq, Atom]
Node = Union[Formula, Hybrid, SoftEq, SoftIneq]

SYMBOLIC_NODES = (Atom, Not, And, Or, Implies, Iff)


def children(node) -> tuple:
    if isinstance(node, Not):
        return (node.arg,)
    if isinstance(node, (And, Or)):
        return node.args
    if isinstance(node, (Implies, Iff)):
        return (node.lhs, node.rhs)
    if isinstance(node, (SoftEq, SoftIneq)):
        return tuple(t for t in (node.lhs, node.rhs) if isinstance(t, Atom))
    if isinstance(node, Hybrid):
        return (node.continuous,) if node.symbolic is None else (node.continuous, node.symbolic)
    return ()


def atoms_of(node) -> list[Atom]:
    """Atoms in depth-first, left-to-right order (duplicates kept once)."""
    seen: dict[Atom, None] = {}

    def walk(n):
        if isinstance(n, Atom):
            seen.setdefault(n, None)
        for c in children(n):
            walk(c)

    walk(node)
    return list(seen)


def variables_of(node) -> list[str]:
    out: dict[str, None] = {}
    for a in atoms_of(node):
        for arg in a.args:
            if is_variable(arg):
                out.setdefault(arg, None)
    return list(out)


def substitute(node, theta: Mapping[str, str]):
    """Replace variables by constants according to ``theta``."""
    if isinstance(node, Atom):
        return Atom(node.predicate, tuple(theta.get(a, a) for a in node.args))
    if isinstance(node, Not):
        return Not(substitute(node.arg, theta))
    if isinstance(node, And):
        return And(tuple(substitute(a, theta) for a in node.args))
    if isinstance(node, Or):
        return Or(tuple(substitute(a, theta) for a in node.args))
    if isinstance(node, Implies):
        return Implies(substitute(node.lhs, theta), substitute(node.rhs, theta))
    if isinstance(node, Iff):
        return Iff(substitute(node.lhs, theta), substitute(node.rhs, theta))
    if isinstance(node, SoftEq):
        return SoftEq(_sub_term(node.lhs, theta), _sub_term(node.rhs, theta))
    if isinstance(node, SoftIneq):
        return SoftIneq(_sub_term(node.lhs, theta), _sub_term(node.rhs, theta), node.op, node.softness)
    if isinstance(node, Hybrid):
        sym = None if node.symbolic is None else substitute(node.symbolic, theta)
        return Hybrid(substitute(node.continuous, theta), sym)
    raise TypeError(f"not a formula node: {node!r}")


def _sub_term(t, theta):
    return substitute(t, theta) if isinstance(t, Atom) else t


# --- soft terms -------------------------------------------------------------


def softplus(x):
    return np.logaddexp(0.0, x)


def soft_eq_value(u):
    """Value of a soft equality as a function of the difference lhs - rhs."""
    return 0.0 - np.square(u)  # +0.0 rather than -0.0 at u = 0


def soft_ineq_value(u, op: str, softness: float):
    """Value of a soft inequality as a function of u = lhs - rhs."""
    if softness <= 0:
        raise ConfigError("softness must be positive")
    if op == "<":
        return -softplus(softness * np.asarray(u, dtype=float))
    return -softplus(-softness * np.asarray(u, dtype=float))


def soft_term_value(node: SoftEq | SoftIneq, bindings: Mapping[Atom, float] | None = None) -> float:
    """Evaluate a soft equality/inequality given values for its atoms."""
    bindings = bindings or {}

    def num(t):
        if isinstance(t, Atom):
            try:
                return float(bindings[t])
            except KeyError:
                raise EvaluationError(f"no value bound for {t}") from None
        return float(t)

    u = num(node.lhs) - num(node.rhs)
    if isinstance(node, SoftEq):
        return float(soft_eq_value(u))
    if isinstance(node, SoftIneq):
        return float(soft_ineq_value(u, node.op, node.softness))
    raise TypeError(f"not a soft term: {node!r}")


def continuous_function(node: Continuous) -> Callable[[np.ndarray], np.ndarray]:
    """Univariate function g(u) with u = lhs - rhs (identity for a bare atom)."""
    if isinstance(node, SoftEq):
        return soft_eq_value
    if isinstance(node, SoftIneq):
        op, a = node.op, node.softness
        return lambda u: soft_ineq_value(u, op, a)
    if isinstance(node, Atom):
        return lambda u: np.asarray(u, dtype=float)
    raise TypeError(f"not a continuous node: {node!r}")


def continuous_operands(node: Continuous) -> tuple[NumTerm, NumTerm]:
    """(lhs, rhs) such that the argument of the continuous function is lhs - rhs."""
    if isinstance(node, Atom):
        return node, 0.0
    return node.lhs, node.rhs


# --- spec -------------------------------------------------------------------


@dataclass(frozen=True)
class Property:
    id: int
    formula: Node
    variables: tuple[tuple[str, str], ...]  # (variable, domain name)
    weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(tuple(v) for v in self.variables))

    @property
    def is_symbolic(self) -> bool:
        return isinstance(self.formula, SYMBOLIC_NODES)

    @property
    def symbolic_part(self):
        if isinstance(self.formula, Hybrid):
            return self.formula.symbolic
        if isinstance(self.formula, (SoftEq, SoftIneq)):
            return None
        return self.formula

    @property
    def continuous_part(self):
        if isinstance(self.formula, Hybrid):
            return self.formula.continuous
        if isinstance(self.formula, (SoftEq, SoftIneq)):
            return self.formula
        return None


@dataclass(frozen=True)
class Spec:
    domains: tuple[Domain, ...]
    schemas: tuple[PredicateSchema, ...]
    properties: tuple[Property, ...]
    options: tuple[tuple[str, str], ...] = ()
    closed_world: frozenset[str] = frozenset()

    def __post_init__(self):
        for name in ("domains", "schemas", "properties", "options"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "closed_world", frozenset(self.closed_world))
        for label, items in (("domain", self.domains), ("predicate", self.schemas)):
            names = [x.name for x in items]
            if len(set(names)) != len(names):
                raise ConfigError(f"duplicate {label} name")
        ids = [p.id for p in self.properties]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate property id")

    def domain(self, name: str) -> Domain:
        for d in self.domains:
            if d.name == name:
                return d
        raise ConfigError(f"unknown domain {name!r}")

    def schema(self, name: str) -> PredicateSchema:
        for s in self.schemas:
            if s.name == name:
                return s
        raise ConfigError(f"unknown predicate {name!r}")

    def option(self, key: str, default=None):
        return dict(self.options).get(key, default)

    def property(self, pid: int) -> Property:
        for p in self.properties:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def with_domains(self, domains: Iterable[Domain]) -> "Spec":
        new = {d.name: d for d in domains}
        return Spec(
            tuple(new.get(d.name, d) for d in self.domains),
            self.schemas,
            self.properties,
            self.options,
            self.closed_world,
        )

    def with_weights(self, weights: Mapping[int, float]) -> "Spec":
        props = tuple(
            Property(p.id, p.formula, p.variables, weights.get(p.id, p.weight)) for p in self.properties
        )
        return Spec(self.domains, self.schemas, props, self.options, self.closed_world)

    def ground_atoms(self, kind: Kind | None = None) -> Iterator["GroundAtom"]:
        """All ground atoms in schema declaration order, args lexicographic by index."""
        for s in self.schemas:
            if kind is not None and s.kind != kind:
                continue
            doms = [self.domain(d).constants for d in s.arg_domains]
            for args in itertools.product(*doms):
                yield GroundAtom(s.name, args)


# --- ground objects ---------------------------------------------------------


@dataclass(frozen=True)
class GroundAtom:
    predicate: str
    args: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def __str__(self):
        return f"{self.predicate}({','.join(self.args)})"


@dataclass(frozen=True)
class GroundProperty:
    property: Property
    substitution: tuple[tuple[str, str], ...]
    atoms: tuple[GroundAtom, ...] = field(default=(), compare=False)

    @property
    def theta(self) -> dict[str, str]:
        return dict(self.substitution)

    @property
    def formula(self) -> Node:
        return substitute(self.property.formula, self.theta)


class World:
    """Total assignment: symbolic atoms to {0,1}, sub-symbolic atoms to reals."""

    def __init__(self, symbolic: Mapping[GroundAtom, int], subsymbolic: Mapping[GroundAtom, float] | None = None):
        self.symbolic = {a: int(v) for a, v in symbolic.items()}
        self.subsymbolic = {a: float(v) for a, v in (subsymbolic or {}).items()}
        for v in self.symbolic.values():
            if v not in (0, 1):
                raise ValueError("symbolic atoms take values in {0, 1}")

    def __getitem__(self, atom: GroundAtom):
        if atom in self.symbolic:
            return self.symbolic[atom]
        if atom in self.subsymbolic:
            return self.subsymbolic[atom]
        raise EvaluationError(f"{atom} is not assigned")

    def __contains__(self, atom) -> bool:
        return atom in self.symbolic or atom in self.subsymbolic

    def __eq__(self, other):
        return (
            isinstance(other, World)
            and self.symbolic == other.symbolic
            and self.subsymbolic == other.subsymbolic
        )

    def updated(self, symbolic=None, subsymbolic=None) -> "World":
        sym = dict(self.symbolic)
        sym.update(symbolic or {})
        sub = dict(self.subsymbolic)
        sub.update(subsymbolic or {})
        return World(sym, sub)


# --- grounding and evaluation -----------------------------------------------


def ground_formula(prop: Property, domains: Sequence[Domain] | Mapping[str, Domain]) -> list[GroundProperty]:
    """All groundings of ``prop`` in lexicographic order of constant indices."""
    if not isinstance(domains, Mapping):
        domains = {d.name: d for d in domains}
    consts = []
    for var, dom in prop.variables:
        if dom not in domains:
            raise ConfigError(f"variable {var} refers to unknown domain {dom!r}")
        consts.append(domains[dom].constants)
    names = [v for v, _ in prop.variables]
    out = []
    for combo in itertools.product(*consts):
        theta = tuple(zip(names, combo))
        lookup = dict(theta)
        atoms = tuple(GroundAtom(a.predicate, tuple(lookup.get(x, x) for x in a.args)) for a in atoms_of(prop.formula))
        out.append(GroundProperty(prop, theta, atoms))
    return out


def _ground(atom: Atom) -> GroundAtom:
    if any(is_variable(a) for a in atom.args):
        raise EvaluationError(f"atom {atom} is not ground")
    return GroundAtom(atom.predicate, atom.args)


def truth(formula: Formula, world: World | Mapping[GroundAtom, int]) -> bool:
    """Truth value of a ground symbolic formula."""
    if isinstance(formula, Atom):
        return bool(world[_ground(formula)])
    if isinstance(formula, Not):
        return not truth(formula.arg, world)
    if isinstance(formula, And):
        return all(truth(a, world) for a in formula.args)
    if isinstance(formula, Or):
        return any(truth(a, world) for a in formula.args)
    if isinstance(formula, Implies):
        return (not truth(formula.lhs, world)) or truth(formula.rhs, world)
    if isinstance(formula, Iff):
        return truth(formula.lhs, world) == truth(formula.rhs, world)
    raise TypeError(f"not a symbolic formula: {formula!r}")


def continuous_value(node: Continuous, world: World) -> float:
    lhs, rhs = continuous_operands(node)

    def num(t):
        if isinstance(t, Atom):
            g = _ground(t)
            if g not in world.subsymbolic:
                raise EvaluationError(f"missing sub-symbolic assignment for {g}")
            return world.subsymbolic[g]
        return float(t)

    return float(continuous_function(node)(num(lhs) - num(rhs)))


def ground_value(gp: GroundProperty | Node, world: World) -> float:
    """s value of a single ground property: 0/1 for symbolic, g * indicator for hybrid."""
    f = gp.formula if isinstance(gp, GroundProperty) else gp
    if isinstance(f, SYMBOLIC_NODES):
        return 1.0 if truth(f, world) else 0.0
    if isinstance(f, Hybrid):
        if f.symbolic is not None and not truth(f.symbolic, world):
            return 0.0
        return continuous_value(f.continuous, world)
    return continuous_value(f, world)


def count_true_groundings(prop: Property, world: World, domains) -> int:
    if not prop.is_symbolic:
        raise EvaluationError("count_true_groundings needs a purely symbolic property")
    return sum(truth(gp.formula, world) for gp in ground_formula(prop, domains))


def hybrid_formula_value(gp: GroundProperty, world: World) -> float:
    f = gp.formula
    if not isinstance(f, Hybrid):
        raise EvaluationError("hybrid_formula_value needs a hybrid-product property")
    return ground_value(f, world)


def log_sum_exp(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return -math.inf
    m = v.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(v - m).sum()))
