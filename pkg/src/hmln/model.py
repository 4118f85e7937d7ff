"""Ground HMLN models: vectorized grounding, scoring and exact enumeration oracles.

Symbolic atom values are stored as floats in {0, 1} with 0.5 marking an
unknown value (three-valued evaluation). Sub-symbolic values use NaN for
unknown.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np

from .logic import (
    And,
    Atom,
    ConfigError,
    EvaluationError,
    GroundAtom,
    GroundProperty,
    Hybrid,
    Iff,
    Implies,
    Kind,
    Not,
    Or,
    Property,
    Spec,
    World,
    atoms_of,
    continuous_function,
    continuous_operands,
    is_variable,
    log_sum_exp,
)

UNKNOWN = 0.5
ORACLE_CAP = 20


class ResourceError(RuntimeError):
    """Exact computation refused because the instance is too large."""


class AtomIndex:
    """Dense integer ids for ground atoms, separately for each kind."""

    def __init__(self, spec: Spec):
        self.spec = spec
        self.offset: dict[str, int] = {}
        self.shape: dict[str, tuple[int, ...]] = {}
        counts = {Kind.SYMBOLIC: 0, Kind.SUBSYMBOLIC: 0}
        self._schemas = {Kind.SYMBOLIC: [], Kind.SUBSYMBOLIC: []}
        for s in spec.schemas:
            shape = tuple(len(spec.domain(d)) for d in s.arg_domains)
            self.offset[s.name] = counts[s.kind]
            self.shape[s.name] = shape
            counts[s.kind] += int(np.prod(shape, dtype=np.int64)) if shape else 1
            self._schemas[s.kind].append(s)
        self.n_sym = counts[Kind.SYMBOLIC]
        self.n_sub = counts[Kind.SUBSYMBOLIC]
        self.kind = {s.name: s.kind for s in spec.schemas}

    def id(self, atom: GroundAtom) -> int:
        s = self.spec.schema(atom.predicate)
        if len(atom.args) != s.arity:
            raise ConfigError(f"arity mismatch for {atom}")
        idx = [self.spec.domain(d).index(c) for d, c in zip(s.arg_domains, atom.args)]
        flat = int(np.ravel_multi_index(idx, self.shape[s.name])) if idx else 0
        return self.offset[s.name] + flat

    def atom(self, kind: Kind, i: int) -> GroundAtom:
        for s in self._schemas[kind]:
            n = int(np.prod(self.shape[s.name], dtype=np.int64)) if s.arg_domains else 1
            off = self.offset[s.name]
            if off <= i < off + n:
                idx = np.unravel_index(i - off, self.shape[s.name]) if s.arg_domains else ()
                args = tuple(self.spec.domain(d).constants[j] for d, j in zip(s.arg_domains, idx))
                return GroundAtom(s.name, args)
        raise IndexError(i)

    def atoms(self, kind: Kind) -> list[GroundAtom]:
        out = []
        for s in self._schemas[kind]:
            doms = [self.spec.domain(d).constants for d in s.arg_domains]
            out.extend(GroundAtom(s.name, args) for args in itertools.product(*doms))
        return out

    def schema_range(self, name: str) -> slice:
        n = int(np.prod(self.shape[name], dtype=np.int64)) if self.shape[name] else 1
        return slice(self.offset[name], self.offset[name] + n)


class CompiledProperty:
    """All groundings of one property as parallel integer arrays."""

    def __init__(self, prop: Property, spec: Spec, index: AtomIndex):
        self.prop = prop
        self.vars = [v for v, _ in prop.variables]
        self.var_domains = [d for _, d in prop.variables]
        self.shape = tuple(len(spec.domain(d)) for d in self.var_domains)
        self.size = int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1
        grids = np.indices(self.shape, dtype=np.int64).reshape(len(self.shape), -1) if self.shape else np.zeros((0, 1), np.int64)
        self.var_index = {v: grids[k] for k, v in enumerate(self.vars)}
        self.atom_ids: dict[Atom, np.ndarray] = {}
        for atom in atoms_of(prop.formula):
            schema = spec.schema(atom.predicate)
            flat = np.full(self.size, index.offset[atom.predicate], dtype=np.int64)
            strides = _strides(index.shape[atom.predicate])
            for arg, dom, stride in zip(atom.args, schema.arg_domains, strides):
                if is_variable(arg):
                    if arg not in self.var_index:
                        raise ConfigError(f"variable {arg} not declared for property {prop.id}")
                    flat += self.var_index[arg] * stride
                else:
                    flat += spec.domain(dom).index(arg) * stride
            self.atom_ids[atom] = flat
        self.symbolic = prop.symbolic_part
        self.continuous = prop.continuous_part
        if self.continuous is not None:
            self.cont_fn = continuous_function(self.continuous)
            self.cont_ops = continuous_operands(self.continuous)

    # three-valued symbolic evaluation
    def sym_values(self, sym: np.ndarray, node=None) -> np.ndarray:
        """Truth of the symbolic part for all groundings (0, 1, or 0.5 = unknown).

        ``sym`` may carry leading batch axes.
        """
        node = self.symbolic if node is None else node
        if node is None:
            return np.ones(sym.shape[:-1] + (self.size,))
        return self._eval(node, sym)

    def _eval(self, node, sym):
        if isinstance(node, Atom):
            return sym[..., self.atom_ids[node]]
        if isinstance(node, Not):
            return 1.0 - self._eval(node.arg, sym)
        if isinstance(node, And):
            out = self._eval(node.args[0], sym)
            for a in node.args[1:]:
                out = np.minimum(out, self._eval(a, sym))
            return out
        if isinstance(node, Or):
            out = self._eval(node.args[0], sym)
            for a in node.args[1:]:
                out = np.maximum(out, self._eval(a, sym))
            return out
        if isinstance(node, Implies):
            return np.maximum(1.0 - self._eval(node.lhs, sym), self._eval(node.rhs, sym))
        if isinstance(node, Iff):
            a = self._eval(node.lhs, sym)
            b = self._eval(node.rhs, sym)
            known = (a != UNKNOWN) & (b != UNKNOWN)
            return np.where(known, 1.0 - np.abs(a - b), UNKNOWN)
        raise TypeError(f"not a symbolic node: {node!r}")

    def cont_arg(self, sub: np.ndarray) -> np.ndarray:
        """u = lhs - rhs of the continuous part per grounding (NaN if unknown)."""
        lhs, rhs = self.cont_ops
        return self._num(lhs, sub) - self._num(rhs, sub)

    def _num(self, t, sub):
        if isinstance(t, Atom):
            return sub[..., self.atom_ids[t]]
        return np.full(sub.shape[:-1] + (self.size,), float(t))

    def values(self, sym: np.ndarray, sub: np.ndarray) -> np.ndarray:
        """s value per grounding on complete assignments."""
        if self.continuous is None:
            return self.sym_values(sym)
        cont = self.cont_fn(self.cont_arg(sub))
        if self.symbolic is None:
            return cont
        return cont * self.sym_values(sym)

    def grounding(self, g: int, spec: Spec) -> GroundProperty:
        theta = tuple(
            (v, spec.domain(d).constants[int(self.var_index[v][g])]) for v, d in zip(self.vars, self.var_domains)
        )
        lookup = dict(theta)
        atoms = tuple(GroundAtom(a.predicate, tuple(lookup.get(x, x) for x in a.args)) for a in self.atom_ids)
        return GroundProperty(self.prop, theta, atoms)

    def index_of(self, theta: Mapping[str, str], spec: Spec) -> int:
        if not self.shape:
            return 0
        idx = [spec.domain(d).index(theta[v]) for v, d in zip(self.vars, self.var_domains)]
        return int(np.ravel_multi_index(idx, self.shape))


def _strides(shape):
    out, acc = [], 1
    for n in reversed(shape):
        out.append(acc)
        acc *= n
    return list(reversed(out))


@dataclass(frozen=True)
class AtomPartition:
    """Evidence (X_e), sub-symbolic (X_s) and query (Y) atoms."""

    evidence: frozenset
    subsymbolic: frozenset
    query: frozenset


class GroundModel:
    """A spec grounded over its domains, with per-grounding weights and a partition.

    ``evidence`` holds symbolic evidence values (UNKNOWN elsewhere);
    ``subsymbolic`` holds observed sub-symbolic values (NaN if none).
    Weights are shared: ``weight_ids[p][g]`` indexes ``theta`` (-1 = fallback).
    """

    def __init__(self, spec: Spec, compiled, index, evidence, subsymbolic, weight_ids, theta, weight_keys, fallback=0.0):
        self.spec = spec
        self.compiled: list[CompiledProperty] = compiled
        self.index: AtomIndex = index
        self.evidence = evidence
        self.subsymbolic = subsymbolic
        self.weight_ids: list[np.ndarray] = weight_ids
        self.theta = np.asarray(theta, dtype=float)
        self.weight_keys: list[tuple[int, int]] = weight_keys
        self.fallback = float(fallback)

    # --- derived views ---------------------------------------------------
    @property
    def n_weights(self) -> int:
        return len(self.theta)

    @property
    def evidence_mask(self) -> np.ndarray:
        return self.evidence != UNKNOWN

    @property
    def query_mask(self) -> np.ndarray:
        return ~self.evidence_mask

    @property
    def n_query(self) -> int:
        return int(self.query_mask.sum())

    @cached_property
    def partition(self) -> AtomPartition:
        sym = self.index.atoms(Kind.SYMBOLIC)
        ev = frozenset(a for a, m in zip(sym, self.evidence_mask) if m)
        q = frozenset(a for a, m in zip(sym, self.evidence_mask) if not m)
        return AtomPartition(ev, frozenset(self.index.atoms(Kind.SUBSYMBOLIC)), q)

    def grounding_weights(self, p: int) -> np.ndarray:
        wid = self.weight_ids[p]
        w = np.where(wid >= 0, self.theta[np.maximum(wid, 0)] if len(self.theta) else 0.0, self.fallback)
        return w

    # --- copies -------------------------------------------------------------
    def with_theta(self, theta) -> "GroundModel":
        return GroundModel(self.spec, self.compiled, self.index, self.evidence, self.subsymbolic,
                           self.weight_ids, np.array(theta, dtype=float), self.weight_keys, self.fallback)

    def with_subsymbolic(self, values) -> "GroundModel":
        values = np.asarray(values, dtype=float)
        if values.shape != (self.index.n_sub,):
            raise ValueError("sub-symbolic value array has the wrong size")
        return GroundModel(self.spec, self.compiled, self.index, self.evidence, values,
                           self.weight_ids, self.theta, self.weight_keys, self.fallback)

    def with_evidence(self, evidence) -> "GroundModel":
        return GroundModel(self.spec, self.compiled, self.index, np.asarray(evidence, dtype=float), self.subsymbolic,
                           self.weight_ids, self.theta, self.weight_keys, self.fallback)

    # --- worlds -------------------------------------------------------------
    def world_arrays(self, world: World) -> tuple[np.ndarray, np.ndarray]:
        sym = np.full(self.index.n_sym, np.nan)
        sub = np.full(self.index.n_sub, np.nan)
        for a, v in world.symbolic.items():
            sym[self.index.id(a)] = v
        for a, v in world.subsymbolic.items():
            sub[self.index.id(a)] = v
        if np.isnan(sym).any() or np.isnan(sub).any():
            missing = self.index.atoms(Kind.SYMBOLIC)[int(np.flatnonzero(np.isnan(sym))[0])] if np.isnan(sym).any() \
                else self.index.atoms(Kind.SUBSYMBOLIC)[int(np.flatnonzero(np.isnan(sub))[0])]
            raise EvaluationError(f"world is not total: {missing} unassigned")
        return sym, sub

    def to_world(self, sym: np.ndarray, sub: np.ndarray) -> World:
        sa = self.index.atoms(Kind.SYMBOLIC)
        ua = self.index.atoms(Kind.SUBSYMBOLIC)
        return World({a: int(round(v)) for a, v in zip(sa, sym)}, {a: float(v) for a, v in zip(ua, sub)})

    def check_evidence(self, sym: np.ndarray) -> None:
        m = self.evidence_mask
        if np.any(sym[..., m] != self.evidence[m]):
            raise EvaluationError("world violates the evidence")

    # --- scoring ------------------------------------------------------------
    def grounding_values(self, sym, sub) -> list[np.ndarray]:
        return [c.values(sym, sub) for c in self.compiled]

    def score_arrays(self, sym: np.ndarray, sub: np.ndarray) -> np.ndarray | float:
        total = 0.0
        for p, c in enumerate(self.compiled):
            total = total + c.values(sym, sub) @ self.grounding_weights(p)
        return total

    def features_arrays(self, sym: np.ndarray, sub: np.ndarray) -> np.ndarray:
        """Sum of grounding values per shared weight (batch axes allowed)."""
        batch = np.shape(sym)[:-1]
        out = np.zeros((int(np.prod(batch, dtype=np.int64)), self.n_weights))
        for p, c in enumerate(self.compiled):
            wid = self.weight_ids[p]
            keep = wid >= 0
            if not keep.any():
                continue
            vals = np.broadcast_to(c.values(sym, sub), batch + (len(wid),)).reshape(len(out), -1)
            if len(out) == 1:
                out[0] += np.bincount(wid[keep], weights=vals[0, keep], minlength=self.n_weights)
            else:
                onehot = np.zeros((len(wid), self.n_weights))
                onehot[np.flatnonzero(keep), wid[keep]] = 1.0
                out += vals @ onehot
        return out.reshape(batch + (self.n_weights,))

    def fallback_features(self, sym, sub) -> float:
        total = 0.0
        for p, c in enumerate(self.compiled):
            mask = self.weight_ids[p] < 0
            if mask.any():
                total = total + c.values(sym, sub)[..., mask].sum(-1)
        return total


def build_model(spec: Spec, evidence=None, subsymbolic=None, table=None) -> GroundModel:
    """Ground ``spec``.

    ``evidence``: EvidenceDB, mapping GroundAtom -> 0/1, or None.
    ``subsymbolic``: EmbeddingStore, mapping GroundAtom -> float, array, or None.
    ``table``: hypercube WeightTable; None gives one weight per property taken from the spec.
    """
    from .data import EmbeddingStore, EvidenceDB, subsymbolic_values
    from .hypercube import WeightTable, assign_groundings

    index = AtomIndex(spec)
    compiled = [CompiledProperty(p, spec, index) for p in spec.properties]

    ev = np.full(index.n_sym, UNKNOWN)
    if evidence is not None:
        lits = evidence.assignment(spec) if isinstance(evidence, EvidenceDB) else evidence
        if isinstance(evidence, EvidenceDB):
            for s in spec.schemas:
                if s.name in evidence.closed_world:
                    ev[index.schema_range(s.name)] = 0.0
            lits = evidence.literals
        for a, v in lits.items():
            ev[index.id(a)] = float(v)

    sub = np.full(index.n_sub, np.nan)
    if isinstance(subsymbolic, EmbeddingStore):
        for s in spec.schemas:
            if s.kind == Kind.SUBSYMBOLIC:
                sub[index.schema_range(s.name)] = subsymbolic_values(spec, s.name, subsymbolic).ravel()
    elif isinstance(subsymbolic, Mapping):
        for a, v in subsymbolic.items():
            sub[index.id(a)] = float(v)
    elif subsymbolic is not None:
        sub = np.asarray(subsymbolic, dtype=float).copy()

    if table is None:
        table = WeightTable.single(spec)
    weight_ids, theta, keys = assign_groundings(table, spec, compiled)
    return GroundModel(spec, compiled, index, ev, sub, weight_ids, theta, keys, table.fallback)


# --- operations on worlds ------------------------------------------------------


def log_score(model: GroundModel, world: World) -> float:
    """Unnormalized log-probability: sum of weight * value over all groundings."""
    sym, sub = model.world_arrays(world)
    model.check_evidence(sym)
    return float(model.score_arrays(sym, sub))


def partition_atoms(spec: Spec, evidence=None, store=None) -> AtomPartition:
    return build_model(spec, evidence, store).partition


# --- exact enumeration ------------------------------------------------------------


def enumerate_query_worlds(model: GroundModel, batch: int = 4096, cap: int = ORACLE_CAP):
    """Yield batches of complete symbolic assignments consistent with the evidence."""
    q = np.flatnonzero(model.query_mask)
    if len(q) > cap:
        raise ResourceError(f"{len(q)} free binary atoms exceed the oracle cap of {cap}")
    base = np.where(model.evidence_mask, model.evidence, 0.0)
    total = 1 << len(q)
    for start in range(0, total, batch):
        codes = np.arange(start, min(total, start + batch), dtype=np.int64)
        bits = (codes[:, None] >> np.arange(len(q))[None, :]) & 1
        sym = np.repeat(base[None, :], len(codes), axis=0)
        sym[:, q] = bits
        yield sym


def _require_sub(model: GroundModel, sub=None) -> np.ndarray:
    sub = model.subsymbolic if sub is None else np.asarray(sub, dtype=float)
    if np.isnan(sub).any():
        raise EvaluationError("sub-symbolic atoms must be fixed for exact enumeration")
    return sub


def all_scores(model: GroundModel, sub=None) -> tuple[np.ndarray, np.ndarray]:
    """(symbolic worlds, scores) over every query assignment."""
    sub = _require_sub(model, sub)
    worlds, scores = [], []
    for sym in enumerate_query_worlds(model):
        worlds.append(sym)
        scores.append(model.score_arrays(sym, sub[None, :]))
    return np.concatenate(worlds), np.concatenate(scores)


def exact_log_partition(model: GroundModel, sub=None) -> float:
    _, scores = all_scores(model, sub)
    return log_sum_exp(scores)


def exact_conditional_log_prob(model: GroundModel, event, sub=None) -> float:
    """ln P(event | evidence, sub-symbolic values), by enumeration.

    ``event`` is a ground symbolic formula, or a callable mapping a batch of
    symbolic assignments to booleans.
    """
    worlds, scores = all_scores(model, sub)
    mask = event_mask(model, event, worlds)
    if not mask.any():
        return -math.inf
    return log_sum_exp(scores[mask]) - log_sum_exp(scores)


def event_mask(model: GroundModel, event, worlds: np.ndarray) -> np.ndarray:
    if callable(event):
        return np.asarray(event(worlds), dtype=bool)
    tmp = Property(-1, event, ())
    comp = CompiledProperty(tmp, model.spec, model.index)
    return comp.sym_values(worlds)[:, 0] == 1.0
