"""Hypercubes: weight sharing over blocks of groundings.

A cube holds one constant subset per *slot*. Slots are (domain, occurrence)
pairs, so a property with two variables over the same domain maps them to
two independent slots. One cube partition is shared by every property; a
grounding belongs to the first cube (in list order) that contains it, which
keeps per-property projections disjoint even when a property does not use
every slot.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .logic import ConfigError, GroundAtom, GroundProperty, Property, Spec, World, atoms_of

Slot = tuple[str, int]


class HypercubeError(ValueError):
    pass


def slot_layout(spec: Spec) -> tuple[Slot, ...]:
    """One slot per domain, plus extra slots for repeated domains within a property."""
    need = {d.name: 1 for d in spec.domains}
    for p in spec.properties:
        counts: dict[str, int] = {}
        for _, d in p.variables:
            counts[d] = counts.get(d, 0) + 1
        for d, n in counts.items():
            need[d] = max(need[d], n)
    return tuple((d.name, k) for d in spec.domains for k in range(need[d.name]))


def property_slots(prop: Property, slots: Sequence[Slot]) -> list[int]:
    """Slot position for each variable of ``prop``."""
    pos = {s: i for i, s in enumerate(slots)}
    seen: dict[str, int] = {}
    out = []
    for var, d in prop.variables:
        k = seen.get(d, 0)
        seen[d] = k + 1
        if (d, k) not in pos:
            raise ConfigError(f"no hypercube slot for variable {var} over domain {d}")
        out.append(pos[(d, k)])
    return out


@dataclass(frozen=True)
class Hypercube:
    sets: tuple[tuple[str, ...], ...]
    id: int = 0
    slots: tuple[Slot, ...] | None = None

    def __post_init__(self):
        sets = tuple(tuple(s) for s in self.sets)
        if any(len(s) == 0 for s in sets):
            raise HypercubeError("hypercube sets must be nonempty")
        if self.slots is not None and len(self.slots) != len(sets):
            raise HypercubeError("one set per slot is required")
        object.__setattr__(self, "sets", sets)

    @classmethod
    def bounding(cls, spec: Spec, slots=None) -> "Hypercube":
        slots = slot_layout(spec) if slots is None else tuple(slots)
        return cls(tuple(spec.domain(d).constants for d, _ in slots), 0, slots)

    def as_sets(self) -> frozenset:
        return frozenset(frozenset(s) for s in self.sets)

    def size(self) -> int:
        return int(np.prod([len(s) for s in self.sets]))

    def contains(self, prop: Property, theta) -> bool:
        theta = dict(theta)
        for (var, _), j in zip(prop.variables, property_slots(prop, self._slots())):
            if theta[var] not in self.sets[j]:
                return False
        return True

    def _slots(self):
        if self.slots is None:
            raise ConfigError("hypercube has no slot structure")
        return self.slots


def merge(h1: Hypercube, h2: Hypercube) -> Hypercube:
    """Merge operator: disjoint sets of each side plus all nonempty pairwise intersections."""
    a = [frozenset(s) for s in h1.sets]
    b = [frozenset(s) for s in h2.sets]
    out = [s for s in a if all(not (s & t) for t in b)]
    out += [t for t in b if all(not (s & t) for s in a)]
    out += [s & t for s in a for t in b if s & t]
    uniq = sorted({tuple(sorted(s)) for s in out})
    if not uniq:
        raise HypercubeError("merge produced no sets")
    return Hypercube(tuple(uniq), min(h1.id, h2.id))


def project(h: Hypercube, prop: Property) -> list[GroundProperty]:
    """Every grounding of ``prop`` drawn from the sets of ``h``."""
    js = property_slots(prop, h._slots())
    names = [v for v, _ in prop.variables]
    atoms = atoms_of(prop.formula)
    out = []
    for combo in itertools.product(*(h.sets[j] for j in js)):
        theta = tuple(zip(names, combo))
        lookup = dict(theta)
        ground = tuple(GroundAtom(a.predicate, tuple(lookup.get(x, x) for x in a.args)) for a in atoms)
        out.append(GroundProperty(prop, theta, ground))
    return out


def _masks(cube: Hypercube, spec: Spec) -> list[np.ndarray]:
    out = []
    for (d, _), s in zip(cube._slots(), cube.sets):
        dom = spec.domain(d)
        m = np.zeros(len(dom), dtype=bool)
        m[[dom.index(c) for c in s]] = True
        out.append(m)
    return out


def _cube_assignment(masks_list, compiled, slot_pos) -> np.ndarray:
    """Index of the first cube containing each grounding (-1 if none)."""
    assign = np.full(compiled.size, -1, dtype=np.int64)
    for ci, masks in enumerate(masks_list):
        inside = assign < 0
        for var, j in zip(compiled.vars, slot_pos):
            inside &= masks[j][compiled.var_index[var]]
        assign[inside] = ci
    return assign


def cube_assignment(cubes: Sequence[Hypercube], spec: Spec, compiled) -> np.ndarray:
    if not cubes:
        return np.full(compiled.size, -1, dtype=np.int64)
    masks = [_masks(c, spec) for c in cubes]
    return _cube_assignment(masks, compiled, property_slots(compiled.prop, cubes[0]._slots()))


def effective_projection(cubes: Sequence[Hypercube], prop: Property, spec: Spec) -> list[list[GroundProperty]]:
    """Per cube, the groundings of ``prop`` resolved to it."""
    from .model import AtomIndex, CompiledProperty

    comp = CompiledProperty(prop, spec, AtomIndex(spec))
    assign = cube_assignment(cubes, spec, comp)
    out: list[list[GroundProperty]] = [[] for _ in cubes]
    for g, ci in enumerate(assign):
        if ci >= 0:
            out[ci].append(comp.grounding(g, spec))
    return out


# --- weights -----------------------------------------------------------------------


@dataclass
class WeightTable:
    cubes: tuple[Hypercube, ...]
    weights: dict = field(default_factory=dict)  # (property id, cube id) -> weight
    fallback: float = 0.0

    def __post_init__(self):
        self.cubes = tuple(self.cubes)
        ids = [c.id for c in self.cubes]
        if len(set(ids)) != len(ids):
            raise HypercubeError("duplicate hypercube id")

    @property
    def slots(self):
        return self.cubes[0].slots if self.cubes else None

    @classmethod
    def single(cls, spec: Spec) -> "WeightTable":
        return cls.from_cubes(spec, [Hypercube.bounding(spec)])

    @classmethod
    def from_cubes(cls, spec: Spec, cubes, init: float | None = None) -> "WeightTable":
        w = {(p.id, c.id): (p.weight if init is None else init) for p in spec.properties for c in cubes}
        return cls(tuple(cubes), w)

    def cube_of(self, grounding: GroundProperty) -> Hypercube | None:
        for c in self.cubes:
            if c.contains(grounding.property, grounding.substitution):
                return c
        return None

    def to_dict(self) -> dict:
        return {
            "slots": [list(s) for s in (self.slots or ())],
            "cubes": [{"id": c.id, "sets": [list(s) for s in c.sets]} for c in self.cubes],
            "weights": [{"property": p, "cube": c, "weight": w} for (p, c), w in sorted(self.weights.items())],
            "fallback": self.fallback,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "WeightTable":
        try:
            slots = tuple((s[0], int(s[1])) for s in d["slots"])
            cubes = tuple(Hypercube(tuple(tuple(s) for s in c["sets"]), int(c["id"]), slots) for c in d["cubes"])
            w = {(int(e["property"]), int(e["cube"])): float(e["weight"]) for e in d["weights"]}
            return cls(cubes, w, float(d.get("fallback", 0.0)))
        except (KeyError, TypeError, IndexError) as e:
            raise ConfigError(f"malformed weight table: {e}") from None

    @classmethod
    def from_json(cls, text: str) -> "WeightTable":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"weight table is not valid JSON: {e}") from None

    def validate(self, spec: Spec) -> None:
        want = slot_layout(spec)
        for c in self.cubes:
            if c.slots != want:
                raise ConfigError("weight table slots do not match the spec")
            for (d, _), s in zip(c.slots, c.sets):
                dom = spec.domain(d)
                for k in s:
                    dom.index(k)
        pids = {p.id for p in spec.properties}
        for p, _ in self.weights:
            if p not in pids:
                raise ConfigError(f"weight table refers to unknown property {p}")


def weight_of(table: WeightTable, grounding: GroundProperty) -> float:
    c = table.cube_of(grounding)
    if c is None:
        return table.fallback
    return table.weights.get((grounding.property.id, c.id), table.fallback)


def assign_groundings(table: WeightTable, spec: Spec, compiled) -> tuple[list[np.ndarray], np.ndarray, list]:
    """Shared-weight index per grounding, the weight vector and its keys."""
    if table.cubes:
        table.validate(spec)
    keys = sorted(table.weights)
    pos = {k: i for i, k in enumerate(keys)}
    theta = np.array([table.weights[k] for k in keys], dtype=float)
    ids = []
    for comp in compiled:
        assign = cube_assignment(table.cubes, spec, comp)
        lut = np.array([pos.get((comp.prop.id, c.id), -1) for c in table.cubes] + [-1], dtype=np.int64)
        ids.append(lut[assign])  # assign == -1 hits the trailing -1
    return ids, theta, keys


# --- refinement ------------------------------------------------------------------------


def refine(model, world, alpha: int, tol: float = 1e-12) -> list[Hypercube]:
    """Split the bounding cube until ``alpha`` cubes exist or no split separates values.

    Each step takes the highest-variance cube, picks the slot whose
    per-constant mean values spread the most, and sends constants with mean
    above the cube mean to H+ and the rest (ties included) to H-.
    """
    if alpha < 1:
        raise ConfigError("alpha must be at least 1")
    spec = model.spec
    slots = slot_layout(spec)
    if isinstance(world, World):
        sym, sub = model.world_arrays(world)
    else:
        sym, sub = world
    vals = [np.asarray(c.values(sym, sub), dtype=float) for c in model.compiled]
    slot_pos = [property_slots(c.prop, slots) for c in model.compiled]
    sizes = [len(spec.domain(d)) for d, _ in slots]
    cubes = [[np.ones(n, dtype=bool) for n in sizes]]
    # every split partitions one cube, so assignments are updated in place
    assigns = [np.zeros(c.size, dtype=np.int64) for c in model.compiled]

    while len(cubes) < alpha:
        k = len(cubes)
        n = sum(np.bincount(a, minlength=k) for a in assigns)
        s1 = sum(np.bincount(a, weights=v, minlength=k) for v, a in zip(vals, assigns))
        s2 = sum(np.bincount(a, weights=v * v, minlength=k) for v, a in zip(vals, assigns))
        mean = np.divide(s1, n, out=np.zeros(k), where=n > 0)
        var = np.maximum(np.divide(s2, n, out=np.zeros(k), where=n > 0) - mean * mean, 0.0)
        done = False
        for ci in sorted(range(k), key=lambda c: (-var[c], c)):
            if var[ci] <= tol:
                break
            split = _best_split(ci, cubes[ci], mean[ci], vals, assigns, model.compiled, slot_pos, sizes, tol)
            if split is None:
                continue
            j, plus = split
            minus_c = [m.copy() for m in cubes[ci]]
            plus_c = [m.copy() for m in cubes[ci]]
            minus_c[j] &= ~plus
            plus_c[j] &= plus
            cubes[ci:ci + 1] = [plus_c, minus_c]
            for a, c, sp in zip(assigns, model.compiled, slot_pos):
                a[a > ci] += 1
                if j in sp:
                    var_j = c.vars[sp.index(j)]
                    moved = (a == ci) & ~plus[c.var_index[var_j]]
                    a[moved] = ci + 1
            done = True
            break
        if not done:
            break

    out = []
    for i, masks in enumerate(cubes):
        sets = tuple(tuple(spec.domain(d).constants[k] for k in np.flatnonzero(m)) for (d, _), m in zip(slots, masks))
        out.append(Hypercube(sets, i, slots))
    return out


def _best_split(ci, masks, parent_mean, vals, assigns, compiled, slot_pos, sizes, tol):
    best = None
    for j, n in enumerate(sizes):
        members = np.flatnonzero(masks[j])
        if len(members) < 2:
            continue
        sums = np.zeros(n)
        counts = np.zeros(n)
        for v, a, c, sp in zip(vals, assigns, compiled, slot_pos):
            sel = a == ci
            if not sel.any():
                continue
            for var, jj in zip(c.vars, sp):
                if jj == j:
                    idx = c.var_index[var][sel]
                    sums += np.bincount(idx, weights=v[sel], minlength=n)
                    counts += np.bincount(idx, minlength=n)
        seen = members[counts[members] > 0]
        if len(seen) < 2:
            continue
        means = sums[seen] / counts[seen]
        spread = means.max() - means.min()
        if spread <= tol:
            continue
        plus = np.zeros(n, dtype=bool)
        plus[seen[means > parent_mean + tol]] = True
        if not plus.any() or plus[members].all():
            continue
        if best is None or spread > best[0]:
            best = (spread, j, plus)
    return None if best is None else (best[1], best[2])
