import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from hmln.dsl import parse_spec
from hmln.hypercube import (
    Hypercube,
    HypercubeError,
    WeightTable,
    effective_projection,
    merge,
    project,
    refine,
    slot_layout,
    weight_of,
)
from hmln.logic import GroundAtom, World, ground_formula
from hmln.model import build_model

DOMS = "domain dx = {X1, X2, X3}\ndomain dy = {Y1, Y2, Y3}\ndomain dz = {Z1, Z2, Z3}\n"


def test_merge_examples():
    h = merge(Hypercube((("A", "B"), ("C",))), Hypercube((("B",), ("D",))))
    assert h.as_sets() == {frozenset({"B"}), frozenset({"C"}), frozenset({"D"})}
    h1 = Hypercube((("A", "B"), ("C",)))
    assert merge(h1, h1).as_sets() == h1.as_sets()
    h2 = Hypercube((("D",), ("E", "F")))
    assert merge(h1, h2).as_sets() == h1.as_sets() | h2.as_sets()


sets_of = st.lists(st.frozensets(st.sampled_from("ABCDEFG"), min_size=1, max_size=4), min_size=1, max_size=4)


@given(sets_of, sets_of)
def test_merge_commutes(a, b):
    h1 = Hypercube(tuple(tuple(sorted(s)) for s in a))
    h2 = Hypercube(tuple(tuple(sorted(s)) for s in b))
    assert merge(h1, h2).as_sets() == merge(h2, h1).as_sets()


def test_empty_set_rejected():
    with pytest.raises(HypercubeError):
        Hypercube((("A",), ()))


def test_projection_example():
    # S is typed, so each property gets its own S signature over the same three domains
    first = parse_spec(DOMS + "predicate R(dx)\npredicate S(dx,dy)\n1 R(x) ^ S(x,y)\n")
    second = parse_spec(DOMS + "predicate T(dz)\npredicate S(dz,dy)\n1 T(z) ^ S(z,y)\n")
    for spec, want in ((first, 4), (second, 2)):
        slots = slot_layout(spec)
        assert [d for d, _ in slots] == ["dx", "dy", "dz"]
        h = Hypercube((("X1", "X2"), ("Y1", "Y2"), ("Z1",)), 0, slots)
        assert len(project(h, spec.properties[0])) == want
    h = Hypercube((("X1",), ("Y3",), ("Z2",)), 0, slot_layout(first))
    assert len(project(h, first.properties[0])) == 1


def test_refine_alpha_one_and_constant_values():
    spec = parse_spec("domain d = {A, B, C}\npredicate P(d)\npredicate R(d,d)\n1 P(x) => R(x,y)\n")
    m = build_model(spec)
    sym = np.ones(m.index.n_sym)
    assert [c.size() for c in refine(m, (sym, m.subsymbolic), 1)] == [9]
    assert len(refine(m, (sym, m.subsymbolic), 200)) == 1


def _mean_gap(vals, idx, subset):
    inside = np.isin(idx, list(subset))
    if inside.all() or not inside.any():
        return -np.inf
    return abs(vals[inside].mean() - vals[~inside].mean())


def test_refine_bimodal_split_is_best():
    spec = parse_spec("domain d = {A, B, C, D}\npredicate P(d)\npredicate Q(d)\n1 P(x) ^ Q(y)\n")
    m = build_model(spec)
    truth = {"P": {"A": 1, "B": 0, "C": 1, "D": 0}, "Q": dict.fromkeys("ABCD", 1)}
    world = World({GroundAtom(p, (k,)): v for p, row in truth.items() for k, v in row.items()})
    cubes = refine(m, world, 2)
    assert len(cubes) == 2
    assert {frozenset(c.sets[0]) for c in cubes} == {frozenset("AC"), frozenset("BD")}
    assert all(c.sets[1] == tuple("ABCD") for c in cubes)
    # brute force over every single-set split of the bounding cube
    comp = m.compiled[0]
    vals = comp.values(*m.world_arrays(world))
    best = max(
        (_mean_gap(vals, comp.var_index[var], s), var, frozenset(s))
        for var in comp.vars
        for r in range(1, 4)
        for s in itertools.combinations(range(4), r)
    )
    chosen = frozenset(spec.domain("d").index(k) for k in cubes[0].sets[0])
    assert best[0] == pytest.approx(1.0)
    assert _mean_gap(vals, comp.var_index["x"], chosen) == pytest.approx(best[0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.booleans())
def test_refine_coverage_disjoint_and_capped(seed, alpha, hybrid):
    rng = np.random.default_rng(seed)
    m = random_model(rng, hybrid=hybrid)
    sym = np.where(m.evidence_mask, m.evidence, rng.integers(0, 2, m.index.n_sym))
    cubes = refine(m, (sym, m.subsymbolic), alpha)
    assert 1 <= len(cubes) <= alpha
    assert [c.id for c in cubes] == list(range(len(cubes)))
    for prop in m.spec.properties:
        parts = effective_projection(cubes, prop, m.spec)
        flat = [g.substitution for part in parts for g in part]
        assert len(flat) == len(set(flat))
        assert set(flat) == {g.substitution for g in ground_formula(prop, m.spec.domains)}


def test_weight_of_examples():
    spec = parse_spec("domain d = {A, B, C, D}\npredicate P(d)\n1 P(x)\n")
    slots = slot_layout(spec)
    cubes = [Hypercube((("A", "B"),), 3, slots), Hypercube((("C",),), 5, slots)]
    table = WeightTable(cubes, {(0, 3): 1.25, (0, 5): -2.0}, fallback=0.5)
    g = {k: gp for gp in ground_formula(spec.properties[0], spec.domains) for k in gp.theta.values()}
    assert weight_of(table, g["A"]) == 1.25
    assert weight_of(table, g["A"]) == weight_of(table, g["B"])
    assert weight_of(table, g["C"]) == -2.0
    assert weight_of(table, g["D"]) == 0.5
    m = build_model(spec, table=table)
    assert list(m.grounding_weights(0)) == [1.25, 1.25, -2.0, 0.5]


def test_weight_table_json_round_trip():
    spec = parse_spec("domain d = {A, B}\npredicate P(d)\npredicate R(d,d)\n1 P(x) => R(x,y)\n")
    cubes = [Hypercube((("A",), ("A", "B")), 0, slot_layout(spec)), Hypercube((("B",), ("B",)), 1, slot_layout(spec))]
    table = WeightTable(cubes, {(0, 0): 0.1, (0, 1): -0.2})
    again = WeightTable.from_json(table.to_json())
    assert again.to_json() == table.to_json()
    assert json.loads(table.to_json())["slots"] == [["d", 0], ["d", 1]]
