import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model, unit_model
from hmln.dsl import parse_spec
from hmln.logic import Atom, GroundAtom, Kind, World, ground_formula, ground_value
from hmln.model import (
    ResourceError,
    all_scores,
    build_model,
    exact_conditional_log_prob,
    exact_log_partition,
    log_score,
)

LN_1_PLUS_E = 1.313262  # ln(1 + e)


def _brute_score(model, world):
    """Term-by-term sum through the tree evaluator, independent of the compiled arrays."""
    total = 0.0
    for p, prop in enumerate(model.spec.properties):
        w = model.grounding_weights(p)
        for g, gp in enumerate(ground_formula(prop, model.spec.domains)):
            total += w[g] * ground_value(gp, world)
    return total


def test_single_grounding_score():
    m = unit_model([2.0])
    a = GroundAtom("A0", ("K0",))
    assert log_score(m, World({a: 1})) == 2.0
    assert log_score(m, World({a: 0})) == 0.0


def test_zero_weights_score_zero(rng):
    m = random_model(rng, hybrid=True)
    m = m.with_theta(np.zeros(m.n_weights))
    worlds, scores = all_scores(m)
    assert np.all(scores == 0.0)


@pytest.mark.parametrize("seed", range(6))
def test_score_matches_tree_evaluation(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, hybrid=seed % 2 == 1, n_evidence=7)
    worlds, scores = all_scores(m)
    for i in rng.choice(len(worlds), size=min(8, len(worlds)), replace=False):
        w = m.to_world(worlds[i], m.subsymbolic)
        assert log_score(m, w) == pytest.approx(_brute_score(m, w), abs=1e-9)
        assert scores[i] == pytest.approx(log_score(m, w), abs=1e-12)


def test_partition_closed_forms():
    assert exact_log_partition(unit_model([0.0])) == pytest.approx(math.log(2), abs=1e-12)
    assert exact_log_partition(unit_model([1.0])) == pytest.approx(LN_1_PLUS_E, abs=1e-6)
    two = exact_log_partition(unit_model([0.7, -1.3]))
    assert two == pytest.approx(exact_log_partition(unit_model([0.7])) + exact_log_partition(unit_model([-1.3])),
                                abs=1e-12)


def test_conditional_examples():
    a = GroundAtom("A0", ("K0",))
    m = unit_model([1.5], evidence={a: 1})
    assert exact_conditional_log_prob(m, Atom("A0", ("K0",))) == 0.0
    m = unit_model([0.0, 0.0])
    assert exact_conditional_log_prob(m, Atom("A1", ("K1",))) == pytest.approx(math.log(0.5), abs=1e-12)


def test_conditional_matches_enumerated_ratio(rng):
    m = random_model(rng, n_evidence=9)  # 6 free atoms
    assert m.n_query == 6
    worlds, _ = all_scores(m)
    num = den = 0.0
    target = m.index.atoms(Kind.SYMBOLIC)[int(np.flatnonzero(m.query_mask)[0])]
    for sym in worlds:
        w = m.to_world(sym, m.subsymbolic)
        e = math.exp(_brute_score(m, w))
        den += e
        num += e * w[target]
    got = exact_conditional_log_prob(m, Atom(target.predicate, target.args))
    assert got == pytest.approx(math.log(num / den), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_normalization_and_complement(seed, hybrid):
    rng = np.random.default_rng(seed)
    m = random_model(rng, hybrid=hybrid)
    worlds, scores = all_scores(m)
    lz = exact_log_partition(m)
    assert abs(np.exp(scores - lz).sum() - 1.0) < 1e-9
    q = int(np.flatnonzero(m.query_mask)[0])
    p1 = exact_conditional_log_prob(m, lambda W: W[:, q] == 1)
    p0 = exact_conditional_log_prob(m, lambda W: W[:, q] == 0)
    assert abs(math.exp(p1) + math.exp(p0) - 1.0) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5))
def test_score_affine_in_weights(seed, delta):
    rng = np.random.default_rng(seed)
    m = random_model(rng, hybrid=True)
    worlds, _ = all_scores(m)
    sym = worlds[rng.integers(len(worlds))]
    i = int(rng.integers(m.n_weights))
    theta = m.theta.copy()
    theta[i] += delta
    s_i = m.features_arrays(sym, m.subsymbolic)[i]
    diff = float(m.with_theta(theta).score_arrays(sym, m.subsymbolic)) - float(m.score_arrays(sym, m.subsymbolic))
    assert diff == pytest.approx(delta * s_i, abs=1e-9)


def test_zero_weight_property_changes_nothing():
    base = "domain d = {A, B}\npredicate P(d)\npredicate R(d,d)\n1.5 P(x) => R(x,y)\n-0.5 R(x,x)\n"
    m1 = build_model(parse_spec(base))
    m2 = build_model(parse_spec(base + "0 P(x) ^ !P(y)\n"))
    for x in ("A", "B"):
        ev = Atom("P", (x,))
        assert exact_conditional_log_prob(m1, ev) == pytest.approx(exact_conditional_log_prob(m2, ev), abs=1e-12)


def test_oracle_cap():
    spec = parse_spec("domain d = {A, B, C, D, E}\npredicate R(d,d)\n1 R(x,y)\n")
    with pytest.raises(ResourceError):
        exact_log_partition(build_model(spec))


def test_hybrid_partition_by_hand():
    spec = parse_spec("domain d = {A}\npredicate P(d)\nsubsymbolic D(d,d)\n2 (D(x,y) < 0.5) * (P(x))\n")
    m = build_model(spec, None, np.array([1.5]))
    g = -math.log1p(math.exp(1.0))
    assert exact_log_partition(m) == pytest.approx(math.log(1 + math.exp(2 * g)), abs=1e-12)
    for bits in itertools.product([0, 1]):
        w = World({GroundAtom("P", ("A",)): bits[0]}, {GroundAtom("D", ("A", "A")): 1.5})
        assert log_score(m, w) == pytest.approx(2 * g * bits[0], abs=1e-12)
