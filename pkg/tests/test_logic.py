import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmln.dsl import parse_spec
from hmln.logic import (
    Atom,
    Domain,
    EvaluationError,
    GroundAtom,
    Hybrid,
    Iff,
    Not,
    Property,
    SoftEq,
    SoftIneq,
    World,
    count_true_groundings,
    ground_formula,
    hybrid_formula_value,
    soft_eq_value,
    soft_ineq_value,
    soft_term_value,
)

# frozen closed-form values
HYBRID_AT_02 = -0.554355  # -ln(1 + e^-0.3)
INEQ_A10_D15 = -10.0000454  # -ln(1 + e^10)


def _prop(text, **domains):
    head = "".join(f"domain {k} = {{{', '.join(v)}}}\n" for k, v in domains.items())
    return parse_spec(head + text)


def test_grounding_counts(gnn_spec):
    spec = _prop("predicate R(d,d)\n1 R(x,y)\n", d=["A", "B", "C"])
    assert len(ground_formula(spec.properties[0], spec.domains)) == 9
    spec = _prop("predicate R(d,d)\n1 R(A,B)\n", d=["A", "B", "C"])
    assert len(ground_formula(spec.properties[0], spec.domains)) == 1
    hybrid = gnn_spec.properties[1]
    assert len(ground_formula(hybrid, gnn_spec.domains)) == 4 * 4 * 2


def test_grounding_order_is_deterministic(gnn_spec):
    a = ground_formula(gnn_spec.properties[0], gnn_spec.domains)
    b = ground_formula(gnn_spec.properties[0], gnn_spec.domains)
    assert [g.substitution for g in a] == [g.substitution for g in b]
    assert set(a[0].theta.values()) == {"N1", "C0"}


def _world(**vals):
    out = {}
    for k, v in vals.items():
        name, args = k.split("_", 1)
        out[GroundAtom(name, tuple(args.split("_")))] = v
    return World(out)


def test_count_true_groundings_examples():
    spec = parse_spec("domain d = {A, B}\npredicate S(d)\npredicate C(d)\n1 S(x) => C(x)\n")
    p, doms = spec.properties[0], spec.domains
    assert count_true_groundings(p, _world(S_A=1, C_A=1, S_B=1, C_B=0), doms) == 1
    assert count_true_groundings(p, _world(S_A=0, C_A=0, S_B=0, C_B=0), doms) == 2
    spec = parse_spec("domain d = {A, B}\npredicate F(d,d)\n1 F(x,y) => F(y,x)\n")
    w = _world(F_A_A=0, F_A_B=1, F_B_A=0, F_B_B=0)
    assert count_true_groundings(spec.properties[0], w, spec.domains) == 3


def test_count_rejects_hybrid(gnn_spec):
    with pytest.raises(EvaluationError):
        count_true_groundings(gnn_spec.properties[1], World({}), gnn_spec.domains)


def _hybrid_world(dist, agree):
    sym = {
        GroundAtom("Class", ("A", "C")): 1,
        GroundAtom("Class", ("B", "C")): 1 if agree else 0,
    }
    return World(sym, {GroundAtom("Dist", ("A", "B")): dist})


def _hybrid_grounding(tau=0.5, a=1.0):
    f = Hybrid(
        SoftIneq(Atom("Dist", ("A", "B")), tau, "<", a),
        Iff(Atom("Class", ("A", "C")), Atom("Class", ("B", "C"))),
    )
    spec = parse_spec("domain d = {A}\npredicate P(d)\n1 P(A)\n")
    p = Property(0, f, (), 1.0)
    return ground_formula(p, spec.domains)[0]


def test_hybrid_value_examples():
    gp = _hybrid_grounding()
    assert hybrid_formula_value(gp, _hybrid_world(0.2, True)) == pytest.approx(HYBRID_AT_02, abs=1e-6)
    assert hybrid_formula_value(gp, _hybrid_world(0.2, False)) == 0.0
    assert hybrid_formula_value(gp, _hybrid_world(0.5, True)) == pytest.approx(-math.log(2), abs=1e-12)


def test_soft_term_examples():
    assert soft_term_value(SoftEq(3.0, 3.0)) == 0.0
    assert soft_term_value(SoftEq(1.0, 3.0)) == -4.0
    d = Atom("D", ("A", "B"))
    v = soft_term_value(SoftIneq(d, 0.5, "<", 10.0), {d: 1.5})
    assert v == pytest.approx(INEQ_A10_D15, abs=1e-7)


def test_soft_term_needs_bindings():
    d = Atom("D", ("A", "B"))
    with pytest.raises(EvaluationError):
        soft_term_value(SoftEq(d, 1.0))


@pytest.mark.parametrize("a", [0.1, 1.0, 10.0, 123.0])
@pytest.mark.parametrize("op", ["<", ">"])
def test_threshold_value_is_minus_ln2(a, op):
    assert abs(float(soft_ineq_value(0.0, op, a)) + math.log(2)) < 1e-12


# millesimal grid: avoids squares underflowing to zero
finite = st.integers(-10**6, 10**6).map(lambda i: i / 1000)


@given(finite, finite)
def test_soft_eq_nonpositive_and_symmetric(u, v):
    d = Atom("D", ("A", "B"))
    e = Atom("E", ("A", "B"))
    a = soft_term_value(SoftEq(d, e), {d: u, e: v})
    b = soft_term_value(SoftEq(e, d), {d: u, e: v})
    assert a <= 0 and a == b
    assert (a == 0) == (u == v)


@given(st.floats(0.01, 20), st.floats(0, 50), st.floats(1e-3, 10))
def test_soft_ineq_strictly_decreasing_in_violation(a, u, du):
    lo = float(soft_ineq_value(u, "<", a))
    hi = float(soft_ineq_value(u + du, "<", a))
    assert hi < lo or (lo - hi) < 1e-12 * max(1.0, abs(lo))
    assert float(soft_ineq_value(-u, ">", a)) == lo


@settings(max_examples=50)
@given(st.data())
def test_count_bounds_and_double_negation(data):
    spec = parse_spec("domain d = {A, B, C}\npredicate S(d)\npredicate F(d,d)\n1 S(x) v F(x,y)\n")
    atoms = list(spec.ground_atoms())
    world = World({a: data.draw(st.integers(0, 1)) for a in atoms})
    p = spec.properties[0]
    n = count_true_groundings(p, world, spec.domains)
    assert 0 <= n <= 9
    dbl = Property(1, Not(Not(p.formula)), p.variables, 1.0)
    assert count_true_groundings(dbl, world, spec.domains) == n


@given(st.floats(0, 3), st.booleans(), st.floats(0.1, 10))
def test_hybrid_bounded_by_continuous_part(dist, agree, a):
    gp = _hybrid_grounding(a=a)
    w = _hybrid_world(dist, agree)
    cont = float(soft_ineq_value(dist - 0.5, "<", a))
    assert abs(hybrid_formula_value(gp, w)) <= abs(cont) + 1e-15


def test_soft_eq_vectorized():
    assert np.array_equal(soft_eq_value(np.array([0.0, 2.0])), np.array([0.0, -4.0]))


def test_domain_lookup():
    d = Domain("d", ("A", "B"))
    assert d.index("B") == 1 and len(d) == 2
