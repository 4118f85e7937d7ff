import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import GNN_TEXT, random_model
from hmln.data import DataError, EmbeddingStore
from hmln.dsl import parse_spec
from hmln.hypercube import Hypercube, refine
from hmln.logic import GroundAtom
from hmln.model import build_model, exact_conditional_log_prob
from hmln.stats import betainc, welch_t_test
from hmln.verification import (
    VerifyConfig,
    bounds_from_map,
    decide,
    map_bounds,
    sample_groundings,
    score_floor,
    verify,
)

# hand application of the Welch formulas to {1..5} vs {2,4,..,10}
WORKED_T = -1.8974
WORKED_DF = 5.88


def test_welch_worked_example():
    t, df, p = welch_t_test([1, 2, 3, 4, 5], [2, 4, 6, 8, 10])
    assert t == pytest.approx(WORKED_T, abs=1e-3)
    assert df == pytest.approx(WORKED_DF, abs=1e-2)
    t2, df2, p2 = welch_t_test([2, 4, 6, 8, 10], [1, 2, 3, 4, 5])
    assert t2 == -t and df2 == df and p2 == p


def test_welch_identical_samples():
    assert welch_t_test([1.0, 2.0, 4.0], [1.0, 2.0, 4.0])[0] == 0.0
    assert welch_t_test([1.0, 2.0, 4.0], [1.0, 2.0, 4.0])[2] == 1.0
    assert welch_t_test([3.0, 3.0], [3.0, 3.0])[2] == 1.0
    t, _, p = welch_t_test([3.0, 3.0], [4.0, 4.0])
    assert t == -math.inf and p == 0.0


samples = st.lists(st.floats(-100, 100), min_size=2, max_size=12)


@pytest.mark.filterwarnings("ignore:Precision loss")
@settings(max_examples=200)
@given(samples, samples)
def test_welch_matches_scipy(a, b):
    if np.var(a) + np.var(b) < 1e-3:
        return
    t, df, p = welch_t_test(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
    assert p == pytest.approx(ref.pvalue, abs=1e-8)


@given(st.integers(2, 15), st.floats(0.1, 10), st.floats(-5, 5))
def test_equal_variances_give_student_df(k, scale, shift):
    base = np.linspace(-1, 1, k) * scale
    _, df, _ = welch_t_test(base, base + shift)
    assert df == pytest.approx(2 * k - 2)


@given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0, 1))
def test_betainc_matches_scipy(a, b, x):
    from scipy.special import betainc as ref
    assert betainc(a, b, x) == pytest.approx(float(ref(a, b, x)), abs=1e-10)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 0.5))
def test_pass_is_function_of_p_values(pu, pl, gamma):
    assert decide(pu, pl, gamma) == (pu > gamma and pl > gamma)


def test_bound_sandwich_small():
    rng = np.random.default_rng(33)
    for t in range(40):
        m = random_model(rng, hybrid=t % 2 == 0)
        for p, comp in enumerate(m.compiled):
            if comp.symbolic is None:
                continue
            g = int(rng.integers(comp.size))
            b = map_bounds(m, p, g)
            exact = exact_conditional_log_prob(m, lambda W: comp.sym_values(W)[:, g] == 1)
            assert b.omega_l - 1e-6 <= exact <= b.omega_u + 1e-6


def test_zero_weights_bounds():
    rng = np.random.default_rng(1)
    m = random_model(rng)
    m = m.with_theta(np.zeros(m.n_weights))
    g = int(np.flatnonzero(m.compiled[0].sym_values(m.evidence) == 0.5)[0])
    b = map_bounds(m, 0, g)
    log_n = m.n_query * math.log(2)
    assert (b.m_plus, b.m_minus) == (0.0, 0.0)
    assert b.omega_u == pytest.approx(log_n)
    assert b.omega_l == pytest.approx(-2 * log_n)


def test_fixed_true_grounding_is_degenerate():
    spec = parse_spec("domain d = {A, B}\npredicate P(d)\npredicate Q(d)\n1 P(x) v Q(x)\n")
    m = build_model(spec, {GroundAtom("P", ("A",)): 1})
    b = map_bounds(m, 0, 0)
    assert b.m_minus == -math.inf and b.degenerate
    assert bounds_from_map(-math.inf, 0.0, 1.0, 0.0).degenerate


def test_difference_identities():
    rng = np.random.default_rng(6)
    for _ in range(10):
        m = random_model(rng, hybrid=True)
        m2 = m.with_subsymbolic(rng.uniform(0, 1, 9))
        floor = min(score_floor(m), score_floor(m2))
        for p, comp in enumerate(m.compiled):
            if comp.symbolic is None:
                continue
            a, b = map_bounds(m, p, 0, floor=floor), map_bounds(m2, p, 0, floor=floor)
            if a.degenerate or b.degenerate:
                continue
            assert abs(a.omega_u - b.omega_u) == pytest.approx(
                abs((a.m_plus - a.m_minus) - (b.m_plus - b.m_minus)), abs=1e-9)
            assert abs(a.omega_l - b.omega_l) == pytest.approx(abs(b.m_minus - a.m_minus), abs=1e-9)


def _gnn_case(seed=0, nodes=6):
    rng = np.random.default_rng(seed)
    spec = parse_spec(GNN_TEXT)
    from hmln.logic import Domain
    names = tuple(f"N{i}" for i in range(nodes))
    spec = spec.with_domains([Domain("node", names)]).with_weights({0: 0.8, 1: 1.5})
    ev = {GroundAtom("Neighbor", (a, b)): int(rng.random() < 0.4) for a in names for b in names}
    ev[GroundAtom("Class", ("N0", "C0"))] = 1
    store = EmbeddingStore(names, rng.normal(0, 0.3, (nodes, 2)))
    m = build_model(spec, ev, store)
    sym = np.where(m.evidence_mask, m.evidence, rng.integers(0, 2, m.index.n_sym))
    cubes = refine(m, (sym, m.subsymbolic), 4)
    return spec, ev, store, m, cubes


def test_identical_stores_pass():
    _, _, store, m, cubes = _gnn_case()
    rep = verify(m, store, store, cubes)
    assert rep.passed
    for pr in rep.properties:
        assert pr.t_u == 0.0 and pr.t_l == 0.0 and pr.mu_u == 0.0 and pr.mu_l == 0.0
        for s in pr.samples:
            assert s["uSpec"] == s["uTest"] and s["lSpec"] == s["lTest"]


def test_constant_property_leaves_statistics_unchanged():
    spec, ev, store, m, cubes = _gnn_case(1)
    rng = np.random.default_rng(5)
    noisy = store.with_vectors(store.vectors + rng.normal(0, 1.0, store.vectors.shape))
    base = verify(m, store, noisy, cubes)
    # a property fixed by evidence adds the same constant to every MAP value
    extra = parse_spec(GNN_TEXT + "2.5 Neighbor(x1,x2) v !Neighbor(x1,x2)\n")
    extra = extra.with_domains([spec.domain("node")]).with_weights({0: 0.8, 1: 1.5})
    other = verify(build_model(extra, ev, store), store, noisy, cubes, properties=[0, 1])
    for a, b in zip(base.properties, other.properties):
        assert a.t_u == pytest.approx(b.t_u, abs=1e-9) and a.t_l == pytest.approx(b.t_l, abs=1e-9)
        assert a.p_u == pytest.approx(b.p_u, abs=1e-9) and a.p_l == pytest.approx(b.p_l, abs=1e-9)


def test_sampling_examples():
    _, _, store, m, cubes = _gnn_case()
    one, _ = sample_groundings(m, 1, [Hypercube.bounding(m.spec)], seed=3)
    assert len(one) == 1
    picks, skipped = sample_groundings(m, 1, cubes, seed=3)
    assert len(picks) + skipped == len(cubes)
    assert picks == sample_groundings(m, 1, cubes, seed=3)[0]
    every, _ = sample_groundings(m, 1, cubes, seed=3, eligible_only=False)
    assert len(every) == len(cubes)


def test_report_is_deterministic_json():
    _, _, store, m, cubes = _gnn_case(2)
    noisy = store.with_vectors(store.vectors[::-1].copy())
    a = verify(m, store, noisy, cubes, VerifyConfig(seed=4)).to_json()
    b = verify(m, store, noisy, cubes, VerifyConfig(seed=4)).to_json()
    assert a == b


def test_store_mismatch():
    _, _, store, m, cubes = _gnn_case()
    other = EmbeddingStore(tuple(f"M{i}" for i in range(6)), store.vectors)
    with pytest.raises(DataError):
        verify(m, store, other, cubes)
    with pytest.raises(DataError):
        verify(m, store, EmbeddingStore(store.keys, np.zeros((6, 3))), cubes)


def test_gamma_validation():
    from hmln.logic import ConfigError
    with pytest.raises(ConfigError):
        VerifyConfig(gamma=1.5)
