"""Acceptance suite: one printed pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py``; the summary lines appear in
the terminal summary at the end of the session. The two end-to-end sweeps
take several minutes.
"""
import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE, GRID, fd_gradient, random_model, tiny_model
from hmln.bench import bundled_spec, random_hmln
from hmln.cli import build_parser, main
from hmln.dsl import parse_spec
from hmln.experiments import homophily_runs, irt_runs, pass_rate
from hmln.hypercube import Hypercube, WeightTable, project, refine, slot_layout
from hmln.learning import LearnConfig, exact_rb_loglik
from hmln.logic import SoftIneq, soft_eq_value, soft_ineq_value
from hmln.milp.bb import solve_bb
from hmln.milp.encode import encode_map
from hmln.milp.problem import Status
from hmln.model import GroundModel, all_scores, build_model, exact_conditional_log_prob, exact_log_partition
from hmln.stats import welch_t_test
from hmln.verification import VerifyConfig, map_bounds, score_floor

SEEDS = range(20)


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, ACCEPTANCE[n]


# --- end-to-end sweeps, shared by several criteria ---------------------------------------


@pytest.fixture(scope="session")
def homophily_sweep():
    # 0.25 is the middle level of the monotone-sensitivity check
    return {s: {r.variant: r for r in homophily_runs(s, ("clean", "noisy", 0.25))} for s in SEEDS}


@pytest.fixture(scope="session")
def irt_sweep():
    return {s: {r.variant: r for r in irt_runs(s)} for s in SEEDS}


# --- criteria ----------------------------------------------------------------------------


def test_c01_map_exactness():
    rng = np.random.default_rng(1001)
    worst, bad, start = 0.0, 0, time.perf_counter()
    for _ in range(200):
        m = random_model(rng)
        assert m.n_query <= 12
        _, scores = all_scores(m)
        res = solve_bb(encode_map(m, sub=m.subsymbolic))
        err = abs(res.objective - scores.max()) if res.status == Status.OPTIMAL else math.inf
        worst = max(worst, err)
        bad += err > 1e-6
    seconds = time.perf_counter() - start
    record(1, bad == 0 and seconds < 60, f"200 models, max |MILP - brute force| = {worst:.2e}, {seconds:.1f} s")


def test_c02_gradient():
    worst = 0.0
    for seed in range(50):
        m, obs = tiny_model(1000 + seed)
        assert m.n_query + m.index.n_sub <= 8
        _, grad = exact_rb_loglik(m, obs, GRID, gradient=True)
        worst = max(worst, float(np.max(np.abs(grad - fd_gradient(m, obs)))))
    record(2, worst <= 1e-5, f"50 models, max |exact - finite difference| = {worst:.2e}")


def test_c03_bound_sandwich():
    rng = np.random.default_rng(1003)
    cases = misses = 0
    while cases < 200:
        m = random_model(rng, hybrid=cases % 2 == 0)
        for p, comp in enumerate(m.compiled):
            if comp.symbolic is None or cases >= 200:
                continue
            g = int(rng.integers(comp.size))
            b = map_bounds(m, p, g)
            exact = exact_conditional_log_prob(m, lambda W: comp.sym_values(W)[:, g] == 1)
            misses += not b.omega_l - 1e-6 <= exact <= b.omega_u + 1e-6
            cases += 1
    identity_err = 0.0
    for _ in range(50):
        m = random_model(rng, hybrid=True)
        m2 = m.with_subsymbolic(rng.uniform(0, 1, m.index.n_sub))
        floor = min(score_floor(m), score_floor(m2))
        for p, comp in enumerate(m.compiled):
            if comp.symbolic is None:
                continue
            a, b = map_bounds(m, p, 0, floor=floor), map_bounds(m2, p, 0, floor=floor)
            if a.degenerate or b.degenerate:
                continue
            identity_err = max(
                identity_err,
                abs(abs(a.omega_u - b.omega_u) - abs((a.m_plus - a.m_minus) - (b.m_plus - b.m_minus))),
                abs(abs(a.omega_l - b.omega_l) - abs(b.m_minus - a.m_minus)))
    ok = misses == 0 and identity_err <= 1e-9
    record(3, ok, f"{cases} groundings, {misses} outside the bounds; identity error {identity_err:.1e}")


def _per_grounding(m: GroundModel, wstar) -> GroundModel:
    ids, off = [], 0
    for comp in m.compiled:
        ids.append(np.arange(comp.size) + off)
        off += comp.size
    return GroundModel(m.spec, m.compiled, m.index, m.evidence, m.subsymbolic, ids, wstar, [(0, 0)] * off)


def test_c04_quantization_bound():
    rng = np.random.default_rng(1004)
    worst, bad = 0.0, 0
    for _ in range(50):
        spec, ev, sub = random_hmln(rng)
        base = build_model(spec, ev, sub)
        worlds, _ = all_scores(base)
        cubes = refine(base, (worlds[rng.integers(len(worlds))], sub), int(rng.integers(1, 5)))
        m = build_model(spec, ev, sub, WeightTable.from_cubes(spec, cubes, init=0.0))
        shared = rng.uniform(-3, 3, m.n_weights)
        m = m.with_theta(shared)
        quantized = np.concatenate([shared[w] for w in m.weight_ids])
        wstar = quantized + rng.uniform(-0.3, 0.3, len(quantized))
        target = _per_grounding(m, wstar)
        eps = float(np.max(np.abs(wstar - quantized)))
        w2, s2 = all_scores(target)
        prob = np.exp(s2 - s2.max())
        x = w2[rng.choice(len(prob), p=prob / prob.sum())]
        gap = (float(target.score_arrays(x, sub)) - exact_log_partition(target)
               - float(m.score_arrays(x, sub)) + exact_log_partition(m))
        bound = 2 * len(cubes) * len(spec.properties) * eps
        worst = max(worst, gap / bound)
        bad += gap > bound
    record(4, bad == 0, f"50 models, {bad} violations, worst gap / 2kn eps = {worst:.3f}")


def test_c05_soft_terms():
    eq = soft_eq_value(0.0)
    errs = [abs(soft_ineq_value(0.0, op, a) + math.log(2)) for a in (0.1, 1.0, 10.0) for op in ("<", ">")]
    record(5, eq == 0 and max(errs) <= 1e-9, f"eq(u,u) = {eq}, max |threshold + ln 2| = {max(errs):.1e}")


def test_c06_projection():
    doms = "domain dx = {X1, X2, X3}\ndomain dy = {Y1, Y2, Y3}\ndomain dz = {Z1, Z2, Z3}\n"
    first = parse_spec(doms + "predicate R(dx)\npredicate S(dx,dy)\n1 R(x) ^ S(x,y)\n")
    second = parse_spec(doms + "predicate T(dz)\npredicate S(dz,dy)\n1 T(z) ^ S(z,y)\n")
    counts = []
    for spec in (first, second):
        h = Hypercube((("X1", "X2"), ("Y1", "Y2"), ("Z1",)), 0, slot_layout(spec))
        counts.append(len(project(h, spec.properties[0])))
    record(6, counts == [4, 2], f"groundings {counts[0]} and {counts[1]}")


def _welch_reference(a, b):
    r = stats.ttest_ind(a, b, equal_var=False)
    return r.statistic, r.pvalue


@pytest.mark.filterwarnings("ignore:Precision loss")
def test_c07_welch():
    rng = np.random.default_rng(1007)
    dt = dp = 0.0
    for _ in range(100):
        a = rng.normal(rng.uniform(-1, 1), rng.uniform(0.2, 3), int(rng.integers(3, 40)))
        b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.2, 3), int(rng.integers(3, 40)))
        t, _, p = welch_t_test(a, b)
        rt, rp = _welch_reference(a, b)
        dt, dp = max(dt, abs(t - rt)), max(dp, abs(p - rp))
    t, df, _ = welch_t_test([1, 2, 3, 4, 5], [2, 4, 6, 8, 10])
    # the quoted df is rounded to two decimals
    ok = dt <= 1e-6 and dp <= 1e-4 and abs(t + 1.8974) <= 1e-3 and round(df, 2) == 5.88
    record(7, ok, f"100 pairs, max dt = {dt:.1e}, max dp = {dp:.1e}; worked t = {t:.4f}, df = {df:.3f}")


def test_c08_homophily(homophily_sweep):
    clean = [homophily_sweep[s]["clean"] for s in SEEDS]
    noisy = [homophily_sweep[s]["noisy"] for s in SEEDS]
    seconds = sum(c.seconds + n.seconds - c.learn_seconds for c, n in zip(clean, noisy))
    ok = pass_rate(clean) >= 0.9 and 1 - pass_rate(noisy) >= 0.8 and seconds < 600
    record(8, ok, f"clean pass {pass_rate(clean):.0%}, noisy fail {1 - pass_rate(noisy):.0%}, {seconds:.0f} s")


def test_homophily_monotone_in_noise(homophily_sweep):
    fails = [1 - pass_rate([homophily_sweep[s][v] for s in SEEDS]) for v in ("clean", "sigma=0.25", "noisy")]
    assert fails == sorted(fails), fails


def test_c09_irt(irt_sweep):
    rates = {o: pass_rate([irt_sweep[s][o] for s in SEEDS]) for o in ("E", "P", "H")}
    ok = rates["E"] >= 0.8 and rates["P"] >= 0.8 and 1 - rates["H"] >= 0.6
    record(9, ok, f"E pass {rates['E']:.0%}, P pass {rates['P']:.0%}, H fail {1 - rates['H']:.0%}")


def test_c10_defaults():
    lc, vc = LearnConfig(), VerifyConfig()
    sub = build_parser()._subparsers._group_actions[0].choices
    learn, verify = sub["learn"].parse_args(["--spec", "s", "--out", "o"]), sub["verify"].parse_args(
        ["--spec", "s", "--test-embeddings", "t", "--out", "o"])
    soft = bundled_spec("gnn").properties[1].formula.continuous
    ok = (lc.learning_rate == learn.lr == 0.01 and lc.alpha == learn.alpha == 200
          and vc.gamma == verify.gamma == 0.05 and isinstance(soft, SoftIneq) and soft.rhs == 0.5)
    record(10, ok, f"lr {lc.learning_rate}, alpha {lc.alpha}, gamma {vc.gamma}, tau {soft.rhs}")


def _pipeline(d):
    assert main(["gen-data", "homophily", "--out", str(d), "--nodes", "12", "--seed", "5"]) == 0
    flags = ["--spec", str(d / "spec.hmln"), "--evidence", str(d / "evidence.db"),
             "--embeddings", str(d / "emb_clean.csv")]
    assert main(["learn", *flags, "--truth", str(d / "truth.db"), "--epochs", "5", "--out", str(d / "w.json")]) == 0
    main(["verify", *flags, "--test-embeddings", str(d / "emb_noisy.csv"), "--weights", str(d / "w.json"),
          "--out", str(d / "report.json")])
    assert main(["export-milp", *flags, "--weights", str(d / "w.json"), "--out", str(d / "map.lp")]) == 0
    return {n: (d / n).read_bytes() for n in ("w.json", "w_curve.csv", "report.json", "map.lp")}


def test_c11_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    first, second = _pipeline(a), _pipeline(b)
    same = [n for n in first if first[n] == second[n]]
    record(11, len(same) == len(first), f"{len(same)}/{len(first)} artifacts byte-identical")
