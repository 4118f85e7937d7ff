"""Verify test embeddings against a learned specification.

For a grounding with symbolic part f, two MAP solves conditioned on f = 1
and f = 0 bound ln P(f = 1 | E):

    Omega_U = M+ - M- + ln n
    Omega_L = -(M- - floor) - 2 ln n

with n = 2^|Y| and ``floor`` a lower bound on every world score under
both embeddings. The floor keeps Omega_L a valid bound when MAP values
are negative; it is shared by the specification and test runs, so bound
differences depend on MAP values only. Per property, one grounding is
sampled from each hypercube and the two bound samples are compared with
Welch's t-test.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import DataError, EmbeddingStore, subsymbolic_values
from .hypercube import Hypercube, cube_assignment
from .logic import ConfigError, Kind, Property
from .milp.encode import EncodeConfig, MapContext
from .milp.problem import Status
from .model import UNKNOWN, GroundModel, ResourceError
from .stats import welch_t_test


@dataclass(frozen=True)
class VerifyConfig:
    gamma: float = 0.05
    delta_u: float | None = None
    delta_l: float | None = None
    seed: int = 0
    eligible_only: bool = True  # skip groundings whose symbolic part is fixed by evidence
    encode: EncodeConfig = EncodeConfig()

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie strictly between 0 and 1")


@dataclass(frozen=True)
class BoundPair:
    m_plus: float
    m_minus: float
    omega_u: float
    omega_l: float
    log_n: float
    degenerate: bool = False


def score_floor(model: GroundModel) -> float:
    """Sum over groundings of the least weighted value any world can give it."""
    total = 0.0
    sub = model.subsymbolic
    if np.isnan(sub).any():
        raise ConfigError("the floor needs every sub-symbolic atom fixed")
    for p, comp in enumerate(model.compiled):
        w = model.grounding_weights(p)
        kv = comp.sym_values(model.evidence)
        scale = comp.cont_fn(comp.cont_arg(sub)) if comp.continuous is not None else np.ones(comp.size)
        if comp.symbolic is None:
            lo = hi = scale
        else:
            lo = np.where(kv == UNKNOWN, np.minimum(0.0, scale), kv * scale)
            hi = np.where(kv == UNKNOWN, np.maximum(0.0, scale), kv * scale)
        total += float(np.minimum(w * lo, w * hi).sum())
    return total


def bounds_from_map(m_plus: float, m_minus: float, log_n: float, floor: float) -> BoundPair:
    if m_plus == -math.inf:
        return BoundPair(m_plus, m_minus, -math.inf, -math.inf, log_n, True)
    if m_minus == -math.inf:
        return BoundPair(m_plus, m_minus, 0.0, 0.0, log_n, True)
    return BoundPair(m_plus, m_minus, m_plus - m_minus + log_n, -(m_minus - floor) - 2.0 * log_n, log_n)


def map_bounds(model: GroundModel, p: int, g: int, ctx: MapContext | None = None, floor: float | None = None,
               config: EncodeConfig = EncodeConfig()) -> BoundPair:
    """Bounds on ln P(f_s = 1 | E) for grounding g of property p (sub-symbolic atoms fixed)."""
    if ctx is None:
        ctx = MapContext(model, sym=model.evidence, sub=model.subsymbolic, config=config)
    if floor is None:
        floor = score_floor(model)
    sols = []
    for value in (1, 0):
        sol = ctx.solve((p, g, value))
        if sol.status == Status.RESOURCE_LIMIT:
            raise ResourceError("MAP solve hit its resource limit")
        sols.append(sol.objective)
    return bounds_from_map(sols[0], sols[1], model.n_query * math.log(2.0), floor)


def sample_groundings(model: GroundModel, p: int, cubes, seed: int = 0, eligible_only: bool = True):
    """One uniformly drawn grounding index per cube with a nonempty projection.

    Returns [(cube id, grounding index)] and the number of cubes skipped
    because every grounding in them had its symbolic part fixed by evidence.
    """
    comp = model.compiled[p]
    assign = cube_assignment(cubes, model.spec, comp)
    ok = np.ones(comp.size, dtype=bool)
    if eligible_only and comp.symbolic is not None:
        ok = comp.sym_values(model.evidence) == UNKNOWN
    rng = np.random.default_rng([seed, p])
    out, skipped = [], 0
    for ci, cube in enumerate(cubes):
        members = np.flatnonzero(assign == ci)
        if len(members) == 0:
            continue
        pool = members[ok[members]]
        if len(pool) == 0:
            skipped += 1
            continue
        out.append((cube.id, int(pool[rng.integers(len(pool))])))
    return out, skipped


def check_stores(a: EmbeddingStore, b: EmbeddingStore) -> None:
    if set(a.keys) != set(b.keys):
        missing = sorted(set(a.keys) ^ set(b.keys))[:3]
        raise DataError(f"embedding keys differ between stores (e.g. {missing})")
    if a.dim != b.dim:
        raise DataError(f"embedding dimensions differ ({a.dim} vs {b.dim})")
    if a.metric != b.metric:
        raise DataError("embedding metrics differ")


def store_values(model: GroundModel, store: EmbeddingStore) -> np.ndarray:
    out = np.full(model.index.n_sub, np.nan)
    for s in model.spec.schemas:
        if s.kind == Kind.SUBSYMBOLIC:
            out[model.index.schema_range(s.name)] = subsymbolic_values(model.spec, s.name, store).ravel()
    return out


@dataclass
class PropertyReport:
    property: int
    formula: str
    samples: list = field(default_factory=list)
    excluded: int = 0
    skipped_cubes: int = 0
    t_u: float = 0.0
    t_l: float = 0.0
    df_u: float = math.nan
    df_l: float = math.nan
    p_u: float = 1.0
    p_l: float = 1.0
    mu_u: float = 0.0
    mu_l: float = 0.0
    passed: bool = True


def decide(p_u: float, p_l: float, gamma: float, mu_u=None, mu_l=None, delta_u=None, delta_l=None) -> bool:
    ok = p_u > gamma and p_l > gamma
    if delta_u is not None and mu_u is not None:
        ok = ok and mu_u <= delta_u
    if delta_l is not None and mu_l is not None:
        ok = ok and mu_l <= delta_l
    return ok


def verify_property(model: GroundModel, p: int, spec_store: EmbeddingStore, test_store: EmbeddingStore,
                    cubes, config: VerifyConfig = VerifyConfig()) -> PropertyReport:
    check_stores(spec_store, test_store)
    from .dsl import render_formula

    spec_m = model.with_subsymbolic(store_values(model, spec_store))
    test_m = model.with_subsymbolic(store_values(model, test_store))
    return _verify(spec_m, test_m, p, cubes, config, render_formula(model.compiled[p].prop.formula))


def _verify(spec_m, test_m, p, cubes, config, formula, contexts=None):
    if model_symbolic(spec_m, p) is None:
        raise ConfigError(f"property {p} has no symbolic part to verify")
    floor = min(score_floor(spec_m), score_floor(test_m))
    if contexts is None:
        contexts = (MapContext(spec_m, sub=spec_m.subsymbolic, config=config.encode),
                    MapContext(test_m, sub=test_m.subsymbolic, config=config.encode))
    picks, skipped = sample_groundings(spec_m, p, cubes, config.seed, config.eligible_only)
    rep = PropertyReport(p, formula, skipped_cubes=skipped)
    us, ls, ut, lt = [], [], [], []
    for cube_id, g in picks:
        bs = map_bounds(spec_m, p, g, contexts[0], floor)
        bt = map_bounds(test_m, p, g, contexts[1], floor)
        gp = spec_m.compiled[p].grounding(g, spec_m.spec)
        rep.samples.append({
            "cubeId": cube_id,
            "grounding": ",".join(f"{v}={c}" for v, c in gp.substitution),
            "uSpec": bs.omega_u, "lSpec": bs.omega_l, "uTest": bt.omega_u, "lTest": bt.omega_l,
        })
        if bs.degenerate or bt.degenerate:
            rep.excluded += 1
            continue
        us.append(bs.omega_u)
        ls.append(bs.omega_l)
        ut.append(bt.omega_u)
        lt.append(bt.omega_l)
    if us:
        rep.t_u, rep.df_u, rep.p_u = welch_t_test(us, ut)
        rep.t_l, rep.df_l, rep.p_l = welch_t_test(ls, lt)
        rep.mu_u = float(np.mean(np.abs(np.subtract(us, ut))))
        rep.mu_l = float(np.mean(np.abs(np.subtract(ls, lt))))
    rep.passed = decide(rep.p_u, rep.p_l, config.gamma, rep.mu_u, rep.mu_l, config.delta_u, config.delta_l)
    return rep


def model_symbolic(model, p):
    return model.compiled[p].symbolic


@dataclass
class VerificationReport:
    properties: list
    config: dict
    timing: dict | None = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.properties)

    def to_dict(self) -> dict:
        out = {
            "pass": self.passed,
            "config": self.config,
            "properties": [_clean(asdict(r)) for r in self.properties],
        }
        for r in out["properties"]:
            r["pass"] = r.pop("passed")
        if self.timing is not None:
            out["timing"] = self.timing
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _clean(x):
    """Non-finite floats become strings so the JSON stays standard."""
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_clean(v) for v in x]
    return x


def verify(model: GroundModel, spec_store: EmbeddingStore, test_store: EmbeddingStore, cubes,
           config: VerifyConfig = VerifyConfig(), properties=None, timing: bool = False) -> VerificationReport:
    """Verify every property with a symbolic part (or the given property ids)."""
    from .dsl import render_formula

    check_stores(spec_store, test_store)
    start = time.perf_counter()
    spec_m = model.with_subsymbolic(store_values(model, spec_store))
    test_m = model.with_subsymbolic(store_values(model, test_store))
    contexts = (MapContext(spec_m, sub=spec_m.subsymbolic, config=config.encode),
                MapContext(test_m, sub=test_m.subsymbolic, config=config.encode))
    pids = [c.prop.id for c in model.compiled if c.symbolic is not None] if properties is None else list(properties)
    reports = []
    for pid in pids:
        p = next(k for k, c in enumerate(model.compiled) if c.prop.id == pid)
        reports.append(_verify(spec_m, test_m, p, cubes, config, render_formula(model.compiled[p].prop.formula), contexts))
    echo = {"gamma": config.gamma, "seed": config.seed, "deltaU": config.delta_u, "deltaL": config.delta_l,
            "eligibleOnly": config.eligible_only, "cubes": len(cubes)}
    t = {"seconds": time.perf_counter() - start} if timing else None
    return VerificationReport(reports, echo, t)
