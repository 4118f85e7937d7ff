"""Rao-Blackwellized weight learning.

The sub-symbolic atoms are summed out of the likelihood of the observed
query atoms. Its gradient is

    E[s | y_obs, x_e] - E[s | x_e],

the first expectation over the sub-symbolic atoms only, the second over
query and sub-symbolic atoms jointly. ``map`` mode replaces each
expectation by the features of a MAP solution; ``exact`` mode enumerates
the sub-symbolic atoms over a finite grid (tiny models only).
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .hypercube import WeightTable, refine
from .logic import ConfigError, Spec, World, log_sum_exp
from .milp.encode import EncodeConfig, MapContext
from .milp.problem import Status
from .model import ORACLE_CAP, UNKNOWN, GroundModel, ResourceError, build_model, enumerate_query_worlds

log = logging.getLogger(__name__)

DIVERGENCE = 1e6


class LearningError(RuntimeError):
    pass


@dataclass(frozen=True)
class LearnConfig:
    learning_rate: float = 0.01
    epochs: int = 100
    alpha: int = 200
    gradient_clip: float | None = None
    l2: float = 0.0
    normalize: bool = False  # divide each gradient entry by its grounding count
    mode: str = "map"  # map | exact
    grid: tuple[float, ...] = (0.0, 0.5, 1.0)  # sub-symbolic values for exact mode
    encode: EncodeConfig = EncodeConfig()

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")
        if self.alpha < 1:
            raise ConfigError("alpha must be at least 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.mode not in ("map", "exact"):
            raise ConfigError(f"unknown learning mode {self.mode!r}")


@dataclass
class GradientReport:
    per_weight: np.ndarray
    map_objectives: tuple[float, float] = (math.nan, math.nan)  # (observed query clamped, evidence only)


@dataclass
class EpochRecord:
    epoch: int
    gradient_norm: float
    map_objectives: tuple[float, float]


def observed_arrays(model: GroundModel, observed) -> tuple[np.ndarray, np.ndarray]:
    sym, sub = model.world_arrays(observed) if isinstance(observed, World) else map(np.asarray, observed)
    sym = np.asarray(sym, dtype=float)
    sub = np.asarray(sub, dtype=float)
    model.check_evidence(sym)
    return sym, sub


def rb_gradient(model: GroundModel, observed, config: LearnConfig = LearnConfig()) -> GradientReport:
    """Gradient of the Rao-Blackwellized log-likelihood at the model's weights."""
    if config.mode == "exact":
        _, grad = exact_rb_loglik(model, observed, config.grid, gradient=True)
        return GradientReport(grad)
    sym, _ = observed_arrays(model, observed)
    clamped = MapContext(model, sym=sym, sub=None, config=config.encode).solve()
    free = MapContext(model, sym=model.evidence, sub=None, config=config.encode).solve()
    for name, sol in (("observed-query", clamped), ("evidence-only", free)):
        if sol.status == Status.INFEASIBLE:
            raise LearningError(f"{name} MAP problem is infeasible")
        if not sol.feasible:
            raise LearningError(f"{name} MAP problem hit a resource limit without a solution")
    grad = model.features_arrays(clamped.sym, clamped.sub) - model.features_arrays(free.sym, free.sub)
    return GradientReport(np.asarray(grad, dtype=float), (clamped.objective, free.objective))


# --- exact oracles ----------------------------------------------------------------------------


def _grid_batches(model: GroundModel, grid, free_query: bool, sym_obs=None, batch: int = 8192):
    """All (sym, sub) combinations with sub-symbolic atoms on the grid."""
    grid = np.asarray(grid, dtype=float)
    n_sub = model.index.n_sub
    n_q = model.n_query if free_query else 0
    total = (2 ** n_q) * (len(grid) ** n_sub)
    if total > 2 ** ORACLE_CAP:
        raise ResourceError(f"{total} joint states exceed the oracle cap")
    sub_states = np.array(list(itertools.product(grid, repeat=n_sub))) if n_sub else np.zeros((1, 0))
    worlds = np.concatenate(list(enumerate_query_worlds(model))) if free_query else sym_obs[None, :]
    for w0 in range(0, len(worlds), max(1, batch // len(sub_states))):
        ws = worlds[w0:w0 + max(1, batch // len(sub_states))]
        sym = np.repeat(ws, len(sub_states), axis=0)
        sub = np.tile(sub_states, (len(ws), 1))
        yield sym, sub


def _log_moments(model: GroundModel, batches, gradient: bool):
    scores, feats = [], []
    for sym, sub in batches:
        scores.append(np.atleast_1d(model.score_arrays(sym, sub)))
        if gradient:
            feats.append(model.features_arrays(sym, sub))
    s = np.concatenate(scores)
    lz = log_sum_exp(s)
    if not gradient:
        return lz, None
    f = np.concatenate(feats)
    p = np.exp(s - lz)
    return lz, p @ f


def exact_rb_loglik(model: GroundModel, observed, grid=(0.0, 0.5, 1.0), gradient: bool = False):
    """ln sum over grid sub-symbolic states of P(y_obs, x_s | x_e), by enumeration.

    Returns the log-likelihood, or (log-likelihood, gradient) when ``gradient``.
    """
    sym, _ = observed_arrays(model, observed)
    num, e_num = _log_moments(model, _grid_batches(model, grid, False, sym), gradient)
    den, e_den = _log_moments(model, _grid_batches(model, grid, True), gradient)
    ll = num - den
    return (ll, e_num - e_den) if gradient else ll


def exact_full_loglik(model: GroundModel, observed, grid=(0.0, 0.5, 1.0), gradient: bool = False):
    """ln P(y_obs, x_s_obs | x_e) with the sub-symbolic atoms normalized over the grid."""
    sym, sub = observed_arrays(model, observed)
    score = float(model.score_arrays(sym, sub))
    den, e_den = _log_moments(model, _grid_batches(model, grid, True), gradient)
    if not gradient:
        return score - den
    return score - den, model.features_arrays(sym, sub) - e_den


# --- training loop ----------------------------------------------------------------------------


def ascend(model: GroundModel, observed, config: LearnConfig, history: list | None = None,
           grad_fn=None) -> GroundModel:
    """``config.epochs`` gradient-ascent steps from the model's current weights."""
    grad_fn = grad_fn or (lambda m: rb_gradient(m, observed, config))
    counts = np.zeros(model.n_weights)
    for wid in model.weight_ids:
        counts += np.bincount(wid[wid >= 0], minlength=model.n_weights)
    theta = model.theta.copy()
    for epoch in range(config.epochs):
        rep = grad_fn(model.with_theta(theta))
        g = rep.per_weight - config.l2 * theta
        if config.normalize:
            g = g / np.maximum(counts, 1.0)
        if config.gradient_clip is not None:
            norm = float(np.linalg.norm(g))
            if norm > config.gradient_clip:
                g = g * (config.gradient_clip / norm)
        theta = theta + config.learning_rate * g
        if history is not None:
            history.append(EpochRecord(epoch, float(np.linalg.norm(g)), rep.map_objectives))
        if np.any(np.abs(theta) > DIVERGENCE):
            k = int(np.argmax(np.abs(theta)))
            raise LearningError(
                f"weights diverged at epoch {epoch}: weight {model.weight_keys[k]} reached {theta[k]:.3g}"
            )
        log.debug("epoch %d |g|=%.4g", epoch, np.linalg.norm(g))
    return model.with_theta(theta)


def learn_weights(spec: Spec, observed, config: LearnConfig = LearnConfig(), evidence=None,
                  history: list | None = None) -> WeightTable:
    """Refine hypercubes on the observed world, then learn one weight per (property, cube).

    ``observed`` is a total World (its sub-symbolic values are the observed
    embedding distances); ``evidence`` selects which symbolic atoms are
    evidence (default: none).
    """
    base = build_model(spec, evidence, observed.subsymbolic if isinstance(observed, World) else observed[1])
    obs = observed_arrays(base, observed)
    cubes = refine(base, obs, config.alpha)
    table = WeightTable.from_cubes(spec, cubes, init=0.0)
    model = build_model(spec, evidence, base.subsymbolic, table)
    model = ascend(model, obs, config, history)
    return table_with_theta(table, model)


def table_with_theta(table: WeightTable, model: GroundModel) -> WeightTable:
    w = dict(table.weights)
    for k, v in zip(model.weight_keys, model.theta):
        w[k] = float(v)
    return WeightTable(table.cubes, w, table.fallback)
