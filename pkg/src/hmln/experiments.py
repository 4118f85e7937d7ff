"""Seeded end-to-end runs: generate data, learn weights, verify test embeddings."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .bench import HomophilyConfig, IrtConfig, add_noise, gen_homophily, gen_irt
from .hypercube import WeightTable
from .learning import LearnConfig, learn_weights
from .logic import World
from .milp.bb import Limits
from .milp.encode import EncodeConfig
from .model import build_model
from .verification import VerificationReport, VerifyConfig, store_values, verify


@dataclass(frozen=True)
class RunConfig:
    # learning only needs near-optimal MAP worlds
    learn: LearnConfig = LearnConfig(epochs=5, encode=EncodeConfig(limits=Limits(rel_gap=1e-4)))
    verify: VerifyConfig = VerifyConfig()


@dataclass
class RunResult:
    seed: int
    variant: str
    table: WeightTable
    report: VerificationReport
    seconds: float  # learning plus this verification
    learn_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.report.passed


def observed_world(model, truth: dict) -> World:
    """Evidence plus truth values for the query atoms, with the model's sub-symbolic values."""
    sym = model.evidence.copy()
    for a, v in truth.items():
        sym[model.index.id(a)] = v
    return model.to_world(sym, model.subsymbolic)


def _learn_and_verify(seed, spec, evidence, truth, spec_store, tests: dict, config: RunConfig) -> list[RunResult]:
    """Learn once on the specification embeddings, then verify each named test store."""
    start = time.perf_counter()
    base = build_model(spec, evidence, spec_store)
    sym = base.evidence.copy()
    for a, v in truth.items():
        sym[base.index.id(a)] = v
    table = learn_weights(spec, (sym, base.subsymbolic), config.learn, evidence)
    model = build_model(spec, evidence, spec_store, table)
    learn_time = time.perf_counter() - start
    vcfg = replace(config.verify, seed=seed)
    out = []
    for name, store in tests.items():
        t0 = time.perf_counter()
        report = verify(model, spec_store, store, table.cubes, vcfg)
        out.append(RunResult(seed, name, table, report, learn_time + time.perf_counter() - t0, learn_time))
    return out


def homophily_runs(seed: int, variants=("clean", "noisy"), data_config: HomophilyConfig = HomophilyConfig(),
                   config: RunConfig = RunConfig()) -> list[RunResult]:
    """Learn on clean embeddings; verify against the clean and/or noisy variant.

    A numeric variant is a noise level: the clean embeddings plus that many
    standard deviations of the seed's noise draw (named ``sigma=<value>``).
    """
    data = gen_homophily(replace(data_config, seed=seed))
    stores = {}
    for v in variants:
        if isinstance(v, str):
            stores[v] = {"clean": data.clean, "noisy": data.noisy}[v]
        else:
            stores[f"sigma={float(v):g}"] = add_noise(data.clean, float(v), seed)
    return _learn_and_verify(seed, data.spec, data.evidence(), data.truth(), data.clean, stores, config)


def irt_runs(seed: int, orderings=("E", "P", "H"), data_config: IrtConfig = IrtConfig(students=100),
             config: RunConfig = RunConfig()) -> list[RunResult]:
    """Learn on the curriculum-replay skills; verify the skills of other attempt orderings."""
    data = gen_irt(replace(data_config, seed=seed))
    emb = data.embeddings
    return _learn_and_verify(seed, data.spec, data.evidence(), data.truth(), emb["spec"],
                             {o: emb[o] for o in orderings}, config)


def pass_rate(results) -> float:
    return float(np.mean([r.passed for r in results])) if results else float("nan")
