"""Synthetic data: homophily graphs (GNN analogue), IRT students (KT analogue), tiny random HMLNs."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .data import EmbeddingStore, EvidenceDB, render_evidence
from .dsl import parse_spec, render_spec
from .logic import ConfigError, Domain, GroundAtom, Kind, Spec


def bundled_spec(name: str) -> Spec:
    """One of the bundled specifications: ``gnn``, ``kt`` or ``its``."""
    try:
        text = resources.files("hmln").joinpath("specs", f"{name}.hmln").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"no bundled spec named {name!r}") from None
    return parse_spec(text)


def _write(outdir: Path, files: dict[str, str]) -> None:
    from .io import atomic_write

    outdir.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(files.items()):
        atomic_write(outdir / name, text)


# --- homophily graphs -------------------------------------------------------------------------


@dataclass(frozen=True)
class HomophilyConfig:
    nodes: int = 60
    classes: int = 3
    p_in: float = 0.1
    p_out: float = 0.01
    embed_dim: int = 8
    noise_sigma: float = 1.0
    labeled: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ConfigError("need 0 <= p_out <= p_in <= 1")
        if self.nodes < 1 or self.classes < 1:
            raise ConfigError("nodes and classes must be positive")
        if not 0.0 <= self.labeled <= 1.0:
            raise ConfigError("labeled fraction must lie in [0, 1]")
        if self.noise_sigma < 0 or self.embed_dim < 1:
            raise ConfigError("need noise_sigma >= 0 and embed_dim >= 1")


@dataclass
class HomophilyData:
    spec: Spec
    labels: np.ndarray
    edges: list[tuple[int, int]]
    labeled: np.ndarray  # bool per node
    clean: EmbeddingStore
    noisy: EmbeddingStore

    @property
    def node_names(self):
        return self.spec.domain("node").constants

    @property
    def class_names(self):
        return self.spec.domain("class").constants

    def evidence(self) -> EvidenceDB:
        nodes, classes = self.node_names, self.class_names
        lits = {}
        for i, j in self.edges:
            lits[GroundAtom("Neighbor", (nodes[i], nodes[j]))] = 1
            lits[GroundAtom("Neighbor", (nodes[j], nodes[i]))] = 1
        for i in np.flatnonzero(self.labeled):
            for c, cname in enumerate(classes):
                lits[GroundAtom("Class", (nodes[i], cname))] = int(self.labels[i] == c)
        return EvidenceDB(dict(sorted(lits.items(), key=lambda kv: (kv[0].predicate, kv[0].args))),
                          frozenset(self.spec.closed_world))

    def truth(self) -> dict:
        nodes, classes = self.node_names, self.class_names
        return {GroundAtom("Class", (nodes[i], c)): int(self.labels[i] == k)
                for i in range(len(nodes)) for k, c in enumerate(classes)}

    def files(self) -> dict[str, str]:
        return {
            "spec.hmln": render_spec(self.spec),
            "evidence.db": render_evidence(self.evidence().literals),
            "truth.db": render_evidence(self.truth()),
            "emb_clean.csv": self.clean.to_csv(),
            "emb_noisy.csv": self.noisy.to_csv(),
        }

    def write(self, outdir) -> None:
        _write(Path(outdir), self.files())


def gen_homophily(config: HomophilyConfig = HomophilyConfig()) -> HomophilyData:
    """Stochastic block model graph with class-centroid embeddings."""
    rng = np.random.default_rng(config.seed)
    n, k = config.nodes, config.classes
    labels = rng.permutation(np.arange(n) % k)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            p = config.p_in if labels[i] == labels[j] else config.p_out
            if rng.random() < p:
                edges.append((i, j))
    centroids = rng.normal(0.0, 1.0, (k, config.embed_dim))
    clean = centroids[labels] + rng.normal(0.0, 0.1, (n, config.embed_dim))
    labeled = np.zeros(n, dtype=bool)
    labeled[rng.permutation(n)[: int(round(config.labeled * n))]] = True
    names = tuple(f"N{i}" for i in range(n))
    spec = bundled_spec("gnn").with_domains([Domain("node", names), Domain("class", tuple(f"C{c}" for c in range(k)))])
    clean_store = EmbeddingStore(names, clean)
    return HomophilyData(spec, labels, edges, labeled, clean_store, add_noise(clean_store, config.noise_sigma, config.seed))


def add_noise(store: EmbeddingStore, sigma: float, seed: int) -> EmbeddingStore:
    """Gaussian perturbation of every vector; one noise draw per seed, scaled by ``sigma``."""
    if sigma < 0:
        raise ConfigError("noise sigma must be non-negative")
    rng = np.random.default_rng([seed, 1])
    return store.with_vectors(store.vectors + sigma * rng.normal(0.0, 1.0, store.vectors.shape))


# --- IRT students --------------------------------------------------------------------------------

ORDERINGS = ("E", "P", "H")


@dataclass(frozen=True)
class IrtConfig:
    problems: int = 50
    students: int = 1000
    concepts: int = 2
    eta: float = 0.1
    rho: float = 0.5  # gain fraction when a problem comes before its direct prerequisite
    held_out: int = 10
    max_swaps: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.problems < 1 or self.concepts < 1 or self.students < 1:
            raise ConfigError("problems, students and concepts must be positive")
        if self.concepts > self.problems:
            raise ConfigError("every concept needs at least one problem")

    @classmethod
    def from_name(cls, name: str, **overrides) -> "IrtConfig":
        """``Student-p-n-c``: p problems, n*1000 students, c concepts."""
        m = re.fullmatch(r"Student-(\d+)-(\d+)-(\d+)", name)
        if not m:
            raise ConfigError(f"dataset name {name!r} is not of the form Student-p-n-c")
        p, n, c = map(int, m.groups())
        return cls(**{"problems": p, "students": n * 1000, "concepts": c, **overrides})


@dataclass
class IrtData:
    config: IrtConfig
    concept: np.ndarray  # per problem
    difficulty: np.ndarray  # per problem
    order: list[np.ndarray]  # original attempt order per student
    correct: np.ndarray  # students x problems
    skills0: np.ndarray  # students x concepts
    embeddings: dict[str, EmbeddingStore]  # "spec", "E", "P", "H"
    query: list[tuple[int, int]]

    @property
    def students(self):
        return tuple(f"S{i}" for i in range(self.correct.shape[0]))

    @property
    def problems(self):
        return tuple(f"P{j}" for j in range(self.correct.shape[1]))

    def prerequisites(self) -> list[tuple[int, int]]:
        pairs = []
        P = len(self.concept)
        for a in range(P):
            for b in range(P):
                if self.concept[a] == self.concept[b] and self.difficulty[a] < self.difficulty[b]:
                    pairs.append((a, b))
        return pairs

    @property
    def spec(self) -> Spec:
        return bundled_spec("kt").with_domains([Domain("student", self.students), Domain("problem", self.problems)])

    def evidence(self) -> EvidenceDB:
        S, P = self.students, self.problems
        lits = {GroundAtom("PreRequisite", (P[a], P[b])): 1 for a, b in self.prerequisites()}
        hidden = set(self.query)
        for s in range(len(S)):
            for p in range(len(P)):
                if (s, p) not in hidden:
                    lits[GroundAtom("Correct", (S[s], P[p]))] = int(self.correct[s, p])
        return EvidenceDB(lits, frozenset({"PreRequisite"}))

    def truth(self) -> dict:
        S, P = self.students, self.problems
        return {GroundAtom("Correct", (S[s], P[p])): int(self.correct[s, p]) for s, p in self.query}

    def files(self) -> dict[str, str]:
        out = {
            "spec.hmln": render_spec(self.spec),
            "evidence.db": render_evidence(self.evidence().literals),
            "truth.db": render_evidence(self.truth()),
            "problems.csv": "problem,concept,difficulty\n" + "".join(
                f"{p},{int(c)},{float(d)!r}\n" for p, c, d in zip(self.problems, self.concept, self.difficulty)),
            "responses.csv": "student,step,problem,correct\n" + "".join(
                f"{self.students[s]},{t},{self.problems[p]},{int(self.correct[s, p])}\n"
                for s in range(len(self.order)) for t, p in enumerate(self.order[s])),
        }
        for k, store in self.embeddings.items():
            out[f"emb_{k}.csv"] = store.to_csv()
        return out

    def write(self, outdir) -> None:
        _write(Path(outdir), self.files())


def p_correct(skill, difficulty):
    """One-parameter logistic response model."""
    return 1.0 / (1.0 + np.exp(-(skill - difficulty)))


def _direct_prereq(concept, difficulty) -> np.ndarray:
    """Next-easier problem of the same concept (-1 for the easiest)."""
    out = np.full(len(concept), -1)
    for c in np.unique(concept):
        members = np.flatnonzero(concept == c)
        ranked = members[np.argsort(difficulty[members], kind="stable")]
        out[ranked[1:]] = ranked[:-1]
    return out


def replay(order, concept, skills0, eta, rho=1.0, prereq=None) -> np.ndarray:
    """Final per-concept skills after a sequence of attempts.

    With ``prereq`` given, an attempt gains the full ``eta`` only if the
    problem's direct prerequisite was attempted earlier, else ``rho * eta``.
    """
    skills = np.array(skills0, dtype=float)
    seen = set()
    for p in order:
        gain = eta
        if prereq is not None and prereq[p] >= 0 and prereq[p] not in seen:
            gain = rho * eta
        skills[concept[p]] += gain
        seen.add(int(p))
    return skills


def _curriculum(rng, concept, difficulty) -> np.ndarray:
    """Within each concept easiest first; concepts randomly interleaved."""
    queues = {int(c): list(np.flatnonzero(concept == c)[np.argsort(difficulty[concept == c], kind="stable")])
              for c in np.unique(concept)}
    slots = np.concatenate([np.full(len(q), c) for c, q in queues.items()])
    rng.shuffle(slots)
    return np.array([queues[int(c)].pop(0) for c in slots])


def _violate(rng, order, concept, difficulty, max_swaps) -> np.ndarray:
    """Swap random same-concept pairs so the harder problem comes first."""
    order = order.copy()
    for _ in range(int(rng.integers(0, max_swaps + 1))):
        i, j = sorted(rng.choice(len(order), 2, replace=False))
        a, b = order[i], order[j]
        if concept[a] == concept[b] and difficulty[a] < difficulty[b]:
            order[i], order[j] = b, a
    return order


def gen_irt(config: IrtConfig = IrtConfig()) -> IrtData:
    """Students answer every problem along a curriculum; skills grow by eta per same-concept attempt."""
    rng = np.random.default_rng(config.seed)
    P, S, C = config.problems, config.students, config.concepts
    concept = np.concatenate([np.arange(C), rng.integers(0, C, P - C)])
    rng.shuffle(concept)
    difficulty = rng.normal(0.0, 1.0, P)
    skills0 = rng.normal(0.0, 1.0, (S, C))
    prereq = _direct_prereq(concept, difficulty)
    order, correct = [], np.zeros((S, P), dtype=np.int8)
    spec_emb = np.zeros((S, C))
    for s in range(S):
        o = _curriculum(rng, concept, difficulty)
        skill = skills0[s].copy()
        for p in o:
            correct[s, p] = rng.random() < p_correct(skill[concept[p]], difficulty[p])
            skill[concept[p]] += config.eta
        order.append(o)
        spec_emb[s] = replay(o, concept, skills0[s], config.eta, config.rho, prereq)
    emb = {"spec": spec_emb, "E": np.zeros_like(spec_emb), "P": np.zeros_like(spec_emb), "H": np.zeros_like(spec_emb)}
    vrng = np.random.default_rng([config.seed, 2])
    for s in range(S):
        # exchangeable learner: order-invariant gains on a random permutation
        emb["E"][s] = replay(vrng.permutation(order[s]), concept, skills0[s], config.eta)
        # prerequisite-preserving: re-interleave concepts, keep within-concept order
        emb["P"][s] = replay(_curriculum(vrng, concept, difficulty), concept, skills0[s], config.eta, config.rho, prereq)
        # prerequisite-violating: harder problems moved before easier ones
        h = _violate(vrng, order[s], concept, difficulty, config.max_swaps)
        emb["H"][s] = replay(h, concept, skills0[s], config.eta, config.rho, prereq)
    names = tuple(f"S{i}" for i in range(S))
    stores = {k: EmbeddingStore(names, v) for k, v in emb.items()}
    cells = rng.choice(S * P, min(config.held_out, S * P), replace=False)
    query = sorted((int(c // P), int(c % P)) for c in cells)
    return IrtData(config, concept, difficulty, order, correct, skills0, stores, query)


# --- tiny random models -----------------------------------------------------------------------


def random_hmln(rng, hybrid: bool = False, n_props: int | None = None, weight_range: float = 3.0,
                n_evidence: int | None = None, constants=("A", "B", "C")):
    """A random spec over a few constants (15 symbolic atoms for three), plus random evidence and distances.

    Returns (spec, evidence dict, sub-symbolic value array).
    """
    ops = ["^", "v", "=>", "<=>"]
    lits = ["P(x)", "Q(x)", "R(x,y)", "!P(y)", "Q(y)", "!R(y,x)"]
    props = []
    for _ in range(n_props or int(rng.integers(1, 4))):
        a = rng.choice(lits, size=3)
        f = f"{a[0]} {rng.choice(ops)} ({a[1]} {rng.choice(ops)} {a[2]})"
        if hybrid and rng.random() < 0.5:
            f = f"(D(x,y) {rng.choice(['<', '>'])} {rng.uniform(0, 1):.2f}) * ({f})"
        props.append(f"{rng.uniform(-weight_range, weight_range):.3f} {f}")
    text = (f"domain d = {{{', '.join(constants)}}}\n"
            "predicate P(d)\npredicate Q(d)\npredicate R(d,d)\nsubsymbolic D(d,d)\n" + "\n".join(props) + "\n")
    spec = parse_spec(text)
    sym = [a for a in spec.ground_atoms(Kind.SYMBOLIC)]
    k = int(rng.integers(3, 9)) if n_evidence is None else n_evidence
    ev = {sym[i]: int(rng.integers(0, 2)) for i in sorted(rng.choice(len(sym), size=k, replace=False))}
    return spec, ev, rng.uniform(0.0, 1.0, len(constants) ** 2)
