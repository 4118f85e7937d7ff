"""Embedding stores, evidence databases and sub-symbolic atom evaluation."""
from __future__ import annotations

import csv
import io
import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .logic import ConfigError, GroundAtom, Kind, Spec, is_variable

METRICS = ("euclidean", "cosine")


class DataError(ValueError):
    """Malformed embedding or evidence input."""


@dataclass(frozen=True)
class EmbeddingStore:
    keys: tuple[str, ...]
    vectors: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        vecs = np.asarray(self.vectors, dtype=float)
        if vecs.ndim != 2 or vecs.shape[0] != len(self.keys):
            raise DataError("one vector per key is required")
        if len(set(self.keys)) != len(self.keys):
            raise DataError("duplicate embedding key")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "_row", {k: i for i, k in enumerate(self.keys)})

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, key) -> bool:
        return key in self._row

    def vector(self, key: str) -> np.ndarray:
        try:
            return self.vectors[self._row[key]]
        except KeyError:
            raise DataError(f"no embedding for key {key!r}") from None

    def rows(self, keys) -> np.ndarray:
        try:
            return np.fromiter((self._row[k] for k in keys), dtype=np.int64, count=len(keys))
        except KeyError as e:
            raise DataError(f"no embedding for key {e.args[0]!r}") from None

    def distance(self, a: str, b: str) -> float:
        return float(pairwise_distance(self.vector(a)[None], self.vector(b)[None], self.metric)[0, 0])

    def with_vectors(self, vectors) -> "EmbeddingStore":
        return EmbeddingStore(self.keys, vectors, self.metric)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for k, v in zip(self.keys, self.vectors):
            w.writerow([k, *(repr(float(x)) for x in v)])
        return buf.getvalue()


def pairwise_distance(x: np.ndarray, y: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Distance matrix between rows of x and rows of y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if metric == "euclidean":
        diff = x[:, None, :] - y[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if metric == "cosine":
        nx = np.linalg.norm(x, axis=1)
        ny = np.linalg.norm(y, axis=1)
        dots = x @ y.T
        denom = nx[:, None] * ny[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
        out = 1.0 - np.clip(cos, -1.0, 1.0)
        both_zero = (nx[:, None] == 0) & (ny[None, :] == 0)
        same = np.all(x[:, None, :] == y[None, :, :], axis=2)
        return np.where(both_zero | same, 0.0, out)
    raise ConfigError(f"unknown metric {metric!r}")


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def parse_embeddings(text: str, metric: str = "euclidean") -> EmbeddingStore:
    """Rows ``key[,key2],v1,...,vd``; multi-column keys are joined with ``|``."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(f.strip() for f in r)]
    if rows and not any(_is_number(f.strip()) for f in rows[0]):
        rows = rows[1:]
    keys, vecs, dim, nkey = [], [], None, None
    for lineno, row in enumerate(rows, start=1):
        fields = [f.strip() for f in row]
        k = 0
        while k < len(fields) and not _is_number(fields[k]):
            k += 1
        if k == 0:
            raise DataError(f"row {lineno}: missing key")
        if nkey is None:
            nkey = k
        vals = fields[nkey:]
        key = "|".join(fields[:nkey])
        for f in vals:
            if not _is_number(f):
                raise DataError(f"row {lineno}: non-numeric field {f!r}")
        if dim is None:
            dim = len(vals)
            if dim == 0:
                raise DataError(f"row {lineno}: no vector components")
        elif len(vals) != dim:
            raise DataError(f"row {lineno}: ragged row ({len(vals)} values, expected {dim})")
        keys.append(key)
        vecs.append([float(v) for v in vals])
    if len(set(keys)) != len(keys):
        dup = next(k for k in keys if keys.count(k) > 1)
        raise DataError(f"duplicate key {dup!r}")
    if not keys:
        raise DataError("no embeddings")
    return EmbeddingStore(tuple(keys), np.array(vecs, dtype=float), metric)


def load_embeddings(path, metric: str = "euclidean") -> EmbeddingStore:
    return parse_embeddings(Path(path).read_text(encoding="utf-8"), metric)


def subsymbolic_values(spec: Spec, schema_name: str, store: EmbeddingStore) -> np.ndarray:
    """Distances for every ground atom of a sub-symbolic schema, shaped by its domains.

    An atom of arity 2k compares the embedding keyed by its first k arguments with
    the embedding keyed by its last k arguments.
    """
    schema = spec.schema(schema_name)
    if schema.kind != Kind.SUBSYMBOLIC:
        raise ConfigError(f"{schema_name} is not sub-symbolic")
    k = schema.arity // 2
    doms = [spec.domain(d).constants for d in schema.arg_domains]
    left = ["|".join(c) for c in itertools.product(*doms[:k])]
    right = ["|".join(c) for c in itertools.product(*doms[k:])]
    lv = store.vectors[store.rows(left)]
    rv = store.vectors[store.rows(right)]
    dist = pairwise_distance(lv, rv, store.metric)
    return dist.reshape([len(d) for d in doms])


def eval_subsymbolic_atoms(spec: Spec, store: EmbeddingStore) -> dict[GroundAtom, float]:
    out: dict[GroundAtom, float] = {}
    for s in spec.schemas:
        if s.kind != Kind.SUBSYMBOLIC:
            continue
        vals = subsymbolic_values(spec, s.name, store).ravel()
        doms = [spec.domain(d).constants for d in s.arg_domains]
        for args, v in zip(itertools.product(*doms), vals):
            out[GroundAtom(s.name, args)] = float(v)
    return out


# --- evidence -----------------------------------------------------------------

_LITERAL = re.compile(r"^(!?)\s*([A-Za-z_]\w*)\s*\(([^()]*)\)$")


@dataclass(frozen=True)
class EvidenceDB:
    literals: dict = field(default_factory=dict)  # GroundAtom -> 0/1
    closed_world: frozenset = frozenset()

    def __len__(self):
        return len(self.literals)

    def value(self, atom: GroundAtom):
        if atom in self.literals:
            return self.literals[atom]
        if atom.predicate in self.closed_world:
            return 0
        return None

    def assignment(self, spec: Spec) -> dict[GroundAtom, int]:
        """Explicit literals plus closed-world defaults."""
        out = dict(self.literals)
        for s in spec.schemas:
            if s.name in self.closed_world:
                doms = [spec.domain(d).constants for d in s.arg_domains]
                for args in itertools.product(*doms):
                    out.setdefault(GroundAtom(s.name, args), 0)
        return out

    def implicit_false(self, spec: Spec) -> int:
        return len(self.assignment(spec)) - len(self.literals)


def parse_evidence(text: str, spec: Spec) -> EvidenceDB:
    lits: dict[GroundAtom, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LITERAL.match(line)
        if not m:
            raise DataError(f"line {lineno}: cannot parse literal {line!r}")
        neg, name, argtext = m.groups()
        try:
            schema = spec.schema(name)
        except ConfigError:
            raise DataError(f"line {lineno}: unknown predicate {name!r}") from None
        if schema.kind != Kind.SYMBOLIC:
            raise DataError(f"line {lineno}: evidence on sub-symbolic predicate {name}")
        args = tuple(a.strip() for a in argtext.split(",")) if argtext.strip() else ()
        if len(args) != schema.arity:
            raise DataError(f"line {lineno}: {name} expects {schema.arity} arguments")
        for a, d in zip(args, schema.arg_domains):
            if is_variable(a) or a not in spec.domain(d)._lookup:
                raise DataError(f"line {lineno}: unknown constant {a!r} for domain {d}")
        atom = GroundAtom(name, args)
        val = 0 if neg else 1
        if lits.get(atom, val) != val:
            raise DataError(f"line {lineno}: contradictory evidence for {atom}")
        lits[atom] = val
    return EvidenceDB(lits, frozenset(spec.closed_world))


def load_evidence(path, spec: Spec) -> EvidenceDB:
    return parse_evidence(Path(path).read_text(encoding="utf-8"), spec)


def render_evidence(literals: dict) -> str:
    lines = []
    for atom, v in literals.items():
        lines.append(("" if v else "!") + str(atom))
    return "\n".join(lines) + ("\n" if lines else "")
