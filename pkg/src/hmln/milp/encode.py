"""MAP inference as a mixed binary/continuous linear program.

Groundings whose value is already determined by the fixed atoms are summed
into a constant. Every remaining grounding contributes ``w * g(u) * [f]``:
the symbolic part ``f`` becomes a literal through Tseitin auxiliaries, and
the soft term ``g(u)`` is encoded per free sub-symbolic atom in one of four
ways:

``eliminate``  every use has a fixed symbolic part, so the atom's whole
               contribution is a univariate function maximized directly;
``extremes``   every use shares one soft function, whose weighted optimum
               lies at a bound or at the peak. A candidate that wins for
               every literal value fixes the atom; if the literals touch
               few free atoms, the best choice is tabulated over their
               assignments; otherwise one binary per candidate picks it;
``hypograph``  positive weight on a concave g: t <= each chord;
``lambda``     convex-combination weights with segment binaries.

Independent groups of residual groundings are solved as separate problems.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from ..logic import And, Atom, ConfigError, Iff, Implies, Not, Or, SoftEq, SoftIneq
from ..model import UNKNOWN, GroundModel
from .bb import Limits, solve
from .piecewise import add_lambda, piecewise_linearize
from .problem import MapResult, MilpProblem, Status


@dataclass(frozen=True)
class EncodeConfig:
    segments: int = 16
    sub_bounds: tuple[float, float] | None = None
    eliminate: bool = True
    extremes: bool = True
    hypograph: bool = True
    table_max: int = 6  # tabulate an extremes atom whose literals touch at most this many free atoms
    backend: str = "auto"
    limits: Limits = Limits()


@dataclass
class _Term:
    g: object
    key: tuple
    coef: dict  # sub-symbolic atom id -> coefficient in u
    const: float


@dataclass
class _Residual:
    p: int
    g: int
    weight: float
    tree: object  # None means the symbolic part is true
    scale: float = 1.0
    term: _Term | None = None


@dataclass
class MapSolution:
    status: Status
    objective: float  # value of the encoded objective
    sym: np.ndarray | None
    sub: np.ndarray | None
    n_binaries: int = 0
    n_vars: int = 0
    model: GroundModel | None = field(default=None, repr=False, compare=False)

    @property
    def feasible(self) -> bool:
        return self.sym is not None

    @cached_property
    def score(self) -> float:
        """Exact weighted sum at the decoded world."""
        if self.sym is None or self.model is None:
            return -math.inf
        return float(self.model.score_arrays(self.sym, self.sub))


# --- symbolic simplification ------------------------------------------------------


def simplify(node, ids: dict, g: int, sym: np.ndarray):
    """Ground tree with fixed atoms folded in: bool, or nested tuples over free atom ids."""
    if isinstance(node, Atom):
        i = int(ids[node][g])
        v = sym[i]
        return ("v", i) if v == UNKNOWN else bool(v)
    if isinstance(node, Not):
        a = simplify(node.arg, ids, g, sym)
        if isinstance(a, bool):
            return not a
        return a[1] if a[0] == "not" else ("not", a)
    if isinstance(node, Implies):
        return _nary("or", [_neg(simplify(node.lhs, ids, g, sym)), simplify(node.rhs, ids, g, sym)])
    if isinstance(node, And):
        return _nary("and", [simplify(a, ids, g, sym) for a in node.args])
    if isinstance(node, Or):
        return _nary("or", [simplify(a, ids, g, sym) for a in node.args])
    if isinstance(node, Iff):
        a = simplify(node.lhs, ids, g, sym)
        b = simplify(node.rhs, ids, g, sym)
        if isinstance(a, bool) and isinstance(b, bool):
            return a == b
        if isinstance(a, bool):
            a, b = b, a
        if isinstance(b, bool):
            return a if b else _neg(a)
        return ("iff", a, b)
    raise TypeError(f"not a symbolic node: {node!r}")


def _neg(a):
    if isinstance(a, bool):
        return not a
    return a[1] if a[0] == "not" else ("not", a)


def _nary(op, items):
    absorb = op == "or"  # True absorbs an Or, False absorbs an And
    out = []
    for it in items:
        if isinstance(it, bool):
            if it == absorb:
                return absorb
            continue
        if it[0] == op:
            out.extend(it[1])
        else:
            out.append(it)
    if not out:
        return not absorb
    if len(out) == 1:
        return out[0]
    return (op, tuple(out))


def tree_atoms(t, acc=None) -> set:
    acc = set() if acc is None else acc
    if isinstance(t, bool) or t is None:
        return acc
    if t[0] == "v":
        acc.add(t[1])
    elif t[0] == "not":
        tree_atoms(t[1], acc)
    elif t[0] == "iff":
        tree_atoms(t[1], acc)
        tree_atoms(t[2], acc)
    else:
        for c in t[1]:
            tree_atoms(c, acc)
    return acc


def _eval_tree(t, support, bits) -> np.ndarray:
    """Truth of tree t (None = true) for each row of ``bits`` over the ``support`` atoms."""
    if t is None:
        return np.ones(len(bits))
    col = {a: k for k, a in enumerate(support)}

    def ev(t):
        if t[0] == "v":
            return bits[:, col[t[1]]]
        if t[0] == "not":
            return ~ev(t[1])
        if t[0] == "iff":
            return ev(t[1]) == ev(t[2])
        vals = [ev(c) for c in t[1]]
        return np.logical_and.reduce(vals) if t[0] == "and" else np.logical_or.reduce(vals)

    return ev(t).astype(float)


def _single_atom(comp):
    """(atom, sign, constant) when u = +-atom + constant for every grounding, else None."""
    lhs, rhs = comp.cont_ops
    if isinstance(lhs, Atom) and not isinstance(rhs, Atom):
        return lhs, 1.0, -float(rhs)
    if isinstance(rhs, Atom) and not isinstance(lhs, Atom):
        return rhs, -1.0, float(lhs)
    return None


def _gkey(node) -> tuple:
    if isinstance(node, SoftEq):
        return ("eq",)
    if isinstance(node, SoftIneq):
        return ("ineq", node.op, float(node.softness))
    return ("id",)


# --- problem construction ----------------------------------------------------------------


class _Builder:
    def __init__(self, config: EncodeConfig, bounds: tuple[float, float]):
        self.p = MilpProblem()
        self.cfg = config
        self.lo, self.hi = bounds
        self.xvar: dict[int, int] = {}
        self.dvar: dict[int, int] = {}
        self.cache: dict = {}
        self.naux = 0
        self.fixed_sub: dict[int, float] = {}
        self.lam: dict = {}
        self.ext: dict = {}
        self.fixed_g: dict[int, float] = {}
        self.tables: dict[tuple, np.ndarray] = {}  # support atoms -> summed table
        self.tabulated: dict[int, tuple] = {}  # atom -> (support, weights, literal tables, cands, values)
        self.products: list[tuple] = []  # (z, t expression, literal expression) with z = t * L

    # literals are (variable, negated)
    def x(self, i: int) -> int:
        if i not in self.xvar:
            self.xvar[i] = self.p.add_binary(f"x{i}")
        return self.xvar[i]

    def d(self, i: int) -> int:
        if i not in self.dvar:
            self.dvar[i] = self.p.add_continuous(f"d{i}", self.lo, self.hi)
        return self.dvar[i]

    def aux(self, tag: str, lo=None, hi=None) -> int:
        self.naux += 1
        name = f"{tag}{self.naux}"
        if lo is None:
            return self.p.add_binary(name)
        return self.p.add_continuous(name, lo, hi)

    def lit(self, t):
        if t[0] == "v":
            return (self.x(t[1]), False)
        if t[0] == "not":
            v, neg = self.lit(t[1])
            return (v, not neg)
        if t[0] == "iff":
            kids = (self.lit(t[1]), self.lit(t[2]))
        else:
            kids = tuple(self.lit(c) for c in t[1])
        key = (t[0], kids)
        if key in self.cache:
            return self.cache[key]
        # continuous: the two-sided rows below force z to 0/1 once the inputs are
        z = self.aux("a", 0.0, 1.0)
        Z = ({z: 1.0}, 0.0)
        L = [self.lit_expr(l) for l in kids]
        if t[0] == "and":
            for e in L:
                self.con(_expr_add(Z, e, -1.0), "<=", 0.0)
            total = Z
            for e in L:
                total = _expr_add(total, e, -1.0)
            self.con(total, ">=", -(len(L) - 1))
        elif t[0] == "or":
            for e in L:
                self.con(_expr_add(Z, e, -1.0), ">=", 0.0)
            total = Z
            for e in L:
                total = _expr_add(total, e, -1.0)
            self.con(total, "<=", 0.0)
        else:
            a, bb = L
            # z >= a + b - 1, z >= 1 - a - b, z <= 1 - a + b, z <= 1 + a - b
            for sa, sb, sense, rhs in ((-1, -1, ">=", -1), (1, 1, ">=", 1), (1, -1, "<=", 1), (-1, 1, "<=", 1)):
                self.con(_expr_add(_expr_add(Z, a, sa), bb, sb), sense, rhs)
        self.cache[key] = (z, False)
        return (z, False)

    def con(self, expr, sense, rhs):
        self.p.add_constraint(expr[0], sense, rhs - expr[1])

    def lit_expr(self, l) -> tuple[dict, float]:
        v, neg = l
        return ({v: -1.0}, 1.0) if neg else ({v: 1.0}, 0.0)

    def add_obj_expr(self, expr, scale):
        coeffs, const = expr
        for j, a in coeffs.items():
            self.p.add_objective(j, scale * a)
        self.p.objective_constant += scale * const


def _expr_add(a, b, s=1.0):
    out = dict(a[0])
    for j, v in b[0].items():
        out[j] = out.get(j, 0.0) + s * v
    return out, a[1] + s * b[1]


def _maximize_1d(F, lo, hi, candidates=()):
    """Global maximum of a smooth univariate function on [lo, hi] (grid plus local polish)."""
    grid = np.unique(np.concatenate([np.linspace(lo, hi, 2049), np.clip(np.asarray(candidates, float), lo, hi)]))
    vals = np.array([F(x) for x in grid])
    i = int(np.argmax(vals))
    best_x, best_v = float(grid[i]), float(vals[i])
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if b > a:
        r = minimize_scalar(lambda x: -F(x), bounds=(a, b), method="bounded", options={"xatol": 1e-12})
        if -r.fun > best_v:
            best_x, best_v = float(r.x), float(-r.fun)
    return best_x, best_v


class MapContext:
    """MAP state for one fixing of the atoms; reusable across conditioned solves.

    ``sym``: symbolic values with UNKNOWN for free atoms (default: the evidence).
    ``sub``: sub-symbolic values with NaN for free atoms (default: all free).
    """

    def __init__(self, model: GroundModel, sym=None, sub=None, config: EncodeConfig = EncodeConfig()):
        self.model = model
        self.cfg = config
        self.sym = np.array(model.evidence if sym is None else sym, dtype=float)
        self.sub = np.full(model.index.n_sub, np.nan) if sub is None else np.array(sub, dtype=float)
        free_sub = np.isnan(self.sub)
        self.bounds = (0.0, 0.0)
        if free_sub.any():
            if config.sub_bounds is not None:
                self.bounds = tuple(map(float, config.sub_bounds))
            else:
                obs = model.subsymbolic[~np.isnan(model.subsymbolic)]
                if len(obs) == 0:
                    if free_sub[self._used_sub()].any():
                        raise ConfigError("free sub-symbolic atoms need a configured range (no observed values)")
                    obs = np.zeros(1)  # declared but unused: any value will do
                self.bounds = (0.0, float(obs.max()))
            if self.bounds[1] - self.bounds[0] < 1e-12:
                self.sub[free_sub] = self.bounds[0]
        self.constant = 0.0
        self.residuals: list[_Residual] = []
        self._ground()
        self._components()
        self._cache: dict[int, tuple] = {}

    def _used_sub(self) -> np.ndarray:
        ids = [np.zeros(0, dtype=np.int64)]
        for comp in self.model.compiled:
            if comp.continuous is not None:
                ids += [np.asarray(comp.atom_ids[t], dtype=np.int64).ravel() for t in comp.cont_ops if isinstance(t, Atom)]
        return np.unique(np.concatenate(ids))

    # --- residual detection --------------------------------------------------------
    def _ground(self):
        m = self.model
        for p, comp in enumerate(m.compiled):
            w = m.grounding_weights(p)
            kv = comp.sym_values(self.sym)
            if comp.continuous is None:
                self.constant += float(w[kv != UNKNOWN] @ kv[kv != UNKNOWN])
                for g in np.flatnonzero((kv == UNKNOWN) & (w != 0)):
                    self._residual(p, int(g), float(w[g]), 1.0, None)
                continue
            u = comp.cont_arg(self.sub)
            known = ~np.isnan(u)
            gval = np.where(known, comp.cont_fn(np.where(known, u, 0.0)), np.nan)
            sure = (kv == 1.0) & known
            self.constant += float(w[sure] @ gval[sure])
            open_ = ((kv == UNKNOWN) | ~known) & (kv != 0.0) & (w != 0)
            single = _single_atom(comp)
            if single is not None:
                # groundings with a true symbolic part share g(+-d + c): sum their weights per atom
                atom, side, const = single
                ids = comp.atom_ids[atom]
                agg = open_ & (kv == 1.0) & ~known
                if agg.any():
                    K = np.bincount(ids[agg], weights=w[agg], minlength=m.index.n_sub)
                    for i in np.flatnonzero(K):
                        term = _Term(comp.cont_fn, _gkey(comp.continuous), {int(i): side}, const)
                        self.residuals.append(_Residual(p, -1, float(K[i]), None, 1.0, term))
                    open_ &= ~agg
            for g in np.flatnonzero(open_):
                g = int(g)
                if known[g]:
                    if gval[g] != 0.0:
                        self._residual(p, g, float(w[g]), float(gval[g]), None)
                else:
                    self._residual(p, g, float(w[g]), 1.0, self._term(comp, g))

    def _term(self, comp, g) -> _Term:
        coef, const = {}, 0.0
        for side, t in zip((1.0, -1.0), comp.cont_ops):
            if isinstance(t, Atom):
                i = int(comp.atom_ids[t][g])
                if np.isnan(self.sub[i]):
                    coef[i] = coef.get(i, 0.0) + side
                else:
                    const += side * self.sub[i]
            else:
                const += side * float(t)
        coef = {i: c for i, c in coef.items() if c != 0.0}
        return _Term(comp.cont_fn, _gkey(comp.continuous), coef, const)

    def _residual(self, p, g, w, scale, term):
        comp = self.model.compiled[p]
        tree = None
        if comp.symbolic is not None:
            tree = simplify(comp.symbolic, comp.atom_ids, g, self.sym)
            if tree is False:
                return
            if tree is True:
                tree = None
        if term is not None and not term.coef:
            scale, term = float(term.g(term.const)), None
        if tree is None and term is None:
            self.constant += w * scale
            return
        self.residuals.append(_Residual(p, g, w, tree, scale, term))

    # --- decomposition -----------------------------------------------------------------
    def _nodes(self, r: _Residual):
        out = [("s", i) for i in sorted(tree_atoms(r.tree))]
        if r.term is not None:
            out += [("d", i) for i in sorted(r.term.coef)]
        return out

    def _components(self):
        parent: dict = {}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for r in self.residuals:
            nodes = self._nodes(r)
            for n in nodes:
                parent.setdefault(n, n)
            for n in nodes[1:]:
                ra, rb = find(nodes[0]), find(n)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        groups: dict = {}
        for k, r in enumerate(self.residuals):
            groups.setdefault(find(self._nodes(r)[0]), []).append(k)
        self.components = sorted(groups.values(), key=lambda ks: ks[0])
        self.comp_of = {}
        for c, ks in enumerate(self.components):
            for k in ks:
                for n in self._nodes(self.residuals[k]):
                    self.comp_of[n] = c

    # --- encoding -----------------------------------------------------------------------
    def encode(self, residual_ids=None, condition=None) -> tuple[MilpProblem, _Builder]:
        """Problem over the given residuals; ``condition`` = (tree, value) adds [tree] = value."""
        ids = range(len(self.residuals)) if residual_ids is None else residual_ids
        res = [self.residuals[k] for k in ids]
        b = _Builder(self.cfg, self.bounds)
        uses: dict[int, list] = {}
        for r in res:
            if r.term is not None:
                for i in r.term.coef:
                    uses.setdefault(i, []).append(r)
        mode = {i: self._mode(rs) for i, rs in sorted(uses.items())}
        for i in sorted(uses):
            if mode[i] == "eliminate":
                self._eliminate(b, i, uses[i])
            elif mode[i] == "extremes":
                self._extremes(b, i, uses[i])
        for r in res:
            if r.term is not None and len(r.term.coef) == 1 and next(iter(r.term.coef)) in b.tabulated:
                continue
            lit = b.lit(r.tree) if r.tree is not None else None
            if r.term is None:
                b.add_obj_expr(b.lit_expr(lit), r.weight * r.scale)
                continue
            (i0,) = r.term.coef if len(r.term.coef) == 1 else (None,)
            if i0 is not None and (mode.get(i0) == "eliminate" or i0 in b.tabulated):
                continue
            if i0 is not None and i0 in b.fixed_g:
                b.add_obj_expr(b.lit_expr(lit) if lit is not None else ({}, 1.0), r.weight * b.fixed_g[i0])
                continue
            if i0 is not None and mode.get(i0) == "extremes" and lit is not None:
                self._extreme_product(b, i0, r.weight, b.lit_expr(lit))
                continue
            t_expr, glo, ghi = self._soft(b, r, mode)
            if lit is None:
                b.add_obj_expr(t_expr, r.weight)
                continue
            lo, hi = min(glo, 0.0), max(ghi, 0.0)
            z = b.aux("z", lo, hi)
            L = b.lit_expr(lit)
            Z = ({z: 1.0}, 0.0)
            # z = t * L:  glo L <= z <= ghi L,  t - ghi (1 - L) <= z <= t - glo (1 - L)
            b.con(_expr_add(Z, L, -glo), ">=", 0.0)
            b.con(_expr_add(Z, L, -ghi), "<=", 0.0)
            base = _expr_add(Z, t_expr, -1.0)
            b.con(_expr_add(base, L, -ghi), ">=", -ghi)
            b.con(_expr_add(base, L, -glo), "<=", -glo)
            b.p.add_objective(z, r.weight)
            b.products.append((z, t_expr, L))
        for support, table in sorted(b.tables.items()):
            self._encode_table(b, support, table)
        if condition is not None:
            tree, value = condition
            v, neg = b.lit(tree)
            want = float(value) if not neg else 1.0 - float(value)
            b.p.add_constraint({v: 1.0}, "=", want)
        return b.p, b

    def _mode(self, rs) -> str:
        uni = all(len(r.term.coef) == 1 for r in rs)
        if uni and self.cfg.eliminate and all(r.tree is None for r in rs):
            return "eliminate"
        if uni and self.cfg.extremes:
            keys = {(r.term.key, tuple(r.term.coef.values()), r.term.const) for r in rs}
            if len(keys) == 1:
                return "extremes"
        return "pwl"

    def _eliminate(self, b: _Builder, i: int, rs):
        terms = [(r.weight * r.scale, r.term.g, r.term.coef[i], r.term.const) for r in rs]
        if len({(r.term.key, r.term.coef[i], r.term.const) for r in rs}) == 1:
            # K * g(c d + e) peaks at a bound or where u = 0
            K = sum(t[0] for t in terms)
            _, g, c, e = terms[0]
            cands = [b.lo, b.hi, min(max(-e / c, b.lo), b.hi)]
            vals = [K * float(g(c * x + e)) for x in cands]
            k = int(np.argmax(vals))
            b.fixed_sub[i] = cands[k]
            b.p.objective_constant += vals[k]
            return

        def F(x):
            return sum(w * float(g(c * x + e)) for w, g, c, e in terms)

        peaks = [-e / c for w, g, c, e in terms]
        x, v = _maximize_1d(F, b.lo, b.hi, peaks)
        b.fixed_sub[i] = x
        b.p.objective_constant += v

    def _extremes(self, b: _Builder, i: int, rs):
        t = rs[0].term
        c, e = t.coef[i], t.const
        cands = [b.lo, b.hi]
        if t.key == ("eq",):
            cands.append(min(max(-e / c, b.lo), b.hi))
        cands = sorted(set(cands))
        gv = [float(t.g(c * x + e)) for x in cands]
        # a candidate at least as good for every use, whatever the literals, needs no selector
        for k in range(len(cands)):
            if all(r.weight * (gv[k] - v) >= 0.0 for r in rs for v in gv):
                b.fixed_sub[i] = cands[k]
                b.fixed_g[i] = gv[k]
                return
        support = sorted(set().union(*(tree_atoms(r.tree) for r in rs)))
        if len(support) <= self.cfg.table_max:
            # sum over uses of w * [tree] for every assignment of the support atoms
            bits = np.array(list(itertools.product((0, 1), repeat=len(support))), dtype=bool)
            lits = np.array([_eval_tree(r.tree, support, bits) for r in rs])
            w = np.array([r.weight for r in rs])
            S = w @ lits
            T = np.where(S >= 0, max(gv) * S, min(gv) * S)
            key = tuple(support)
            b.tables[key] = b.tables.get(key, 0.0) + T
            b.tabulated[i] = (support, w, lits, cands, gv)
            return
        d = b.d(i)
        sel = [b.aux("e") for _ in cands]
        b.p.add_constraint({s: 1.0 for s in sel}, "=", 1.0)
        row = {d: 1.0}
        for s, x in zip(sel, cands):
            row[s] = -x
        b.p.add_constraint(row, "=", 0.0)
        b.lam[("ext", i)] = (({s: v for s, v in zip(sel, gv)}, 0.0), min(gv), max(gv))
        b.ext[i] = (sel, gv)

    def _encode_table(self, b: _Builder, support, table):
        """Objective term table[assignment of support] via one-hot assignment selectors."""
        xs = [b.x(a) for a in support]
        if len(support) == 1:
            b.p.objective_constant += float(table[0])
            b.p.add_objective(xs[0], float(table[1] - table[0]))
            return
        bits = list(itertools.product((0, 1), repeat=len(support)))
        # integral x leaves only the matching assignment's selector nonzero, so no binaries needed
        sel = [b.aux("s", 0.0, 1.0) for _ in bits]
        b.p.add_constraint({v: 1.0 for v in sel}, "=", 1.0)
        for j, x in enumerate(xs):
            row = {x: 1.0}
            for v, bv in zip(sel, bits):
                if bv[j]:
                    row[v] = -1.0
            b.p.add_constraint(row, "=", 0.0)
        for v, val in zip(sel, table):
            if val != 0.0:
                b.p.add_objective(v, float(val))

    def _extreme_product(self, b: _Builder, i: int, w: float, L):
        """w * g(d) * L with g(d) = sum_k v_k e_k, via y_k = e_k and L.

        Only the side of each product the objective pushes against is
        constrained: y_k <= e_k and sum y_k <= L for a positive coefficient,
        y_k >= e_k + L - 1 for a negative one.
        """
        sel, gv = b.ext[i]
        ups = []
        for s, v in zip(sel, gv):
            a = w * v
            if a == 0.0:
                continue
            y = b.aux("y", 0.0, 1.0)
            if a > 0:
                b.p.add_constraint({y: 1.0, s: -1.0}, "<=", 0.0)
                ups.append(y)
            else:
                b.con(_expr_add(({y: 1.0, s: -1.0}, 0.0), L, -1.0), ">=", -1.0)
            b.p.add_objective(y, a)
        if ups:
            b.con(_expr_add(({y: 1.0 for y in ups}, 0.0), L, -1.0), "<=", 0.0)

    def _soft(self, b: _Builder, r: _Residual, mode):
        """(t expression, lower, upper) for the soft term of residual r."""
        t = r.term
        ids = sorted(t.coef)
        if len(ids) == 1 and mode[ids[0]] == "extremes":
            return b.lam[("ext", ids[0])]
        # argument range of u = sum coef * d + const
        ulo = t.const + sum(min(c * b.lo, c * b.hi) for c in t.coef.values())
        uhi = t.const + sum(max(c * b.lo, c * b.hi) for c in t.coef.values())
        if len(ids) == 1:
            i = ids[0]
            c = t.coef[i]
            spec = piecewise_linearize(lambda d: t.g(c * d + t.const), b.lo, b.hi, self.cfg.segments)
            arg = ({b.d(i): 1.0}, 0.0)
        else:
            spec = piecewise_linearize(t.g, ulo, uhi, self.cfg.segments)
            arg = ({b.d(i): c for i, c in t.coef.items()}, t.const)
        glo, ghi = float(spec.values.min()), float(spec.values.max())
        if r.weight >= 0 and self.cfg.hypograph:
            tv = b.aux("t", glo, ghi)
            bp, vals = spec.breakpoints, spec.values
            for s, slope in enumerate(spec.slopes()):
                # t <= vals[s] + slope * (arg - bp[s])
                row = {tv: 1.0}
                for j, a in arg[0].items():
                    row[j] = row.get(j, 0.0) - slope * a
                b.p.add_constraint(row, "<=", vals[s] + slope * (arg[1] - bp[s]))
            return ({tv: 1.0}, 0.0), glo, ghi
        # one lambda set per atom (its breakpoints do not depend on g), or per argument for two atoms
        key = ("d", ids[0]) if len(ids) == 1 else ("u", tuple(ids), tuple(t.coef[i] for i in ids), t.const)
        if key not in b.lam:
            lam, _ = add_lambda(b.p, spec, f"p{len(b.lam)}")
            row = {j: -a for j, a in arg[0].items()}
            for j, x in zip(lam, spec.breakpoints):
                row[j] = row.get(j, 0.0) + x
            b.p.add_constraint(row, "=", arg[1])
            b.lam[key] = lam
        lam = b.lam[key]
        return ({j: float(v) for j, v in zip(lam, spec.values)}, 0.0), glo, ghi

    # --- solving --------------------------------------------------------------------------
    def _solve_part(self, residual_ids, condition=None):
        problem, b = self.encode(residual_ids, condition)
        if len(problem) == 0 and not problem.constraints:
            # everything was eliminated; nothing left to search
            return MapResult(Status.OPTIMAL, problem.objective_constant, np.zeros(0), []), b, problem
        res = solve(problem, self.cfg.backend, self.cfg.limits)
        return res, b, problem

    def _component(self, c):
        if c not in self._cache:
            self._cache[c] = self._solve_part(self.components[c])
        return self._cache[c]

    def solve(self, condition=None) -> MapSolution:
        """MAP over the free atoms; ``condition`` = (p, g, value) forces the symbolic part of grounding g."""
        touched, cond = set(), None
        if condition is not None:
            p, g, value = condition
            comp = self.model.compiled[p]
            if comp.symbolic is None:
                raise ConfigError(f"property {p} has no symbolic part to condition on")
            tree = simplify(comp.symbolic, comp.atom_ids, g, self.sym)
            if isinstance(tree, bool):
                if tree != bool(value):
                    return MapSolution(Status.INFEASIBLE, -math.inf, None, None)
            else:
                cond = (tree, value)
                touched = {self.comp_of[("s", i)] for i in tree_atoms(tree) if ("s", i) in self.comp_of}
        parts = []
        for c in range(len(self.components)):
            if c not in touched:
                parts.append(self._component(c))
        if cond is not None:
            ids = sorted(k for c in touched for k in self.components[c])
            parts.append(self._solve_part(ids, cond))
        return self._assemble(parts)

    def _assemble(self, parts) -> MapSolution:
        sym = np.where(self.sym == UNKNOWN, 0.0, self.sym)
        sub = np.where(np.isnan(self.sub), self.bounds[0], self.sub)
        status, objective, nb, nv = Status.OPTIMAL, self.constant, 0, 0
        for res, b, problem in parts:
            nb += problem.n_binaries
            nv += len(problem)
            if res.status == Status.INFEASIBLE:
                return MapSolution(Status.INFEASIBLE, -math.inf, None, None, nb, nv)
            if res.x is None:
                return MapSolution(Status.RESOURCE_LIMIT, -math.inf, None, None, nb, nv)
            if res.status == Status.RESOURCE_LIMIT:
                status = Status.RESOURCE_LIMIT
            objective += res.objective
            for i, j in b.xvar.items():
                sym[i] = round(res.x[j])
            for i, j in b.dvar.items():
                sub[i] = res.x[j]
            for i, x in b.fixed_sub.items():
                sub[i] = x
            for i, (support, w, lits, cands, gv) in b.tabulated.items():
                j = int(np.dot(sym[support].astype(int), 1 << np.arange(len(support))[::-1]))
                S = float(w @ lits[:, j])
                sub[i] = cands[int(np.argmax([v * S for v in gv]))]
        return MapSolution(status, float(objective), sym, sub, nb, nv, self.model)


def encode_map(model: GroundModel, sym=None, sub=None, config: EncodeConfig = EncodeConfig(), condition=None) -> MilpProblem:
    """One problem for the whole model (constants folded into the objective)."""
    ctx = MapContext(model, sym, sub, config)
    cond = None
    if condition is not None:
        p, g, value = condition
        comp = model.compiled[p]
        tree = simplify(comp.symbolic, comp.atom_ids, g, ctx.sym)
        if not isinstance(tree, bool):
            cond = (tree, value)
    problem, _ = ctx.encode(None, cond)
    problem.objective_constant += ctx.constant
    return problem


def solve_map(model: GroundModel, sym=None, sub=None, config: EncodeConfig = EncodeConfig(), condition=None) -> MapSolution:
    return MapContext(model, sym, sub, config).solve(condition)
