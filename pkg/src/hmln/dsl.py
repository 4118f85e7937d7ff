"""Line-oriented HMLN specification language.

::

    # comment
    domain node = {N1, N2, N3}
    predicate Class(node, class)
    subsymbolic Dist(node, node)
    closedworld Neighbor
    option softness = 1
    0 Class(x1,c) ^ Neighbor(x1,x2) => Class(x2,c)
    0 (Dist(x1,x2) < 0.5 [a=1]) * (Class(x1,c) <=> Class(x2,c))

Connectives by increasing precedence: ``<=>``, ``=>`` (right associative),
``v``, ``^``, ``!``. Soft terms compare numeric terms (sub-symbolic atoms or
numbers) with ``<``, ``>`` or ``==``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .logic import (
    And,
    Atom,
    ConfigError,
    Domain,
    Hybrid,
    Iff,
    Implies,
    Kind,
    Not,
    Or,
    PredicateSchema,
    Property,
    SoftEq,
    SoftIneq,
    Spec,
    is_variable,
)


class ParseError(ConfigError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, column {col}: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col


_TOKEN = re.compile(
    r"\s*(?:(?P<num>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<op><=>|=>|==|[()\[\],!^*<>=])"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*))"
)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(text: str, line: int, offset: int = 0) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos:].lstrip()[:1]!r}", line, offset + pos + 1)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), offset + start + 1))
        pos = m.end()
    return toks


class _FormulaParser:
    def __init__(self, toks, line, schemas, domains, default_softness):
        self.toks = toks
        self.i = 0
        self.line = line
        self.schemas = schemas
        self.domains = domains
        self.softness = default_softness
        self.var_domains: dict[str, str] = {}

    # token helpers
    def peek(self, k=0):
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        col = tok.col if tok else (self.toks[-1].col + len(self.toks[-1].text) if self.toks else 1)
        raise ParseError(msg, self.line, col)

    def take(self, text=None, kind=None):
        tok = self.peek()
        if tok is None:
            self.error(f"expected {text or kind} but line ended")
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            self.error(f"expected {text or kind}, found {tok.text!r}")
        self.i += 1
        return tok

    def at(self, text):
        tok = self.peek()
        return tok is not None and tok.kind == "op" and tok.text == text

    def at_or(self):
        tok = self.peek()
        return tok is not None and tok.kind == "id" and tok.text == "v"

    # grammar
    def parse_property(self):
        first, first_cont = self.parse_factor()
        if self.at("*"):
            self.take("*")
            second, second_cont = self.parse_factor()
            if first_cont == second_cont:
                self.error("a hybrid product needs one continuous and one symbolic factor")
            node = Hybrid(first, second) if first_cont else Hybrid(second, first)
        elif first_cont and isinstance(first, Atom):
            node = Hybrid(first, None)
        else:
            node = first
        if self.peek() is not None:
            self.error(f"unexpected {self.peek().text!r}")
        return node

    def _continuous_ahead(self):
        tok = self.peek()
        if tok is None:
            return False
        if tok.kind == "num" or self._is_subsymbolic(tok):
            return True
        if tok.kind == "op" and tok.text == "(":
            nxt = self.peek(1)
            return nxt is not None and (nxt.kind == "num" or self._is_subsymbolic(nxt))
        return False

    def _is_subsymbolic(self, tok):
        s = self.schemas.get(tok.text) if tok.kind == "id" else None
        return s is not None and s.kind == Kind.SUBSYMBOLIC

    def parse_factor(self):
        if self._continuous_ahead():
            if self.at("("):
                self.take("(")
                node = self.parse_continuous()
                self.take(")")
            else:
                node = self.parse_continuous()
            return node, True
        return self.parse_iff(), False

    def parse_continuous(self):
        lhs = self.parse_numterm()
        tok = self.peek()
        if tok is None or tok.text not in ("<", ">", "=="):
            if isinstance(lhs, Atom):
                return lhs
            self.error("expected a comparison after a number")
        self.i += 1
        rhs = self.parse_numterm()
        if tok.text == "==":
            return SoftEq(lhs, rhs)
        softness = self.softness
        if self.at("["):
            self.take("[")
            key = self.take(kind="id")
            if key.text != "a":
                self.error(f"unknown soft-term option {key.text!r}", key)
            self.take("=")
            val = self.take(kind="num")
            softness = float(val.text)
            if softness <= 0:
                raise ParseError("softness must be positive", self.line, val.col)
            self.take("]")
        return SoftIneq(lhs, rhs, tok.text, softness)

    def parse_numterm(self):
        tok = self.peek()
        if tok is not None and tok.kind == "num":
            self.i += 1
            return float(tok.text)
        return self.parse_atom(Kind.SUBSYMBOLIC)

    def parse_iff(self):
        node = self.parse_implies()
        while self.at("<=>"):
            self.take("<=>")
            node = Iff(node, self.parse_implies())
        return node

    def parse_implies(self):
        node = self.parse_or()
        if self.at("=>"):
            self.take("=>")
            return Implies(node, self.parse_implies())
        return node

    def parse_or(self):
        args = [self.parse_and()]
        while self.at_or():
            self.i += 1
            args.append(self.parse_and())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def parse_and(self):
        args = [self.parse_unary()]
        while self.at("^"):
            self.take("^")
            args.append(self.parse_unary())
        return args[0] if len(args) == 1 else And(tuple(args))

    def parse_unary(self):
        if self.at("!"):
            self.take("!")
            return Not(self.parse_unary())
        if self.at("("):
            self.take("(")
            node = self.parse_iff()
            self.take(")")
            return node
        return self.parse_atom(Kind.SYMBOLIC)

    def parse_atom(self, kind: Kind):
        name = self.take(kind="id")
        schema = self.schemas.get(name.text)
        if schema is None:
            self.error(f"unknown predicate {name.text!r}", name)
        if schema.kind != kind:
            what = "symbolic" if kind == Kind.SYMBOLIC else "numeric"
            self.error(f"{schema.kind.value} predicate {name.text} used where a {what} term is required", name)
        self.take("(")
        args = []
        while True:
            tok = self.take(kind="id") if self.peek() is None or self.peek().kind != "num" else self.take(kind="num")
            args.append(tok)
            if self.at(","):
                self.take(",")
                continue
            break
        self.take(")")
        if len(args) != schema.arity:
            self.error(f"{schema.name} expects {schema.arity} arguments, got {len(args)}", name)
        for tok, dom in zip(args, schema.arg_domains):
            if is_variable(tok.text):
                prev = self.var_domains.setdefault(tok.text, dom)
                if prev != dom:
                    self.error(f"variable {tok.text} used with domains {prev} and {dom}", tok)
            elif tok.text not in self.domains[dom]._lookup:
                self.error(f"constant {tok.text} is not in domain {dom}", tok)
        return Atom(schema.name, tuple(t.text for t in args))


def parse_spec(text: str) -> Spec:
    """Parse and type-check a specification; raises ParseError with a location."""
    domains: dict[str, Domain] = {}
    schemas: dict[str, PredicateSchema] = {}
    options: dict[str, str] = {}
    closed: list[tuple[str, int, int]] = []
    props: list[Property] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.lstrip()
        indent = len(line) - len(stripped)
        head = stripped.split(None, 1)[0]
        rest = stripped[len(head):].strip()
        if head == "domain":
            m = re.fullmatch(r"([A-Za-z_]\w*)\s*=\s*\{(.*)\}", rest)
            if not m:
                raise ParseError("expected: domain name = {c1, c2, ...}", lineno, indent + 1)
            name = m.group(1)
            if name in domains:
                raise ParseError(f"domain {name} declared twice", lineno, indent + 1)
            consts = [c.strip() for c in m.group(2).split(",") if c.strip()]
            for c in consts:
                if not re.fullmatch(r"\w+", c) or is_variable(c):
                    raise ParseError(f"invalid constant {c!r} (constants start uppercase or with a digit)", lineno, indent + 1)
            try:
                domains[name] = Domain(name, tuple(consts))
            except ConfigError as e:
                raise ParseError(str(e), lineno, indent + 1) from None
        elif head in ("predicate", "subsymbolic"):
            m = re.fullmatch(r"([A-Za-z_]\w*)\s*\((.*)\)", rest)
            if not m:
                raise ParseError(f"expected: {head} Name(domain, ...)", lineno, indent + 1)
            name = m.group(1)
            if name in schemas:
                raise ParseError(f"predicate {name} declared twice", lineno, indent + 1)
            args = [a.strip() for a in m.group(2).split(",") if a.strip()]
            for a in args:
                if a not in domains:
                    raise ParseError(f"unknown domain {a!r} in declaration of {name}", lineno, indent + 1)
            kind = Kind.SYMBOLIC if head == "predicate" else Kind.SUBSYMBOLIC
            if kind == Kind.SUBSYMBOLIC and (len(args) == 0 or len(args) % 2):
                raise ParseError(f"sub-symbolic {name} needs an even arity (two embedding keys)", lineno, indent + 1)
            schemas[name] = PredicateSchema(name, tuple(args), kind)
        elif head == "closedworld":
            closed.append((rest, lineno, indent + 1))
        elif head == "option":
            m = re.fullmatch(r"([A-Za-z_]\w*)\s*=\s*(.+)", rest)
            if not m:
                raise ParseError("expected: option key = value", lineno, indent + 1)
            options[m.group(1)] = m.group(2).strip()
        else:
            if not domains:
                raise ParseError("no domains declared", lineno, indent + 1)
            toks = _tokenize(line, lineno)
            if not toks or toks[0].kind != "num":
                raise ParseError(f"expected a declaration or a weighted formula, found {head!r}", lineno, indent + 1)
            weight = float(toks[0].text)
            try:
                default_a = float(options.get("softness", "1"))
            except ValueError:
                raise ParseError("option softness must be a number", lineno, 1) from None
            p = _FormulaParser(toks[1:], lineno, schemas, domains, default_a)
            if not toks[1:]:
                raise ParseError("missing formula after weight", lineno, toks[0].col)
            node = p.parse_property()
            variables = tuple((v, p.var_domains[v]) for v in _var_order(node))
            props.append(Property(len(props), node, variables, weight))
    if not domains:
        raise ParseError("no domains declared")
    for name, lineno, col in closed:
        if name not in schemas:
            raise ParseError(f"closedworld refers to unknown predicate {name!r}", lineno, col)
        if schemas[name].kind != Kind.SYMBOLIC:
            raise ParseError(f"closedworld applies to symbolic predicates only ({name})", lineno, col)
    if "metric" in options and options["metric"] not in ("euclidean", "cosine"):
        raise ParseError(f"unknown metric {options['metric']!r}")
    return Spec(
        tuple(domains.values()),
        tuple(schemas.values()),
        tuple(props),
        tuple(options.items()),
        frozenset(n for n, _, _ in closed),
    )


def _var_order(node) -> list[str]:
    from .logic import variables_of

    return variables_of(node)


# --- rendering ----------------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def _render_term(t) -> str:
    return str(t) if isinstance(t, Atom) else _num(t)


def render_formula(node) -> str:
    if isinstance(node, Atom):
        return str(node)
    if isinstance(node, Not):
        return "!" + _wrap(node.arg)
    if isinstance(node, And):
        return " ^ ".join(_wrap(a) for a in node.args)
    if isinstance(node, Or):
        return " v ".join(_wrap(a) for a in node.args)
    if isinstance(node, Implies):
        return f"{_wrap(node.lhs)} => {_wrap(node.rhs)}"
    if isinstance(node, Iff):
        return f"{_wrap(node.lhs)} <=> {_wrap(node.rhs)}"
    if isinstance(node, SoftEq):
        return f"({_render_term(node.lhs)} == {_render_term(node.rhs)})"
    if isinstance(node, SoftIneq):
        return f"({_render_term(node.lhs)} {node.op} {_render_term(node.rhs)} [a={_num(node.softness)}])"
    if isinstance(node, Hybrid):
        cont = render_formula(node.continuous)
        if isinstance(node.continuous, Atom):
            cont = f"({cont})" if node.symbolic is not None else cont
        if node.symbolic is None:
            return cont
        return f"{cont} * ({render_formula(node.symbolic)})"
    raise TypeError(f"cannot render {node!r}")


def _wrap(node) -> str:
    s = render_formula(node)
    return s if isinstance(node, (Atom, Not)) else f"({s})"


def render_spec(spec: Spec) -> str:
    """Canonical text; parse_spec(render_spec(s)) == s."""
    lines = []
    for d in spec.domains:
        lines.append(f"domain {d.name} = {{{', '.join(d.constants)}}}")
    for s in spec.schemas:
        kw = "predicate" if s.kind == Kind.SYMBOLIC else "subsymbolic"
        lines.append(f"{kw} {s.name}({', '.join(s.arg_domains)})")
    for name in sorted(spec.closed_world):
        lines.append(f"closedworld {name}")
    for k, v in spec.options:
        lines.append(f"option {k} = {v}")
    for p in spec.properties:
        lines.append(f"{_num(p.weight)} {render_formula(p.formula)}")
    return "\n".join(lines) + "\n"
