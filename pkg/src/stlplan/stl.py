"""STL abstract syntax, concrete-syntax parser, fragment check, and structural tokens.

Concrete syntax::

    expr   := term ("|" term)*
    term   := factor ("&" factor)*
    factor := "!" factor
            | "F[" INT "," INT "](" expr ")"
            | "G[" INT "," INT "](" expr ")"
            | "U[" INT "," INT "](" expr "," expr ")"
            | "(" expr ")"
            | "in(" IDENT ")"

Whitespace is ignored between tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

__all__ = [
    "Interval",
    "Atom",
    "Not",
    "And",
    "Or",
    "Eventually",
    "Always",
    "Until",
    "Formula",
    "ParseError",
    "IntervalError",
    "FragmentReport",
    "StructuralToken",
    "OPERATOR_IDS",
    "parse",
    "render",
    "validate_fragment",
    "structural_tokens",
    "iter_nodes",
    "temporal_nodes",
    "region_names",
    "node_count",
    "to_dict",
]


@dataclass(frozen=True)
class Interval:
    a: int
    b: int

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise IntervalError(f"interval bounds must be non-negative, got [{self.a},{self.b}]")
        if self.a > self.b:
            raise IntervalError(f"interval lower bound exceeds upper bound: [{self.a},{self.b}]")

    def covers(self, t: int) -> bool:
        return self.a <= t <= self.b

    def __str__(self):
        return f"[{self.a},{self.b}]"


@dataclass(frozen=True)
class Atom:
    """Region-membership predicate ``in(region)``."""

    region: str

    def __post_init__(self):
        if not _IDENT.fullmatch(self.region):
            raise ValueError(f"region name must be a non-empty identifier, got {self.region!r}")


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("And needs at least two children")


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("Or needs at least two children")


@dataclass(frozen=True)
class Eventually:
    interval: Interval
    child: "Formula"


@dataclass(frozen=True)
class Always:
    interval: Interval
    child: "Formula"


@dataclass(frozen=True)
class Until:
    """``U[a,b](lhs, rhs)``: ``rhs`` holds within the window while ``lhs`` holds before it."""

    interval: Interval
    lhs: "Formula"
    rhs: "Formula"


Formula = Union[Atom, Not, And, Or, Eventually, Always, Until]
TEMPORAL = (Eventually, Always, Until)


class ParseError(ValueError):
    """Syntax error; ``offset`` is the UTF-8 byte offset of the offending token."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class IntervalError(ValueError):
    """Interval with negative bounds or ``a > b``."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


# ---------------------------------------------------------------- traversal


def children_of(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, Atom):
        return ()
    if isinstance(f, (Not, Eventually, Always)):
        return (f.child,)
    if isinstance(f, (And, Or)):
        return f.children
    if isinstance(f, Until):
        return (f.lhs, f.rhs)
    raise TypeError(f"not a formula node: {f!r}")


def iter_nodes(f: Formula, depth: int = 0) -> Iterator[tuple[Formula, int]]:
    """Preorder traversal yielding ``(node, depth)``; siblings in source order."""
    yield f, depth
    for c in children_of(f):
        yield from iter_nodes(c, depth + 1)


def temporal_nodes(f: Formula) -> list[Formula]:
    return [n for n, _ in iter_nodes(f) if isinstance(n, TEMPORAL)]


def region_names(f: Formula) -> list[str]:
    """Region names in first-appearance (preorder) order, without duplicates."""
    seen: dict[str, None] = {}
    for n, _ in iter_nodes(f):
        if isinstance(n, Atom):
            seen.setdefault(n.region, None)
    return list(seen)


def node_count(f: Formula) -> int:
    return sum(1 for _ in iter_nodes(f))


def to_dict(f: Formula) -> dict:
    """JSON-friendly nested representation."""
    if isinstance(f, Atom):
        return {"op": "in", "region": f.region}
    if isinstance(f, Not):
        return {"op": "not", "child": to_dict(f.child)}
    if isinstance(f, (And, Or)):
        return {"op": "and" if isinstance(f, And) else "or", "children": [to_dict(c) for c in f.children]}
    if isinstance(f, (Eventually, Always)):
        return {
            "op": "F" if isinstance(f, Eventually) else "G",
            "interval": [f.interval.a, f.interval.b],
            "child": to_dict(f.child),
        }
    return {"op": "U", "interval": [f.interval.a, f.interval.b], "lhs": to_dict(f.lhs), "rhs": to_dict(f.rhs)}


# ---------------------------------------------------------------- rendering

_PREC = {Or: 0, And: 1}


def render(f: Formula) -> str:
    """Render to the concrete syntax; ``parse(render(f)) == f``."""
    if isinstance(f, Atom):
        return f"in({f.region})"
    if isinstance(f, Not):
        inner = render(f.child)
        if isinstance(f.child, (And, Or)):
            inner = f"({inner})"
        return f"!{inner}"
    if isinstance(f, (And, Or)):
        sep = " & " if isinstance(f, And) else " | "
        parts = []
        for c in f.children:
            s = render(c)
            # same-kind children are wrapped so the chain is not re-flattened
            if isinstance(c, (And, Or)) and _PREC[type(c)] <= _PREC[type(f)]:
                s = f"({s})"
            parts.append(s)
        return sep.join(parts)
    if isinstance(f, (Eventually, Always)):
        op = "F" if isinstance(f, Eventually) else "G"
        return f"{op}[{f.interval.a},{f.interval.b}]({render(f.child)})"
    if isinstance(f, Until):
        return f"U[{f.interval.a},{f.interval.b}]({render(f.lhs)}, {render(f.rhs)})"
    raise TypeError(f"not a formula node: {f!r}")


# ---------------------------------------------------------------- parsing

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_TOKEN = re.compile(r"\s*(?:(?P<int>-?\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[!&|()\[\],]))")


@dataclass
class _Tok:
    kind: str  # "int" | "ident" | "punct" | "eof"
    text: str
    offset: int  # byte offset


def _tokenize(text: str) -> list[_Tok]:
    # byte offsets so diagnostics are exact for non-ASCII input
    byte_at = [0]
    for ch in text:
        byte_at.append(byte_at[-1] + len(ch.encode("utf-8")))
    toks: list[_Tok] = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[start]!r}", byte_at[start])
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), byte_at[m.start(kind)]))
        pos = m.end()
    toks.append(_Tok("eof", "", byte_at[len(text)]))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def expect(self, text: str) -> _Tok:
        tok = self.cur
        if tok.kind == "int" or tok.text != text:
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise ParseError(f"expected {text!r}, found {found}", tok.offset)
        self.i += 1
        return tok

    def parse(self) -> Formula:
        f = self.expr()
        if self.cur.kind != "eof":
            raise ParseError(f"unexpected trailing input {self.cur.text!r}", self.cur.offset)
        return f

    def expr(self) -> Formula:
        parts = [self.term()]
        while self.cur.text == "|" and self.cur.kind == "punct":
            self.i += 1
            parts.append(self.term())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def term(self) -> Formula:
        parts = [self.factor()]
        while self.cur.text == "&" and self.cur.kind == "punct":
            self.i += 1
            parts.append(self.factor())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def interval(self) -> Interval:
        self.expect("[")
        a_tok = self.integer()
        self.expect(",")
        b_tok = self.integer()
        self.expect("]")
        a, b = int(a_tok.text), int(b_tok.text)
        if a < 0 or b < 0:
            bad = a_tok if a < 0 else b_tok
            raise IntervalError(f"interval bounds must be non-negative, got [{a},{b}]", bad.offset)
        if a > b:
            raise IntervalError(f"interval lower bound exceeds upper bound: [{a},{b}]", a_tok.offset)
        return Interval(a, b)

    def integer(self) -> _Tok:
        tok = self.cur
        if tok.kind != "int":
            raise ParseError(f"expected integer, found {tok.text or 'end of input'!r}", tok.offset)
        self.i += 1
        return tok

    def factor(self) -> Formula:
        tok = self.cur
        if tok.kind == "punct" and tok.text == "!":
            self.i += 1
            return Not(self.factor())
        if tok.kind == "punct" and tok.text == "(":
            self.i += 1
            f = self.expr()
            self.expect(")")
            return f
        if tok.kind == "ident":
            nxt = self.peek()
            if tok.text in ("F", "G", "U") and nxt.text == "[":
                self.i += 1
                iv = self.interval()
                self.expect("(")
                if tok.text == "U":
                    lhs = self.expr()
                    self.expect(",")
                    rhs = self.expr()
                    self.expect(")")
                    return Until(iv, lhs, rhs)
                child = self.expr()
                self.expect(")")
                return Eventually(iv, child) if tok.text == "F" else Always(iv, child)
            if tok.text == "in" and nxt.text == "(":
                self.i += 2
                name = self.cur
                if name.kind != "ident":
                    raise ParseError("expected region name", name.offset)
                self.i += 1
                self.expect(")")
                return Atom(name.text)
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(f"expected formula, found {found}", tok.offset)


def parse(text: str) -> Formula:
    """Parse concrete STL syntax into a :data:`Formula`.

    ``&`` binds tighter than ``|`` and ``!`` binds tightest. Chains of the
    same connective are flattened into one n-ary node; parenthesised groups
    are kept as separate nodes.

    >>> parse("F[13,19](in(B)) & G[71,72](in(D))")  # doctest: +ELLIPSIS
    And(children=(Eventually(interval=Interval(a=13, b=19), child=Atom(region='B')), ...
    """
    if not text or not text.strip():
        raise ParseError("empty formula", 0)
    return _Parser(text).parse()


# ---------------------------------------------------------------- fragment


@dataclass(frozen=True)
class FragmentReport:
    is_member: bool
    violations: tuple[str, ...] = field(default_factory=tuple)


def validate_fragment(f: Formula, horizon: int) -> FragmentReport:
    """Check membership in the bounded, depth-1, negation/until-free fragment."""
    violations: list[str] = []

    def visit(node: Formula, under_temporal: bool):
        if isinstance(node, Not):
            violations.append(f"negation excluded from fragment: {render(node)}")
        elif isinstance(node, Until):
            violations.append(f"Until excluded from fragment: {render(node)}")
        if isinstance(node, TEMPORAL):
            if under_temporal:
                violations.append(f"nested temporal depth > 1: {render(node)}")
            if node.interval.b > horizon:
                violations.append(f"interval {node.interval} exceeds horizon T={horizon}")
        for c in children_of(node):
            visit(c, under_temporal or isinstance(node, TEMPORAL))

    visit(f, False)
    return FragmentReport(not violations, tuple(violations))


# ---------------------------------------------------------------- structural tokens

OPERATOR_IDS = {"F": 0, "G": 1, "and": 2, "or": 3}


@dataclass(frozen=True)
class StructuralToken:
    token_id: int
    label: str
    a_norm: float
    b_norm: float
    depth: int


def structural_tokens(
    f: Formula,
    horizon: int,
    max_depth: int = 8,
    region_ids: dict[str, int] | None = None,
) -> list[StructuralToken]:
    """Linearize a fragment formula in preorder into typed tokens.

    Operators use the ids in :data:`OPERATOR_IDS`; regions get ids starting
    after the operators, in first-appearance order unless ``region_ids``
    supplies a fixed assignment. Temporal nodes carry their own normalized
    interval, every other node the interval of its enclosing temporal
    operator or ``(0, 1)`` at top level.
    """
    report = validate_fragment(f, horizon)
    if not report.is_member:
        raise ValueError("formula is not in the fragment: " + "; ".join(report.violations))
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if region_ids is None:
        base = len(OPERATOR_IDS)
        region_ids = {name: base + i for i, name in enumerate(region_names(f))}

    tokens: list[StructuralToken] = []

    def visit(node: Formula, depth: int, span: tuple[float, float]):
        if isinstance(node, (Eventually, Always)):
            span = (node.interval.a / horizon, node.interval.b / horizon)
            label = "F" if isinstance(node, Eventually) else "G"
            tid = OPERATOR_IDS[label]
        elif isinstance(node, And):
            label, tid = "and", OPERATOR_IDS["and"]
        elif isinstance(node, Or):
            label, tid = "or", OPERATOR_IDS["or"]
        else:
            label = node.region
            if label not in region_ids:
                raise KeyError(f"region {label!r} missing from region_ids")
            tid = region_ids[label]
        tokens.append(StructuralToken(tid, label, span[0], span[1], min(depth, max_depth - 1)))
        for c in children_of(node):
            visit(c, depth + 1, span)

    visit(f, 0, (0.0, 1.0))
    return tokens
