"""Boolean cohort-expression language: AST, parser, formatter, validator.

The textual grammar is the wire format of the cohort-creation tool and the
text a user audits, so it stays deliberately small:

    expr := and_expr ("OR" and_expr)*
    and_expr := term ("AND" term)*
    term := "NOT" term | "(" expr ")" | IDENT

Keywords are case-insensitive, AND binds tighter than OR, and an IDENT of
the form ``COHORT:<id>`` references a cached cohort rather than a concept.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .catalog import Catalog
from .errors import DepthExceeded, ExprSyntaxError

MAX_DEPTH = 32
MAX_TEXT_LENGTH = 4096

COHORT_PREFIX = "COHORT:"


@dataclass(frozen=True)
class ConceptRef:
    concept_id: str


@dataclass(frozen=True)
class CohortRef:
    cohort_id: str


@dataclass(frozen=True)
class And:
    children: tuple["QueryExpr", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("And requires at least two children")


@dataclass(frozen=True)
class Or:
    children: tuple["QueryExpr", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("Or requires at least two children")


@dataclass(frozen=True)
class Not:
    child: "QueryExpr"


QueryExpr = Union[ConceptRef, CohortRef, And, Or, Not]


def depth(expr: QueryExpr) -> int:
    if isinstance(expr, (ConceptRef, CohortRef)):
        return 1
    if isinstance(expr, Not):
        return 1 + depth(expr.child)
    return 1 + max(depth(c) for c in expr.children)


def concept_ids(expr: QueryExpr) -> set[str]:
    """All concept ids referenced anywhere in the expression."""
    if isinstance(expr, ConceptRef):
        return {expr.concept_id}
    if isinstance(expr, CohortRef):
        return set()
    if isinstance(expr, Not):
        return concept_ids(expr.child)
    out: set[str] = set()
    for child in expr.children:
        out |= concept_ids(child)
    return out


def cohort_ids(expr: QueryExpr) -> set[str]:
    if isinstance(expr, CohortRef):
        return {expr.cohort_id}
    if isinstance(expr, ConceptRef):
        return set()
    if isinstance(expr, Not):
        return cohort_ids(expr.child)
    out: set[str] = set()
    for child in expr.children:
        out |= cohort_ids(child)
    return out


# --- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(\(|\)|[A-Za-z0-9_.:-]+)")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens: list[tuple[str, int]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            at = len(text) - len(stripped)
            raise ExprSyntaxError(at, "identifier, '(' or ')'")
        token = m.group(1)
        tokens.append((token, m.start(1)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, int]], length: int):
        self.tokens = tokens
        self.index = 0
        self.length = length

    def _peek(self) -> tuple[str, int] | None:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def _next(self) -> tuple[str, int] | None:
        tok = self._peek()
        if tok is not None:
            self.index += 1
        return tok

    def parse(self) -> QueryExpr:
        expr = self.parse_or()
        trailing = self._peek()
        if trailing is not None:
            raise ExprSyntaxError(trailing[1], "'AND', 'OR' or end of input")
        return expr

    def parse_or(self) -> QueryExpr:
        children = [self.parse_and()]
        while True:
            tok = self._peek()
            if tok is None or tok[0].upper() != "OR":
                break
            self._next()
            children.append(self.parse_and())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def parse_and(self) -> QueryExpr:
        children = [self.parse_term()]
        while True:
            tok = self._peek()
            if tok is None or tok[0].upper() != "AND":
                break
            self._next()
            children.append(self.parse_term())
        return children[0] if len(children) == 1 else And(tuple(children))

    def parse_term(self) -> QueryExpr:
        tok = self._next()
        if tok is None:
            raise ExprSyntaxError(self.length, "'NOT', '(' or identifier")
        text, at = tok
        upper = text.upper()
        if upper == "NOT":
            return Not(self.parse_term())
        if text == "(":
            inner = self.parse_or()
            closing = self._next()
            if closing is None or closing[0] != ")":
                raise ExprSyntaxError(closing[1] if closing else self.length, "')'")
            return inner
        if text == ")":
            raise ExprSyntaxError(at, "'NOT', '(' or identifier")
        if upper in ("AND", "OR"):
            raise ExprSyntaxError(at, "'NOT', '(' or identifier")
        if upper.startswith(COHORT_PREFIX):
            cohort_id = text[len(COHORT_PREFIX):]
            if not cohort_id:
                raise ExprSyntaxError(at, "cohort id after 'COHORT:'")
            return CohortRef(cohort_id)
        return ConceptRef(text)


def parse_expr(text: str) -> QueryExpr:
    """Parse expression text into an AST.

    Raises ExprSyntaxError with the offending character position, or
    DepthExceeded for degenerately nested input.
    """
    if len(text) > MAX_TEXT_LENGTH:
        raise ExprSyntaxError(MAX_TEXT_LENGTH, f"at most {MAX_TEXT_LENGTH} characters")
    tokens = _tokenize(text)
    if not tokens:
        raise ExprSyntaxError(0, "'NOT', '(' or identifier")
    expr = _Parser(tokens, len(text)).parse()
    d = depth(expr)
    if d > MAX_DEPTH:
        raise DepthExceeded(d, MAX_DEPTH)
    return expr


# --- formatting ----------------------------------------------------------------

def format_expr(expr: QueryExpr) -> str:
    """Canonical fully-parenthesized text; parse_expr(format_expr(e)) == e."""
    if isinstance(expr, ConceptRef):
        return expr.concept_id
    if isinstance(expr, CohortRef):
        return COHORT_PREFIX + expr.cohort_id
    if isinstance(expr, Not):
        return f"(NOT {format_expr(expr.child)})"
    joiner = " AND " if isinstance(expr, And) else " OR "
    return "(" + joiner.join(format_expr(c) for c in expr.children) + ")"


# --- validation ----------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str  # "unknown_concept" | "unknown_cohort"
    ref: str

    def __str__(self) -> str:
        label = "unknown concept" if self.kind == "unknown_concept" else "unknown cohort"
        return f"{label}: {self.ref}"


def validate_expr(expr: QueryExpr, catalog: Catalog, cohorts) -> list[Violation]:
    """Check that every reference resolves. Violations are data, not faults.

    ``cohorts`` is anything supporting ``__contains__`` over cohort ids
    (the execution layer's registry, or an empty set).
    """
    violations = []
    for cid in sorted(concept_ids(expr)):
        if cid not in catalog:
            violations.append(Violation("unknown_concept", cid))
    for kid in sorted(cohort_ids(expr)):
        if kid not in cohorts:
            violations.append(Violation("unknown_cohort", kid))
    return violations
