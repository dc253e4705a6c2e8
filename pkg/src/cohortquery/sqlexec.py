"""Reference interpreter for the restricted SQL dialect the compiler emits.

Supports exactly: SELECT [DISTINCT] pat_id FROM <table> [WHERE cond AND ...]
combined with UNION / INTERSECT / EXCEPT, where a condition is one of
``code IN (...)``, a date comparison over event_date/birth_date, ``active =``
or ``sex =``. An adapter may ship the same SQL text to an external engine
instead; this interpreter keeps the package self-contained.
"""

from __future__ import annotations

import re
from datetime import date
from typing import Callable, Optional

from .ehr import EhrStore
from .errors import UnknownCohort

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<str>'[^']*')|(?P<op><=|>=|=|<|>)|(?P<punct>[(),])|(?P<word>[A-Za-z_][A-Za-z0-9_-]*)|(?P<num>\d+))"
)

_SET_OPS = {"UNION", "INTERSECT", "EXCEPT"}


class SqlError(ValueError):
    pass


def _tokenize(sql: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            if sql[pos:].strip():
                raise SqlError(f"cannot tokenize SQL at offset {pos}: {sql[pos:pos + 20]!r}")
            break
        tokens.append(m.group(0).strip())
        pos = m.end()
    return tokens


class _SqlParser:
    """Recursive-descent parser producing a closure-free node tree."""

    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.index = 0

    def peek(self) -> Optional[str]:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def take(self, expected: Optional[str] = None) -> str:
        tok = self.peek()
        if tok is None:
            raise SqlError(f"unexpected end of SQL (expected {expected or 'token'})")
        if expected is not None and tok.upper() != expected.upper():
            raise SqlError(f"expected {expected!r}, found {tok!r}")
        self.index += 1
        return tok

    def parse(self):
        node = self.parse_set_expr()
        if self.peek() is not None:
            raise SqlError(f"trailing tokens starting at {self.peek()!r}")
        return node

    def parse_set_expr(self):
        node = self.parse_unit()
        while self.peek() and self.peek().upper() in _SET_OPS:
            op = self.take().upper()
            right = self.parse_unit()
            node = ("setop", op, node, right)
        return node

    def parse_unit(self):
        if self.peek() == "(":
            self.take("(")
            node = self.parse_set_expr()
            self.take(")")
            return node
        return self.parse_select()

    def parse_select(self):
        self.take("SELECT")
        if self.peek() and self.peek().upper() == "DISTINCT":
            self.take()
        self.take("pat_id")
        self.take("FROM")
        table = self.take()
        conditions = []
        if self.peek() and self.peek().upper() == "WHERE":
            self.take()
            conditions.append(self.parse_condition())
            while self.peek() and self.peek().upper() == "AND":
                self.take()
                conditions.append(self.parse_condition())
        return ("select", table, conditions)

    def parse_condition(self):
        column = self.take().lower()
        if column == "code":
            self.take("IN")
            self.take("(")
            codes = []
            while True:
                tok = self.take()
                if not (tok.startswith("'") and tok.endswith("'")):
                    raise SqlError(f"expected string literal in IN list, found {tok!r}")
                codes.append(tok[1:-1])
                nxt = self.take()
                if nxt == ")":
                    break
                if nxt != ",":
                    raise SqlError(f"expected ',' or ')' in IN list, found {nxt!r}")
            return ("in", column, codes)
        op = self.take()
        if op not in ("=", ">=", "<=", ">", "<"):
            raise SqlError(f"unsupported operator {op!r}")
        value = self.take()
        if value.startswith("'") and value.endswith("'"):
            return ("cmp", column, op, value[1:-1])
        return ("cmp", column, op, int(value))


def run_sql(sql: str, store: EhrStore,
            cohort_resolver: Optional[Callable[[str], set[str]]] = None) -> set[str]:
    """Execute compiled SQL against the store, returning a patient-id set.

    ``cohort_resolver`` maps a cohort id to its member set for reads of
    ``Cohort_<id>`` tables.
    """
    node = _SqlParser(_tokenize(sql)).parse()
    return _execute(node, store, cohort_resolver)


def _execute(node, store: EhrStore, cohort_resolver) -> set[str]:
    kind = node[0]
    if kind == "setop":
        _, op, left, right = node
        lhs = _execute(left, store, cohort_resolver)
        rhs = _execute(right, store, cohort_resolver)
        if op == "UNION":
            return lhs | rhs
        if op == "INTERSECT":
            return lhs & rhs
        return lhs - rhs
    _, table, conditions = node
    if table.startswith("Cohort_"):
        cohort_id = table[len("Cohort_"):]
        if cohort_resolver is None:
            raise UnknownCohort(cohort_id)
        return set(cohort_resolver(cohort_id))
    if table == "Patient":
        return {p.pat_id for p in store.patients
                if all(_patient_matches(c, p) for c in conditions)}
    if table in ("Conditions", "Medications", "Observations"):
        domain = table.lower()
        return {e.pat_id for e in store.events
                if e.table == domain and all(_event_matches(c, e) for c in conditions)}
    raise SqlError(f"unknown table {table!r}")


def _event_matches(cond, event) -> bool:
    if cond[0] == "in":
        return event.code in cond[2]
    _, column, op, value = cond
    if column != "event_date":
        raise SqlError(f"unsupported event column {column!r}")
    return _compare(event.event_date, op, date.fromisoformat(value))


def _patient_matches(cond, patient) -> bool:
    if cond[0] == "in":
        raise SqlError("IN is only supported over event codes")
    _, column, op, value = cond
    if column == "birth_date":
        return _compare(patient.birth_date, op, date.fromisoformat(value))
    if column == "active":
        return _compare(int(patient.active), op, int(value))
    if column == "sex":
        return _compare(patient.sex, op, value)
    raise SqlError(f"unsupported patient column {column!r}")


def _compare(lhs, op: str, rhs) -> bool:
    if op == "=":
        return lhs == rhs
    if op == ">=":
        return lhs >= rhs
    if op == "<=":
        return lhs <= rhs
    if op == ">":
        return lhs > rhs
    return lhs < rhs
