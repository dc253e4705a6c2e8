"""Compilation of cohort expressions to SQL, and the brute-force reference
evaluator the compiler is checked against.

The emitted dialect is deliberately narrow: per-concept subselects combined
with UNION / INTERSECT / EXCEPT. Concept references become subselects over
their domain table; NOT complements against the full Patient table, so any
restriction to active patients has to be an explicit AND in the expression.
"""

from __future__ import annotations

import re
from datetime import date

from .catalog import Catalog, Concept, EVENT_DOMAINS
from .dates import age_at, shift_months, shift_years
from .ehr import EhrStore
from .errors import MalformedCatalog, UnvalidatedExpr
from .expr import And, CohortRef, ConceptRef, Not, Or, QueryExpr, Violation

TABLE_FOR_DOMAIN = {
    "conditions": "Conditions",
    "medications": "Medications",
    "observations": "Observations",
}

COHORT_TABLE_PREFIX = "Cohort_"

_PREDICATE_RE = re.compile(r"^(active|sex:(?:female|male)|age(?:>=|<)\d{1,3})$")


def parse_predicate(concept: Concept) -> tuple[str, object]:
    """Split a demographics predicate tag into (kind, argument)."""
    tag = (concept.predicate or "").strip()
    if not _PREDICATE_RE.match(tag):
        raise MalformedCatalog(f"concept {concept.id!r}: unsupported predicate {tag!r}")
    if tag == "active":
        return "active", True
    if tag.startswith("sex:"):
        return "sex", tag.split(":", 1)[1]
    if tag.startswith("age>="):
        return "age_min", int(tag[len("age>="):])
    return "age_max", int(tag[len("age<"):])


def compile_to_sql(expr: QueryExpr, catalog: Catalog, as_of: date) -> str:
    """Compile a validated expression to SQL selecting distinct patient ids.

    The text is a pure function of (expr, catalog, as_of). Cohort references
    compile to reads of ``Cohort_<id>`` tables, which the execution layer
    materializes from its cache; patient ids never appear in the SQL itself.
    """
    return _compile(expr, catalog, as_of)


def _compile(expr: QueryExpr, catalog: Catalog, as_of: date) -> str:
    if isinstance(expr, ConceptRef):
        if expr.concept_id not in catalog:
            raise UnvalidatedExpr([Violation("unknown_concept", expr.concept_id)])
        return _concept_select(catalog.get_concept(expr.concept_id), as_of)
    if isinstance(expr, CohortRef):
        return f"SELECT pat_id FROM {COHORT_TABLE_PREFIX}{expr.cohort_id}"
    if isinstance(expr, Not):
        child = _compile(expr.child, catalog, as_of)
        return f"SELECT pat_id FROM Patient EXCEPT ({child})"
    op = " INTERSECT " if isinstance(expr, And) else " UNION "
    return op.join(f"({_compile(c, catalog, as_of)})" for c in expr.children)


def _concept_select(concept: Concept, as_of: date) -> str:
    if concept.domain in EVENT_DOMAINS:
        table = TABLE_FOR_DOMAIN[concept.domain]
        codes = ",".join(f"'{code}'" for code in concept.codes)
        sql = f"SELECT DISTINCT pat_id FROM {table} WHERE code IN ({codes})"
        if concept.lookback_months is not None:
            start = shift_months(as_of, -concept.lookback_months)
            sql += f" AND event_date >= '{start.isoformat()}'"
        return sql
    kind, arg = parse_predicate(concept)
    if kind == "active":
        where = "active = 1"
    elif kind == "sex":
        where = f"sex = '{arg}'"
    elif kind == "age_min":
        where = f"birth_date <= '{shift_years(as_of, -int(arg)).isoformat()}'"
    else:  # age_max
        where = f"birth_date > '{shift_years(as_of, -int(arg)).isoformat()}'"
    return f"SELECT pat_id FROM Patient WHERE {where}"


# --- reference evaluator ------------------------------------------------------

def evaluate_expr(expr: QueryExpr, catalog: Catalog, store: EhrStore,
                  as_of: date, cohorts=None) -> set[str]:
    """Per-patient brute-force evaluation over the full patient universe.

    Used as the independent oracle for the compiled SQL path; keep it dumb.
    ``cohorts`` maps cohort id to a patient-id set for CohortRef leaves.
    """
    universe = store.patient_ids

    def ev(node: QueryExpr) -> set[str]:
        if isinstance(node, ConceptRef):
            if node.concept_id not in catalog:
                raise UnvalidatedExpr([Violation("unknown_concept", node.concept_id)])
            concept = catalog.get_concept(node.concept_id)
            return {p.pat_id for p in store.patients
                    if concept_holds(concept, p.pat_id, store, as_of)}
        if isinstance(node, CohortRef):
            if cohorts is None or node.cohort_id not in cohorts:
                raise UnvalidatedExpr([Violation("unknown_cohort", node.cohort_id)])
            return set(cohorts[node.cohort_id])
        if isinstance(node, Not):
            return set(universe) - ev(node.child)
        sets = [ev(c) for c in node.children]
        out = sets[0]
        for s in sets[1:]:
            out = out & s if isinstance(node, And) else out | s
        return out

    return ev(expr)


def concept_holds(concept: Concept, pat_id: str, store: EhrStore, as_of: date) -> bool:
    if concept.domain in EVENT_DOMAINS:
        window_start = None
        if concept.lookback_months is not None:
            window_start = shift_months(as_of, -concept.lookback_months)
        for event in store.events_for(pat_id):
            if event.table != concept.domain or event.code not in concept.codes:
                continue
            if window_start is not None and event.event_date < window_start:
                continue
            return True
        return False
    patient = store.patients_by_id[pat_id]
    kind, arg = parse_predicate(concept)
    if kind == "active":
        return patient.active
    if kind == "sex":
        return patient.sex == arg
    if kind == "age_min":
        return age_at(patient.birth_date, as_of) >= int(arg)
    return age_at(patient.birth_date, as_of) < int(arg)
