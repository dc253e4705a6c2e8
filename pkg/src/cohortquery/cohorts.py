"""The execution layer: the only component that touches patient rows.

Owns the store, runs compiled SQL, caches cohorts, and computes the
aggregate views behind the results routes. Everything returned to agents is
id-plus-count or aggregate; patient-level rows leave only via list_cohort,
which is reachable solely through the HTTP results view.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from datetime import date
from typing import Optional

from .catalog import Catalog, SearchMode
from .compiler import compile_to_sql, evaluate_expr
from .dates import age_at
from .ehr import EhrStore
from .errors import (
    UnknownCategory,
    UnknownCohort,
    UnknownReport,
    ValidationError,
)
from .expr import QueryExpr, format_expr, parse_expr, validate_expr
from .sqlexec import run_sql


@dataclass(frozen=True)
class CohortRecord:
    cohort_id: str
    expr: QueryExpr
    patient_ids: frozenset[str]  # never leaves the execution layer
    size: int
    created_at: float


@dataclass(frozen=True)
class BinSpec:
    width: float
    start: float = 0.0


class ExecutionLayer:
    """Store + catalog + cohort cache, combined behind one object.

    Cohorts are kept for the lifetime of the layer; ids are fresh
    ("K1", "K2", ...) and never encode patient information.
    """

    def __init__(self, store: EhrStore, catalog: Catalog, as_of: Optional[date] = None):
        self.store = store
        self.catalog = catalog
        self.as_of = as_of or store.as_of
        self._cohorts: dict[str, CohortRecord] = {}
        self._lock = threading.Lock()
        self._next_id = 1

    # Mapping-style access so validate_expr/evaluate_expr can resolve
    # CohortRef leaves directly against the cache.
    def __contains__(self, cohort_id: str) -> bool:
        return cohort_id in self._cohorts

    def __getitem__(self, cohort_id: str) -> frozenset[str]:
        return self.members(cohort_id)

    def record(self, cohort_id: str) -> CohortRecord:
        try:
            return self._cohorts[cohort_id]
        except KeyError:
            raise UnknownCohort(cohort_id) from None

    def members(self, cohort_id: str) -> frozenset[str]:
        return self.record(cohort_id).patient_ids

    def create_cohort(self, expr_text: str) -> tuple[str, int]:
        """Parse, validate, compile and execute; cache the result.

        Returns only the fresh cohort id and member count. Raises
        ExprSyntaxError/DepthExceeded on bad text and ValidationError when
        references do not resolve.
        """
        expr = parse_expr(expr_text)
        violations = validate_expr(expr, self.catalog, self)
        if violations:
            raise ValidationError(violations)
        sql = compile_to_sql(expr, self.catalog, self.as_of)
        members = run_sql(sql, self.store, cohort_resolver=self.members)
        with self._lock:
            cohort_id = f"K{self._next_id}"
            self._next_id += 1
            record = CohortRecord(
                cohort_id=cohort_id,
                expr=expr,
                patient_ids=frozenset(members),
                size=len(members),
                created_at=time.time(),
            )
            self._cohorts[cohort_id] = record
        return cohort_id, record.size

    def evaluate_reference(self, expr_text: str) -> frozenset[str]:
        """Brute-force oracle evaluation of an expression, without caching."""
        expr = parse_expr(expr_text)
        violations = validate_expr(expr, self.catalog, self)
        if violations:
            raise ValidationError(violations)
        return frozenset(evaluate_expr(expr, self.catalog, self.store, self.as_of,
                                       cohorts=self))

    def summarise_cohort(self, cohort_id: str, as_of: Optional[date] = None) -> dict:
        """Count, mean age and sex split; mean_age is absent for empty cohorts."""
        as_of = as_of or self.as_of
        members = self.members(cohort_id)
        sex_counts = {"female": 0, "male": 0}
        ages = []
        for pat_id in members:
            patient = self.store.patients_by_id[pat_id]
            sex_counts[patient.sex] += 1
            ages.append(age_at(patient.birth_date, as_of))
        summary = {"count": len(members), "sex_counts": sex_counts}
        if ages:
            summary["mean_age"] = round(sum(ages) / len(ages), 2)
        return summary

    def histogram(self, cohort_id: str, category_id: str, bins: BinSpec) -> list[dict]:
        """Bin the latest in-category observation of each cohort member.

        Patients without any observation in the category are excluded, so
        bin counts sum to the number of patients with one.
        """
        members = self.members(cohort_id)
        category = self.catalog.registry_entry(SearchMode.CONCEPT_CATEGORIES, category_id)
        if category is None:
            raise UnknownCategory(category_id)
        codes = set(category.extra.get("codes", []))
        counts: dict[int, int] = {}
        for pat_id in members:
            value = self._latest_observation(pat_id, codes)
            if value is None:
                continue
            index = int((value - bins.start) // bins.width)
            counts[index] = counts.get(index, 0) + 1
        out = []
        for index in sorted(counts):
            lo = bins.start + index * bins.width
            hi = lo + bins.width
            out.append({"bin": f"[{_fmt(lo)},{_fmt(hi)})", "lo": lo, "hi": hi,
                        "count": counts[index]})
        return out

    def _latest_observation(self, pat_id: str, codes: set[str]) -> Optional[float]:
        best = None
        best_date = None
        for event in self.store.events_for(pat_id):
            if event.table != "observations" or event.code not in codes:
                continue
            if event.value is None:
                continue
            if best_date is None or event.event_date >= best_date:
                best_date = event.event_date
                best = event.value
        return best

    def prevalence_by_group(self, numerator_cohort: str, denominator_cohort: str,
                            grouping: str) -> list[dict]:
        """Per-practice or per-district rates of numerator within denominator.

        Groups with no denominator members are reported with rate absent.
        """
        if grouping not in ("practice", "district"):
            raise ValueError(f"grouping must be 'practice' or 'district', got {grouping!r}")
        numerator = self.members(numerator_cohort)
        denominator = self.members(denominator_cohort)
        groups = self.store.practices if grouping == "practice" else self.store.districts
        group_of = (lambda p: p.practice_id) if grouping == "practice" else (lambda p: p.district)
        rows = []
        for group in groups:
            group_patients = {p.pat_id for p in self.store.patients if group_of(p) == group}
            den = len(denominator & group_patients)
            num = len(numerator & denominator & group_patients)
            row = {"group": group, "numerator": num, "denominator": den,
                   "rate": round(num / den, 4) if den else None}
            rows.append(row)
        return rows

    def list_cohort(self, cohort_id: str, report: Optional[str] = None) -> dict:
        """Patient-level table for the register view. HTTP-only; never a tool."""
        members = self.members(cohort_id)
        columns = ["pat_id", "age", "sex", "practice"]
        report_columns = []
        if report is not None:
            entry = self.catalog.registry_entry(SearchMode.REPORTS, report)
            if entry is None:
                raise UnknownReport(report)
            report_columns = entry.extra.get("columns", [])
            columns += [c["name"] for c in report_columns]
        rows = []
        for pat_id in sorted(members):
            patient = self.store.patients_by_id[pat_id]
            row = [pat_id, age_at(patient.birth_date, self.as_of), patient.sex,
                   patient.practice_id]
            for col in report_columns:
                row.append(self._report_cell(pat_id, col))
            rows.append(row)
        return {"columns": columns, "rows": rows}

    def _report_cell(self, pat_id: str, col: dict):
        concept = self.catalog.get_concept(col["concept_id"])
        kind = col.get("kind", "last_event_date")
        best_date = None
        best_value = None
        for event in self.store.events_for(pat_id):
            if event.table != concept.domain or event.code not in concept.codes:
                continue
            if best_date is None or event.event_date >= best_date:
                best_date = event.event_date
                best_value = event.value
        if best_date is None:
            return None
        if kind == "latest_value":
            return best_value
        return best_date.isoformat()


def _fmt(x: float) -> str:
    return f"{x:g}"
