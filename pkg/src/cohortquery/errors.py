"""Exception types shared across the package.

Tool-facing operations convert these to error results at the gateway; they
are only raised as Python exceptions inside the library itself.
"""

from __future__ import annotations


class CohortQueryError(Exception):
    """Base class for all package errors."""


# --- catalog ---------------------------------------------------------------

class MalformedCatalog(CohortQueryError):
    def __init__(self, detail: str):
        super().__init__(f"malformed catalog: {detail}")
        self.detail = detail


class DuplicateConceptId(CohortQueryError):
    def __init__(self, concept_id: str):
        super().__init__(f"duplicate concept id: {concept_id}")
        self.concept_id = concept_id


class EmptyKey(CohortQueryError):
    def __init__(self):
        super().__init__("search key is empty")


class UnknownMode(CohortQueryError):
    def __init__(self, mode: str):
        super().__init__(f"unknown search mode: {mode!r}")
        self.mode = mode


class UnknownConcept(CohortQueryError):
    def __init__(self, concept_id: str):
        super().__init__(f"unknown concept: {concept_id}")
        self.concept_id = concept_id


# --- expressions -----------------------------------------------------------

class ExprSyntaxError(CohortQueryError):
    """Raised when expression text does not parse.

    ``position`` is a 0-based character offset into the input.
    """

    def __init__(self, position: int, expected: str):
        super().__init__(f"syntax error at position {position}: expected {expected}")
        self.position = position
        self.expected = expected


class DepthExceeded(CohortQueryError):
    def __init__(self, depth: int, limit: int):
        super().__init__(f"expression depth {depth} exceeds limit {limit}")
        self.depth = depth
        self.limit = limit


class UnvalidatedExpr(CohortQueryError):
    """Compilation or evaluation was attempted on an expression that fails validation."""

    def __init__(self, violations):
        super().__init__("expression has unresolved references: "
                         + "; ".join(str(v) for v in violations))
        self.violations = list(violations)


class ValidationError(CohortQueryError):
    """Cohort creation rejected because the expression has validation violations."""

    def __init__(self, violations):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = list(violations)


# --- synthetic store / cohorts ----------------------------------------------

class InvalidConfig(CohortQueryError):
    def __init__(self, field: str, detail: str):
        super().__init__(f"invalid generator config ({field}): {detail}")
        self.field = field
        self.detail = detail


class UnknownCohort(CohortQueryError):
    def __init__(self, cohort_id: str):
        super().__init__(f"unknown cohort: {cohort_id}")
        self.cohort_id = cohort_id


class UnknownCategory(CohortQueryError):
    def __init__(self, category_id: str):
        super().__init__(f"unknown concept category: {category_id}")
        self.category_id = category_id


class UnknownReport(CohortQueryError):
    def __init__(self, report_id: str):
        super().__init__(f"unknown report: {report_id}")
        self.report_id = report_id


class UnknownRiskset(CohortQueryError):
    def __init__(self, riskset_id: str):
        super().__init__(f"unknown riskset: {riskset_id}")
        self.riskset_id = riskset_id


class UnknownKpi(CohortQueryError):
    def __init__(self, kpi_id: str):
        super().__init__(f"unknown kpi: {kpi_id}")
        self.kpi_id = kpi_id


# --- knowledge base ----------------------------------------------------------

class MalformedKb(CohortQueryError):
    def __init__(self, detail: str):
        super().__init__(f"malformed knowledge base: {detail}")
        self.detail = detail


class RemoteUnavailable(CohortQueryError):
    def __init__(self, cause: str):
        super().__init__(f"remote knowledge base unavailable: {cause}")
        self.cause = cause


# --- agents ------------------------------------------------------------------

class UnknownTool(CohortQueryError):
    """Protocol violation: the calling profile does not declare this tool."""

    def __init__(self, name: str, profile: str):
        super().__init__(f"tool {name!r} is not available to profile {profile!r}")
        self.name = name
        self.profile = profile


class MalformedScript(CohortQueryError):
    def __init__(self, step: int, detail: str):
        super().__init__(f"malformed script step {step}: {detail}")
        self.step = step
        self.detail = detail


class ModelUnavailable(CohortQueryError):
    def __init__(self, cause: str):
        super().__init__(f"model unavailable: {cause}")
        self.cause = cause


class MissingPlaceholder(CohortQueryError):
    def __init__(self, name: str):
        super().__init__(f"template placeholder {name!r} has no binding")
        self.name = name


# --- evaluation ----------------------------------------------------------------

class BenchmarkLoadError(CohortQueryError):
    def __init__(self, detail: str):
        super().__init__(f"benchmark failed to load: {detail}")
        self.detail = detail


class StoreMissing(CohortQueryError):
    def __init__(self, detail: str):
        super().__init__(f"patient store missing: {detail}")
        self.detail = detail
