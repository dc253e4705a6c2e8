"""Local vocabulary of clinical concepts, plus the auxiliary registries
(reports, KPIs, risksets, concept categories) that cohort queries and result
views are written in terms of.

The catalog is immutable after load and safe for concurrent reads. Search is
plain case-insensitive substring matching; anything fuzzier (brand names,
acronyms) is the retrieval agent's job.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .errors import DuplicateConceptId, EmptyKey, MalformedCatalog, UnknownConcept, UnknownMode

EVENT_DOMAINS = ("conditions", "medications", "observations")
DOMAINS = EVENT_DOMAINS + ("demographics",)

DEFAULT_SEARCH_LIMIT = 25


class SearchMode(str, Enum):
    CONCEPTS = "concepts"
    REPORTS = "reports"
    KPIS = "kpis"
    KPI_POPULATIONS = "kpi_populations"
    RISKSETS = "risksets"
    CONCEPT_CATEGORIES = "concept_categories"

    @classmethod
    def parse(cls, value: str) -> "SearchMode":
        try:
            return cls(value)
        except ValueError:
            raise UnknownMode(value) from None


@dataclass(frozen=True)
class Concept:
    """A named clinical codeset with an optional lookback window.

    Event-domain concepts (conditions/medications/observations) carry a
    non-empty ``codes`` list. Demographics concepts carry a ``predicate``
    tag (``active``, ``sex:female``, ``age>=75`` ...) instead of codes.
    """

    id: str
    name: str
    description: str
    domain: str
    codes: tuple[str, ...] = ()
    lookback_months: Optional[int] = None
    vocab_tags: tuple[str, ...] = ()
    predicate: Optional[str] = None

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise MalformedCatalog(f"concept {self.id!r}: unknown domain {self.domain!r}")
        if self.domain in EVENT_DOMAINS and not self.codes:
            raise MalformedCatalog(f"concept {self.id!r}: event domain requires codes")
        if self.domain == "demographics" and not self.predicate:
            raise MalformedCatalog(f"concept {self.id!r}: demographics requires a predicate tag")
        if self.lookback_months is not None and self.lookback_months < 1:
            raise MalformedCatalog(f"concept {self.id!r}: lookback_months must be >= 1")


@dataclass(frozen=True)
class ConceptSummary:
    """Codeless projection of a concept, safe to hand to an agent."""

    id: str
    name: str
    domain: str
    lookback_months: Optional[int] = None

    def as_dict(self) -> dict:
        d = {"id": self.id, "name": self.name, "domain": self.domain}
        if self.lookback_months is not None:
            d["lookback_months"] = self.lookback_months
        return d


@dataclass(frozen=True)
class RegistryEntry:
    """One entry of an auxiliary registry (report, kpi, riskset, ...).

    ``extra`` holds the kind-specific payload, e.g. report columns, a
    riskset's cohort expression, or a category's observation codes.
    """

    id: str
    name: str
    description: str = ""
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SearchResult:
    items: tuple
    total: int
    truncated: bool

    def as_dict(self) -> dict:
        return {
            "items": [i.as_dict() if isinstance(i, ConceptSummary)
                      else {"id": i.id, "name": i.name} for i in self.items],
            "total": self.total,
            "truncated": self.truncated,
        }


class Catalog:
    """Immutable concept catalog plus optional auxiliary registries."""

    def __init__(self, concepts: Iterable[Concept],
                 registries: Optional[dict[str, list[RegistryEntry]]] = None):
        self._concepts: dict[str, Concept] = {}
        for concept in concepts:
            if concept.id in self._concepts:
                raise DuplicateConceptId(concept.id)
            self._concepts[concept.id] = concept
        self._registries: dict[str, dict[str, RegistryEntry]] = {}
        for mode in SearchMode:
            if mode is SearchMode.CONCEPTS:
                continue
            entries = (registries or {}).get(mode.value, [])
            self._registries[mode.value] = {e.id: e for e in entries}

    def __len__(self) -> int:
        return len(self._concepts)

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self._concepts

    def concept_ids(self) -> list[str]:
        return list(self._concepts)

    def get_concept(self, concept_id: str) -> Concept:
        """Full concept record, codes included. Execution-layer use only."""
        try:
            return self._concepts[concept_id]
        except KeyError:
            raise UnknownConcept(concept_id) from None

    def registry_entry(self, mode: SearchMode, entry_id: str) -> Optional[RegistryEntry]:
        return self._registries.get(mode.value, {}).get(entry_id)

    def search(self, key: str, mode: SearchMode | str = SearchMode.CONCEPTS,
               limit: int = DEFAULT_SEARCH_LIMIT) -> SearchResult:
        """Case-insensitive substring search over name and description.

        Results are ordered by earliest match position, then id, and capped
        at ``limit``; ``total`` always reports the uncapped match count so a
        caller can tell when to narrow its key.
        """
        if isinstance(mode, str):
            mode = SearchMode.parse(mode)
        key = key.strip()
        if not key:
            raise EmptyKey()
        if limit < 1:
            limit = 1
        needle = key.lower()

        matches: list[tuple[int, str, object]] = []
        if mode is SearchMode.CONCEPTS:
            for concept in self._concepts.values():
                pos = _match_position(needle, concept.name, concept.description)
                if pos is not None:
                    summary = ConceptSummary(concept.id, concept.name, concept.domain,
                                             concept.lookback_months)
                    matches.append((pos, concept.id, summary))
        else:
            for entry in self._registries[mode.value].values():
                pos = _match_position(needle, entry.name, entry.description)
                if pos is not None:
                    matches.append((pos, entry.id, entry))

        matches.sort(key=lambda m: (m[0], m[1]))
        items = tuple(m[2] for m in matches[:limit])
        total = len(matches)
        return SearchResult(items=items, total=total, truncated=total > len(items))


def _match_position(needle: str, name: str, description: str) -> Optional[int]:
    pos = name.lower().find(needle)
    if pos >= 0:
        return pos
    pos = description.lower().find(needle)
    if pos >= 0:
        # Description matches rank after any name match of the same offset.
        return 10_000 + pos
    return None


def _concept_from_record(record: dict, index: int) -> Concept:
    if not isinstance(record, dict):
        raise MalformedCatalog(f"entry {index}: expected an object")
    try:
        concept_id = record["id"]
        name = record["name"]
        domain = record["domain"]
    except KeyError as exc:
        raise MalformedCatalog(f"entry {index}: missing field {exc.args[0]!r}") from None
    codes = record.get("codes", [])
    if not isinstance(codes, list):
        raise MalformedCatalog(f"entry {index}: codes must be a list")
    lookback = record.get("lookback_months")
    if lookback is not None and (not isinstance(lookback, int) or isinstance(lookback, bool)):
        raise MalformedCatalog(f"entry {index}: lookback_months must be an integer")
    return Concept(
        id=str(concept_id),
        name=str(name),
        description=str(record.get("description", "")),
        domain=str(domain),
        codes=tuple(str(c) for c in codes),
        lookback_months=lookback,
        vocab_tags=tuple(record.get("vocab_tags", [])),
        predicate=record.get("predicate"),
    )


def load_catalog(path: str | Path,
                 registries_path: str | Path | None = None) -> Catalog:
    """Load a catalog from a JSON array of concept records.

    ``registries_path`` optionally names a JSON object holding the auxiliary
    registries keyed by search mode.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedCatalog(str(exc)) from exc
    if not isinstance(data, list):
        raise MalformedCatalog("top level must be a JSON array")
    concepts = [_concept_from_record(rec, i) for i, rec in enumerate(data)]
    registries = load_registries(registries_path) if registries_path else None
    return Catalog(concepts, registries)


def load_registries(path: str | Path) -> dict[str, list[RegistryEntry]]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedCatalog(str(exc)) from exc
    if not isinstance(data, dict):
        raise MalformedCatalog("registries file must be a JSON object")
    registries: dict[str, list[RegistryEntry]] = {}
    for mode_name, entries in data.items():
        SearchMode.parse(mode_name)
        out = []
        for i, rec in enumerate(entries):
            if "id" not in rec or "name" not in rec:
                raise MalformedCatalog(f"{mode_name} entry {i}: missing id/name")
            extra = {k: v for k, v in rec.items() if k not in ("id", "name", "description")}
            out.append(RegistryEntry(id=str(rec["id"]), name=str(rec["name"]),
                                     description=str(rec.get("description", "")), extra=extra))
        registries[mode_name] = out
    return registries
