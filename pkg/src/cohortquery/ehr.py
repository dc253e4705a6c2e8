"""Synthetic patient store: seeded generation, CSV persistence, row access.

This is the execution layer's data. Nothing in here is ever handed to an
agent; the tool gateway scans every outbound payload for the distinctive
``PT-`` patient ids minted below.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from random import Random
from typing import Optional

from .catalog import Catalog, EVENT_DOMAINS
from .dates import shift_months
from .errors import InvalidConfig

PATIENT_ID_PREFIX = "PT-"

# Event dates are drawn from this many months before the as-of date unless a
# concept's lookback window is narrower.
EVENT_WINDOW_MONTHS = 24

_MAX_AGE_DAYS = 105 * 365


@dataclass(frozen=True)
class PatientRow:
    pat_id: str
    birth_date: date
    sex: str  # "female" | "male"
    practice_id: str
    district: str
    active: bool


@dataclass(frozen=True)
class EventRow:
    pat_id: str
    table: str  # "conditions" | "medications" | "observations"
    code: str
    event_date: date
    value: Optional[float] = None  # observations only


@dataclass(frozen=True)
class GeneratorConfig:
    n_patients: int
    seed: int
    as_of: date
    n_practices: int = 5
    districts: tuple[str, ...] = ("North", "South", "East", "West")
    concept_prevalence: dict[str, float] = field(default_factory=dict)
    co_occurrence_boost: dict[tuple[str, str], float] = field(default_factory=dict)
    active_rate: float = 0.9
    events_per_positive: int = 2  # upper bound; at least one qualifying event


class EhrStore:
    """Immutable relational model: one patient table plus one event table."""

    def __init__(self, patients: list[PatientRow], events: list[EventRow],
                 as_of: date, seed: Optional[int] = None):
        self.patients = tuple(patients)
        self.events = tuple(events)
        self.as_of = as_of
        self.seed = seed
        self.patients_by_id = {p.pat_id: p for p in self.patients}
        self.patient_ids = frozenset(self.patients_by_id)
        self._events_by_patient: dict[str, list[EventRow]] = {}
        for event in self.events:
            self._events_by_patient.setdefault(event.pat_id, []).append(event)
        self.practices = sorted({p.practice_id for p in self.patients})
        self.districts = sorted({p.district for p in self.patients})

    def events_for(self, pat_id: str) -> list[EventRow]:
        return self._events_by_patient.get(pat_id, [])

    def __repr__(self) -> str:
        return f"EhrStore(patients={len(self.patients)}, events={len(self.events)})"


def _validate_config(config: GeneratorConfig, catalog: Catalog) -> None:
    if config.n_patients < 0:
        raise InvalidConfig("n_patients", "must be >= 0")
    if config.n_practices < 1:
        raise InvalidConfig("n_practices", "must be >= 1")
    if not config.districts:
        raise InvalidConfig("districts", "must be non-empty")
    if not 0.0 <= config.active_rate <= 1.0:
        raise InvalidConfig("active_rate", "must be in [0, 1]")
    for cid, p in config.concept_prevalence.items():
        if not 0.0 <= p <= 1.0:
            raise InvalidConfig("concept_prevalence", f"{cid}: probability {p} outside [0, 1]")
        if cid not in catalog:
            raise InvalidConfig("concept_prevalence", f"unknown concept {cid}")
        if catalog.get_concept(cid).domain not in EVENT_DOMAINS:
            raise InvalidConfig("concept_prevalence", f"{cid} is not an event concept")
    for (a, b), mult in config.co_occurrence_boost.items():
        if mult < 0:
            raise InvalidConfig("co_occurrence_boost", f"({a},{b}): multiplier {mult} < 0")


def generate(config: GeneratorConfig, catalog: Catalog) -> EhrStore:
    """Generate a store deterministically from the config.

    Each concept in ``concept_prevalence`` independently marks patients with
    probability p (optionally boosted by co-occurrence with already assigned
    concepts); marked patients receive one or more qualifying events dated
    inside the concept's lookback window, or anywhere in the last
    EVENT_WINDOW_MONTHS months when the concept has none.
    """
    _validate_config(config, catalog)
    rng = Random(config.seed)

    practices = [f"P-{i + 1:03d}" for i in range(config.n_practices)]
    practice_district = {p: config.districts[i % len(config.districts)]
                         for i, p in enumerate(practices)}

    patients: list[PatientRow] = []
    seen_ids: set[str] = set()
    for _ in range(config.n_patients):
        pat_id = _fresh_patient_id(rng, seen_ids)
        seen_ids.add(pat_id)
        birth_date = config.as_of - timedelta(days=rng.randrange(_MAX_AGE_DAYS + 1))
        practice = rng.choice(practices)
        patients.append(PatientRow(
            pat_id=pat_id,
            birth_date=birth_date,
            sex=rng.choice(("female", "male")),
            practice_id=practice,
            district=practice_district[practice],
            active=rng.random() < config.active_rate,
        ))

    events: list[EventRow] = []
    assigned: dict[str, set[str]] = {p.pat_id: set() for p in patients}
    for concept_id in sorted(config.concept_prevalence):
        concept = catalog.get_concept(concept_id)
        base_p = config.concept_prevalence[concept_id]
        window_months = min(concept.lookback_months or EVENT_WINDOW_MONTHS,
                            EVENT_WINDOW_MONTHS)
        window_start = shift_months(config.as_of, -window_months)
        window_days = (config.as_of - window_start).days
        for patient in patients:
            p = base_p
            for (other, target), mult in sorted(config.co_occurrence_boost.items()):
                if target == concept_id and other in assigned[patient.pat_id]:
                    p *= mult
            p = min(1.0, max(0.0, p))
            if rng.random() >= p:
                continue
            assigned[patient.pat_id].add(concept_id)
            n_events = rng.randint(1, max(1, config.events_per_positive))
            for _ in range(n_events):
                event_date = window_start + timedelta(days=rng.randrange(window_days + 1))
                value = round(rng.uniform(40.0, 150.0), 1) \
                    if concept.domain == "observations" else None
                events.append(EventRow(
                    pat_id=patient.pat_id,
                    table=concept.domain,
                    code=rng.choice(concept.codes),
                    event_date=event_date,
                    value=value,
                ))

    events.sort(key=lambda e: (e.pat_id, e.table, e.event_date, e.code))
    return EhrStore(patients, events, as_of=config.as_of, seed=config.seed)


def _fresh_patient_id(rng: Random, seen: set[str]) -> str:
    while True:
        pat_id = PATIENT_ID_PREFIX + f"{rng.getrandbits(48):012x}"
        if pat_id not in seen:
            return pat_id


def binomial_3sigma_bounds(p: float, n: int) -> tuple[float, float]:
    """3-sigma band for the observed fraction under binomial sampling."""
    sigma = math.sqrt(p * (1 - p) / n) if n else 0.0
    return max(0.0, p - 3 * sigma), min(1.0, p + 3 * sigma)


# --- persistence -----------------------------------------------------------------

PATIENT_COLUMNS = ("pat_id", "birth_date", "sex", "practice_id", "district", "active")
EVENT_COLUMNS = ("pat_id", "table", "code", "event_date", "value")


def save_store(store: EhrStore, out_dir: str | Path) -> Path:
    """Write patient.csv, events.csv and meta.json into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "patient.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PATIENT_COLUMNS)
        for p in store.patients:
            writer.writerow([p.pat_id, p.birth_date.isoformat(), p.sex,
                             p.practice_id, p.district, int(p.active)])
    with open(out / "events.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_COLUMNS)
        for e in store.events:
            writer.writerow([e.pat_id, e.table, e.code, e.event_date.isoformat(),
                             "" if e.value is None else e.value])
    meta = {"as_of": store.as_of.isoformat(), "seed": store.seed,
            "n_patients": len(store.patients), "n_events": len(store.events)}
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return out


def load_store(in_dir: str | Path) -> EhrStore:
    in_dir = Path(in_dir)
    meta = json.loads((in_dir / "meta.json").read_text(encoding="utf-8"))
    patients = []
    with open(in_dir / "patient.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            patients.append(PatientRow(
                pat_id=row["pat_id"],
                birth_date=date.fromisoformat(row["birth_date"]),
                sex=row["sex"],
                practice_id=row["practice_id"],
                district=row["district"],
                active=bool(int(row["active"])),
            ))
    events = []
    with open(in_dir / "events.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            events.append(EventRow(
                pat_id=row["pat_id"],
                table=row["table"],
                code=row["code"],
                event_date=date.fromisoformat(row["event_date"]),
                value=float(row["value"]) if row["value"] else None,
            ))
    return EhrStore(patients, events, as_of=date.fromisoformat(meta["as_of"]),
                    seed=meta.get("seed"))
