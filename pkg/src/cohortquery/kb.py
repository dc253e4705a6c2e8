"""External-terminology lookup: brand names, acronyms, synonyms.

A small local mapping file stands in for the multi-million-code public
vocabularies; an optional remote endpoint honoring the same response shape
can be configured behind it. The local file is always consulted first and
the remote only when it yields nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import requests

from .errors import MalformedKb, RemoteUnavailable

KINDS = ("brand", "generic", "acronym", "synonym")

MAX_RESULTS = 10
DEFAULT_TIMEOUT_SECONDS = 5.0


@dataclass(frozen=True)
class KbEntry:
    term: str
    preferred: str
    kind: str
    related: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {"term": self.term, "preferred": self.preferred,
                "kind": self.kind, "related": list(self.related)}


@dataclass(frozen=True)
class RemoteKbConfig:
    url: str
    timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS
    api_key_env: Optional[str] = None  # name of the env var, never the key itself


class Kb:
    """Immutable term mapping with optional remote fallback."""

    def __init__(self, entries: list[KbEntry], remote: Optional[RemoteKbConfig] = None,
                 session: Optional[requests.Session] = None):
        self.entries = tuple(entries)
        self.remote = remote
        self._session = session

    def lookup(self, query: str) -> list[KbEntry]:
        """Exact term matches first, then substring matches, capped at 10.

        Falls through to the remote endpoint only when the local file has
        nothing. Remote faults raise RemoteUnavailable; callers surface that
        as a tool error string, never a crash.
        """
        query = query.strip()
        if not query:
            raise ValueError("query must be non-empty")
        needle = query.lower()
        exact = [e for e in self.entries if e.term.lower() == needle]
        partial = [e for e in self.entries
                   if e not in exact and (needle in e.term.lower()
                                          or needle in e.preferred.lower())]
        results = (exact + partial)[:MAX_RESULTS]
        if results or self.remote is None:
            return results
        return self._lookup_remote(query)

    def _lookup_remote(self, query: str) -> list[KbEntry]:
        import os

        headers = {}
        if self.remote.api_key_env:
            key = os.environ.get(self.remote.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        try:
            client = self._session or requests
            response = client.get(self.remote.url, params={"query": query},
                                  headers=headers, timeout=self.remote.timeout_seconds)
        except requests.RequestException as exc:
            raise RemoteUnavailable(str(exc)) from exc
        if not 200 <= response.status_code < 300:
            raise RemoteUnavailable(f"HTTP {response.status_code}")
        try:
            payload = response.json()
            entries = [_entry_from_record(rec, i) for i, rec in enumerate(payload)]
        except (ValueError, MalformedKb) as exc:
            raise RemoteUnavailable(f"bad response: {exc}") from exc
        return entries[:MAX_RESULTS]


def _entry_from_record(record: dict, index: int) -> KbEntry:
    if not isinstance(record, dict):
        raise MalformedKb(f"entry {index}: expected an object")
    for required in ("term", "preferred", "kind"):
        if required not in record:
            raise MalformedKb(f"entry {index}: missing field {required!r}")
    kind = record["kind"]
    if kind not in KINDS:
        raise MalformedKb(f"entry {index}: unknown kind {kind!r}")
    related = tuple(str(r) for r in record.get("related", []))
    if kind == "brand" and len(related) != 1:
        raise MalformedKb(f"entry {index}: brand {record['term']!r} must map to exactly one generic")
    if not str(record["term"]).strip():
        raise MalformedKb(f"entry {index}: term must be non-empty")
    return KbEntry(term=str(record["term"]), preferred=str(record["preferred"]),
                   kind=kind, related=related)


def load_kb(path: str | Path, remote: Optional[RemoteKbConfig] = None) -> Kb:
    """Load the local mapping file: a JSON array of entry records."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedKb(str(exc)) from exc
    if not isinstance(data, list):
        raise MalformedKb("top level must be a JSON array")
    entries = [_entry_from_record(rec, i) for i, rec in enumerate(data)]
    return Kb(entries, remote=remote)
