"""Honeypot/darknet sighting store and the 24-hour infection-window query.

A sighting is one observation of a source address hitting a telnet honeypot,
an HTTP honeypot, or the darknet. A target counts as infected at query time Q
iff at least one sighting for that exact address falls in the half-open
window (Q - window, Q]. The boundary sighting at exactly Q - window is out.
"""

from __future__ import annotations

import datetime as dt
import ipaddress
import json
import sqlite3
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .clock import Clock, SystemClock, format_rfc3339, parse_rfc3339
from .config import SightingConfig

SENSORS = ("telnet_honeypot", "http_honeypot", "darknet")


class SightingError(ValueError):
    """Malformed sighting record or invalid query input."""


@dataclass(frozen=True)
class Sighting:
    source_address: str
    observed_at: dt.datetime
    sensor: str
    detail: str = ""

    def __post_init__(self) -> None:
        ipaddress.IPv4Address(self.source_address)
        if self.sensor not in SENSORS:
            raise SightingError(f"unknown sensor {self.sensor!r}")
        if self.observed_at.tzinfo is None:
            raise SightingError("observed_at must be timezone-aware")


@dataclass(frozen=True)
class InfectionVerdict:
    infected: bool
    window_start: dt.datetime
    window_end: dt.datetime
    evidence: tuple[Sighting, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        assert self.infected == bool(self.evidence)
        for s in self.evidence:
            assert self.window_start < s.observed_at <= self.window_end


@dataclass(frozen=True)
class IngestCounts:
    accepted: int = 0
    rejected: int = 0


def parse_sighting_line(line: str, *, now: dt.datetime, clock_skew: dt.timedelta) -> Sighting:
    """Parse one JSON-Lines record: keys src, ts (RFC 3339 UTC), sensor, detail."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SightingError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SightingError("record is not a JSON object")
    try:
        src = obj["src"]
        ts = obj["ts"]
        sensor = obj["sensor"]
    except KeyError as exc:
        raise SightingError(f"missing key {exc.args[0]!r}") from exc
    try:
        ipaddress.IPv4Address(src)
    except (ipaddress.AddressValueError, ValueError) as exc:
        raise SightingError(f"bad source address {src!r}") from exc
    try:
        observed_at = parse_rfc3339(str(ts))
    except ValueError as exc:
        raise SightingError(f"bad timestamp {ts!r}") from exc
    if observed_at > now + clock_skew:
        raise SightingError(f"timestamp {ts!r} is in the future")
    detail = obj.get("detail", "")
    if not isinstance(detail, str):
        raise SightingError("detail must be a string")
    return Sighting(source_address=str(src), observed_at=observed_at, sensor=str(sensor), detail=detail)


class SightingStore:
    """SQLite-backed store; ingestion batches are serialized and atomic.

    Queries run against a consistent snapshot: a batch either landed entirely
    or not at all, and readers never see a half-written batch.
    """

    def __init__(
        self,
        path: Path | str = ":memory:",
        config: SightingConfig | None = None,
        clock: Clock | None = None,
    ):
        self.config = config or SightingConfig()
        self.clock = clock or SystemClock()
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(str(path), check_same_thread=False)
        with self._lock:
            self._conn.execute(
                """
                CREATE TABLE IF NOT EXISTS sightings (
                    id INTEGER PRIMARY KEY,
                    src TEXT NOT NULL,
                    observed_at TEXT NOT NULL,
                    sensor TEXT NOT NULL,
                    detail TEXT NOT NULL DEFAULT ''
                )
                """
            )
            self._conn.execute(
                "CREATE INDEX IF NOT EXISTS idx_sightings_src_ts ON sightings (src, observed_at)"
            )
            self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    def add(self, sighting: Sighting) -> None:
        self.ingest_parsed([sighting])

    def ingest_parsed(self, sightings: Iterable[Sighting]) -> int:
        with self._lock:
            try:
                for s in sightings:
                    self._insert(s)
            except Exception:
                self._conn.rollback()
                raise
            self._conn.commit()
        return self.count()

    def _insert(self, s: Sighting) -> None:
        self._conn.execute(
            "INSERT INTO sightings (src, observed_at, sensor, detail) VALUES (?, ?, ?, ?)",
            (s.source_address, format_rfc3339(s.observed_at), s.sensor, s.detail),
        )

    def ingest_sightings(self, source: Iterable[str], reject_policy: str = "skip") -> IngestCounts:
        """Ingest a stream of JSON-Lines records.

        policy "skip" counts malformed records as rejected; "abort" raises on the
        first malformed record and leaves the store unchanged for the batch.
        """
        if reject_policy not in ("skip", "abort"):
            raise ValueError(f"unknown reject policy {reject_policy!r}")
        now = self.clock.now()
        accepted = 0
        rejected = 0
        with self._lock:
            try:
                for lineno, raw in enumerate(source, start=1):
                    line = raw.strip()
                    if not line:
                        continue
                    try:
                        sighting = parse_sighting_line(
                            line, now=now, clock_skew=self.config.clock_skew
                        )
                    except SightingError as exc:
                        if reject_policy == "abort":
                            raise SightingError(f"line {lineno}: {exc}") from exc
                        rejected += 1
                        continue
                    self._insert(sighting)
                    accepted += 1
            except Exception:
                self._conn.rollback()
                raise
            self._conn.commit()
        return IngestCounts(accepted=accepted, rejected=rejected)

    def ingest_file(self, path: Path | str, reject_policy: str = "skip") -> IngestCounts:
        with open(path, "r", encoding="utf-8") as handle:
            return self.ingest_sightings(handle, reject_policy=reject_policy)

    def count(self) -> int:
        with self._lock:
            (n,) = self._conn.execute("SELECT COUNT(*) FROM sightings").fetchone()
        return n

    def infected_within(
        self,
        address: str,
        query_time: dt.datetime | None = None,
        window: dt.timedelta | None = None,
    ) -> InfectionVerdict:
        """All sightings for the exact address in (query_time - window, query_time]."""
        try:
            ipaddress.IPv4Address(address)
        except (ipaddress.AddressValueError, ValueError) as exc:
            raise SightingError(f"bad address {address!r}") from exc
        window = window if window is not None else self.config.window
        if window <= dt.timedelta(0):
            raise SightingError("window must be positive")
        query_time = query_time or self.clock.now()
        start = query_time - window
        with self._lock:
            rows = self._conn.execute(
                "SELECT src, observed_at, sensor, detail FROM sightings"
                " WHERE src = ? ORDER BY observed_at, id",
                (address,),
            ).fetchall()
        evidence = tuple(
            Sighting(src, parse_rfc3339(ts), sensor, detail)
            for src, ts, sensor, detail in rows
            if start < parse_rfc3339(ts) <= query_time
        )
        return InfectionVerdict(
            infected=bool(evidence),
            window_start=start,
            window_end=query_time,
            evidence=evidence,
        )

    def prune(self, now: dt.datetime | None = None) -> int:
        """Delete sightings older than the configured retention; no-op when unset."""
        if self.config.retention_days is None:
            return 0
        now = now or self.clock.now()
        cutoff = now - dt.timedelta(days=self.config.retention_days)
        with self._lock:
            cur = self._conn.execute(
                "DELETE FROM sightings WHERE observed_at <= ?", (format_rfc3339(cutoff),)
            )
            self._conn.commit()
        return cur.rowcount

    def iter_all(self) -> Iterator[Sighting]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT src, observed_at, sensor, detail FROM sightings ORDER BY id"
            ).fetchall()
        for src, ts, sensor, detail in rows:
            yield Sighting(src, parse_rfc3339(ts), sensor, detail)
