"""Diagnosis request lifecycle: submit, scan, result access, re-diagnosis.

The SQLite store is the durable queue: a pending record is an enqueued job,
and any runner (thread pool, manual test runner, CLI drain) just executes
pending records. Result pages are reachable only with the 128-bit token AND
the session scope bound at submission; a wrong token and a wrong session are
deliberately indistinguishable.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import ipaddress
import json
import logging
import re
import secrets
import sqlite3
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .clock import Clock, SystemClock, format_rfc3339, parse_rfc3339
from .config import ServiceConfig
from .remediation import AsnTable, ChainRecord, DecisionView, EnvironmentKey, classify_remediation
from .risks import MeasureCatalog, RiskFinding, RiskKind, VulnerabilityDatabase, assess
from .scanner import (
    DeviceIdentification,
    RiskFlags,
    check_telnet,
    identify,
    probe,
)
from .sightings import SightingStore
from .signatures import SignatureDatabase

log = logging.getLogger("iot_clinic.core")

LOCATIONS = ("home", "workplace", "outside", "other")
REFERRALS = ("media", "web_search", "social", "university", "lecture", "other")
STATUSES = ("pending", "running", "done", "failed")

_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")


class SubmissionError(ValueError):
    """Request rejected before a record was created."""


class ThrottleError(SubmissionError):
    def __init__(self, retry_after: dt.timedelta):
        super().__init__(f"a diagnosis for this address is already pending; retry in {int(retry_after.total_seconds())}s")
        self.retry_after = retry_after


class AccessDenied(Exception):
    """Uniform denial: never reveals whether the token exists."""

    def __init__(self) -> None:
        super().__init__("not found")


class RedoError(ValueError):
    pass


class DiagnosisError(RuntimeError):
    pass


def email_hash(email: str) -> str:
    return hashlib.sha256(email.strip().lower().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class DiagnosisRecord:
    record_id: int
    user_email: str
    target_address: str
    location: str
    referral: str
    requested_at: dt.datetime
    result_token: str
    session_scope: str
    status: str
    completed_at: dt.datetime | None = None
    parent_record: int | None = None
    as_number: int | None = None
    findings: tuple[RiskFinding, ...] = ()

    def chain_view(self) -> ChainRecord:
        device = None
        for f in self.findings:
            if f.device is not None:
                device = (f.device.vendor, f.device.model)
                break
        return ChainRecord(
            record_id=str(self.record_id),
            completed_at=self.completed_at,  # type: ignore[arg-type]
            kinds=frozenset(f.kind for f in self.findings),
            device=device,
        )


@dataclass(frozen=True)
class SubmitReceipt:
    record_id: int
    result_token: str
    session_scope: str


def _finding_to_json(f: RiskFinding) -> dict:
    device = None
    if f.device is not None:
        device = {
            "vendor": f.device.vendor,
            "series": f.device.series,
            "model": f.device.model,
            "release_year": f.device.release_year,
            "firmware_version": f.device.firmware_version,
            "matched_signature": f.device.matched_signature,
            "specificity": f.device.specificity,
            "flags": {
                "end_of_support": f.device.flags.end_of_support,
                "default_id_known": f.device.flags.default_id_known,
                "default_credential_known": f.device.flags.default_credential_known,
                "weak_default_wifi_password": f.device.flags.weak_default_wifi_password,
            },
        }
    return {
        "kind": f.kind.value,
        "evidence": f.evidence,
        "measure": f.recommended_measure,
        "device": device,
    }


def _finding_from_json(obj: dict) -> RiskFinding:
    device = None
    if obj.get("device"):
        d = obj["device"]
        flags = d.get("flags", {})
        device = DeviceIdentification(
            vendor=d["vendor"],
            series=d.get("series", ""),
            model=d["model"],
            matched_signature=d.get("matched_signature", ""),
            specificity=d.get("specificity", 1),
            release_year=d.get("release_year"),
            firmware_version=d.get("firmware_version"),
            flags=RiskFlags(
                end_of_support=flags.get("end_of_support", False),
                default_id_known=flags.get("default_id_known", False),
                default_credential_known=flags.get("default_credential_known", False),
                weak_default_wifi_password=flags.get("weak_default_wifi_password", False),
            ),
        )
    return RiskFinding(
        kind=RiskKind(obj["kind"]),
        evidence=obj["evidence"],
        recommended_measure=obj["measure"],
        device=device,
    )


class RecordStore:
    """The single embedded store: records, questionnaires, support, outbox, suppression."""

    def __init__(self, path: Path | str = ":memory:"):
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(str(path), check_same_thread=False)
        with self._lock:
            self._conn.executescript(
                """
                CREATE TABLE IF NOT EXISTS records (
                    record_id INTEGER PRIMARY KEY AUTOINCREMENT,
                    user_email TEXT NOT NULL,
                    target_address TEXT NOT NULL,
                    location TEXT NOT NULL,
                    referral TEXT NOT NULL,
                    requested_at TEXT NOT NULL,
                    completed_at TEXT,
                    result_token TEXT NOT NULL UNIQUE,
                    session_scope TEXT NOT NULL,
                    status TEXT NOT NULL,
                    parent_record INTEGER,
                    as_number INTEGER,
                    findings TEXT NOT NULL DEFAULT '[]'
                );
                CREATE TABLE IF NOT EXISTS questionnaires (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    received_at TEXT NOT NULL,
                    result_token TEXT,
                    payload TEXT NOT NULL
                );
                CREATE TABLE IF NOT EXISTS support_requests (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    record_id INTEGER NOT NULL,
                    received_at TEXT NOT NULL,
                    message TEXT NOT NULL DEFAULT ''
                );
                CREATE TABLE IF NOT EXISTS outbox (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    kind TEXT NOT NULL,
                    to_email TEXT NOT NULL,
                    subject TEXT NOT NULL,
                    body TEXT NOT NULL,
                    related_record INTEGER,
                    scheduled_for TEXT,
                    sent_at TEXT
                );
                CREATE TABLE IF NOT EXISTS suppression (
                    email TEXT PRIMARY KEY,
                    added_at TEXT NOT NULL
                );
                """
            )
            self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    # -- records ----------------------------------------------------------

    def insert_record(
        self,
        *,
        user_email: str,
        target_address: str,
        location: str,
        referral: str,
        requested_at: dt.datetime,
        result_token: str,
        session_scope: str,
        parent_record: int | None = None,
    ) -> int:
        with self._lock:
            cur = self._conn.execute(
                "INSERT INTO records (user_email, target_address, location, referral,"
                " requested_at, result_token, session_scope, status, parent_record)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, 'pending', ?)",
                (
                    user_email,
                    target_address,
                    location,
                    referral,
                    format_rfc3339(requested_at),
                    result_token,
                    session_scope,
                    parent_record,
                ),
            )
            self._conn.commit()
            return int(cur.lastrowid)

    _COLS = (
        "record_id, user_email, target_address, location, referral, requested_at,"
        " completed_at, result_token, session_scope, status, parent_record, as_number, findings"
    )

    def _row_to_record(self, row) -> DiagnosisRecord:
        (
            record_id,
            user_email,
            target_address,
            location,
            referral,
            requested_at,
            completed_at,
            result_token,
            session_scope,
            status,
            parent_record,
            as_number,
            findings,
        ) = row
        return DiagnosisRecord(
            record_id=record_id,
            user_email=user_email,
            target_address=target_address,
            location=location,
            referral=referral,
            requested_at=parse_rfc3339(requested_at),
            completed_at=parse_rfc3339(completed_at) if completed_at else None,
            result_token=result_token,
            session_scope=session_scope,
            status=status,
            parent_record=parent_record,
            as_number=as_number,
            findings=tuple(_finding_from_json(o) for o in json.loads(findings)),
        )

    def get(self, record_id: int) -> DiagnosisRecord | None:
        with self._lock:
            row = self._conn.execute(
                f"SELECT {self._COLS} FROM records WHERE record_id = ?", (record_id,)
            ).fetchone()
        return self._row_to_record(row) if row else None

    def by_token(self, token: str) -> DiagnosisRecord | None:
        with self._lock:
            row = self._conn.execute(
                f"SELECT {self._COLS} FROM records WHERE result_token = ?", (token,)
            ).fetchone()
        return self._row_to_record(row) if row else None

    def records_for_user(self, email: str) -> list[DiagnosisRecord]:
        with self._lock:
            rows = self._conn.execute(
                f"SELECT {self._COLS} FROM records WHERE user_email = ? ORDER BY record_id",
                (email,),
            ).fetchall()
        return [self._row_to_record(r) for r in rows]

    def all_records(self) -> list[DiagnosisRecord]:
        with self._lock:
            rows = self._conn.execute(
                f"SELECT {self._COLS} FROM records ORDER BY record_id"
            ).fetchall()
        return [self._row_to_record(r) for r in rows]

    def pending_ids(self) -> list[int]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT record_id FROM records WHERE status = 'pending' ORDER BY record_id"
            ).fetchall()
        return [r[0] for r in rows]

    def in_flight_for_target(self, target: str) -> int:
        with self._lock:
            (n,) = self._conn.execute(
                "SELECT COUNT(*) FROM records WHERE target_address = ?"
                " AND status IN ('pending', 'running')",
                (target,),
            ).fetchone()
        return n

    def set_status(self, record_id: int, status: str) -> None:
        assert status in STATUSES
        with self._lock:
            self._conn.execute(
                "UPDATE records SET status = ? WHERE record_id = ?", (status, record_id)
            )
            self._conn.commit()

    def complete(
        self,
        record_id: int,
        completed_at: dt.datetime,
        findings: tuple[RiskFinding, ...],
        as_number: int,
    ) -> None:
        payload = json.dumps([_finding_to_json(f) for f in findings])
        with self._lock:
            self._conn.execute(
                "UPDATE records SET status = 'done', completed_at = ?, findings = ?,"
                " as_number = ? WHERE record_id = ?",
                (format_rfc3339(completed_at), payload, as_number, record_id),
            )
            self._conn.commit()

    def children_of(self, record_id: int) -> list[int]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT record_id FROM records WHERE parent_record = ? ORDER BY record_id",
                (record_id,),
            ).fetchall()
        return [r[0] for r in rows]

    def done_records(self) -> list[DiagnosisRecord]:
        with self._lock:
            rows = self._conn.execute(
                f"SELECT {self._COLS} FROM records WHERE status = 'done' ORDER BY record_id"
            ).fetchall()
        return [self._row_to_record(r) for r in rows]

    def delete_user(self, email: str) -> int:
        with self._lock:
            cur = self._conn.execute("DELETE FROM records WHERE user_email = ?", (email,))
            self._conn.execute("DELETE FROM outbox WHERE to_email = ?", (email,))
            self._conn.commit()
        return cur.rowcount

    # -- questionnaires / support ------------------------------------------

    def store_questionnaire(self, payload: str, received_at: dt.datetime, token: str | None) -> int:
        with self._lock:
            cur = self._conn.execute(
                "INSERT INTO questionnaires (received_at, result_token, payload) VALUES (?, ?, ?)",
                (format_rfc3339(received_at), token, payload),
            )
            self._conn.commit()
            return int(cur.lastrowid)

    def questionnaires(self) -> list[tuple[str, str | None, str]]:
        with self._lock:
            return self._conn.execute(
                "SELECT received_at, result_token, payload FROM questionnaires ORDER BY id"
            ).fetchall()

    def store_support_request(self, record_id: int, message: str, received_at: dt.datetime) -> int:
        with self._lock:
            cur = self._conn.execute(
                "INSERT INTO support_requests (record_id, received_at, message) VALUES (?, ?, ?)",
                (record_id, format_rfc3339(received_at), message),
            )
            self._conn.commit()
            return int(cur.lastrowid)

    def support_requests(self) -> list[tuple[int, str, str]]:
        with self._lock:
            return self._conn.execute(
                "SELECT record_id, received_at, message FROM support_requests ORDER BY id"
            ).fetchall()

    # -- outbox / suppression ----------------------------------------------

    def record_email(
        self,
        *,
        kind: str,
        to_email: str,
        subject: str,
        body: str,
        related_record: int | None,
        scheduled_for: dt.datetime | None,
        sent_at: dt.datetime | None,
    ) -> int:
        with self._lock:
            cur = self._conn.execute(
                "INSERT INTO outbox (kind, to_email, subject, body, related_record,"
                " scheduled_for, sent_at) VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    kind,
                    to_email,
                    subject,
                    body,
                    related_record,
                    format_rfc3339(scheduled_for) if scheduled_for else None,
                    format_rfc3339(sent_at) if sent_at else None,
                ),
            )
            self._conn.commit()
            return int(cur.lastrowid)

    def sent_emails(self, kind: str | None = None, related_record: int | None = None) -> list[tuple]:
        query = "SELECT kind, to_email, subject, body, related_record, sent_at FROM outbox WHERE sent_at IS NOT NULL"
        args: list = []
        if kind:
            query += " AND kind = ?"
            args.append(kind)
        if related_record is not None:
            query += " AND related_record = ?"
            args.append(related_record)
        with self._lock:
            return self._conn.execute(query + " ORDER BY id", args).fetchall()

    def reminder_sent_for(self, record_id: int) -> bool:
        with self._lock:
            (n,) = self._conn.execute(
                "SELECT COUNT(*) FROM outbox WHERE kind = 'reminder' AND related_record = ?"
                " AND sent_at IS NOT NULL",
                (record_id,),
            ).fetchone()
        return n > 0

    def suppress(self, email: str, when: dt.datetime) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR IGNORE INTO suppression (email, added_at) VALUES (?, ?)",
                (email, format_rfc3339(when)),
            )
            self._conn.commit()

    def is_suppressed(self, email: str) -> bool:
        with self._lock:
            row = self._conn.execute(
                "SELECT 1 FROM suppression WHERE email = ?", (email,)
            ).fetchone()
        return row is not None


class EventLog:
    """Append-only JSONL of diagnosis completions; the analytics input format."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append_completion(self, record: DiagnosisRecord) -> None:
        device = None
        for f in record.findings:
            if f.device is not None:
                device = [f.device.vendor, f.device.model]
                break
        line = json.dumps(
            {
                "record_id": record.record_id,
                "email_hash": email_hash(record.user_email),
                "asn": record.as_number if record.as_number is not None else 0,
                "requested_at": format_rfc3339(record.requested_at),
                "completed_at": format_rfc3339(record.completed_at),  # type: ignore[arg-type]
                "findings": [f.kind.value for f in record.findings],
                "device": device,
            }
        )
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    def purge_email(self, email: str) -> int:
        """Rewrite the log without the given user's lines (deletion on request)."""
        target = email_hash(email)
        if not self.path.exists():
            return 0
        with self._lock:
            kept = []
            dropped = 0
            with open(self.path, encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    if json.loads(line).get("email_hash") == target:
                        dropped += 1
                    else:
                        kept.append(line)
            self.path.write_text("".join(kept), encoding="utf-8")
        return dropped


class ManualRunner:
    """Collects enqueued jobs; tests decide when they run."""

    def __init__(self) -> None:
        self.queue: list[int] = []

    def submit(self, record_id: int) -> None:
        self.queue.append(record_id)

    def drain(self, service: "DiagnosisService") -> list[int]:
        ran = []
        while self.queue:
            record_id = self.queue.pop(0)
            service.run_diagnosis(record_id)
            ran.append(record_id)
        return ran

    def shutdown(self) -> None:
        self.queue.clear()


class ThreadPoolRunner:
    """Bounded worker pool executing diagnosis jobs asynchronously."""

    def __init__(self, service: "DiagnosisService", workers: int = 4):
        self._service = service
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="diagnosis")

    def submit(self, record_id: int) -> None:
        self._pool.submit(self._run, record_id)

    def _run(self, record_id: int) -> None:
        try:
            self._service.run_diagnosis(record_id)
        except Exception:
            log.exception("diagnosis job %s failed", record_id)

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)


class DiagnosisService:
    def __init__(
        self,
        config: ServiceConfig,
        *,
        store: RecordStore | None = None,
        sighting_store: SightingStore | None = None,
        signature_db: SignatureDatabase | None = None,
        vuln_db: VulnerabilityDatabase | None = None,
        asn_table: AsnTable | None = None,
        measures: MeasureCatalog | None = None,
        clock: Clock | None = None,
        notifier=None,
    ):
        self.config = config
        self.clock = clock or SystemClock()
        if store is None:
            config.data_dir.mkdir(parents=True, exist_ok=True)
            store = RecordStore(config.db_path)
        self.store = store
        if sighting_store is None:
            # Same embedded store file as the records: the CLI ingests into
            # it and diagnoses read from it.
            config.data_dir.mkdir(parents=True, exist_ok=True)
            sighting_store = SightingStore(config.db_path, config.sightings, clock=self.clock)
        self.sighting_store = sighting_store
        self.signature_db = (
            signature_db if signature_db is not None else SignatureDatabase.load(config.signature_db)
        )
        self.vuln_db = vuln_db if vuln_db is not None else VulnerabilityDatabase.load(config.vuln_db)
        self.asn_table = asn_table if asn_table is not None else AsnTable.load(config.asn_table)
        self.measures = measures or MeasureCatalog(config.template_dir)
        self.event_log = EventLog(config.event_log_path)
        self.notifier = notifier
        self.runner = None

    def use_runner(self, runner) -> None:
        self.runner = runner

    # -- submission ---------------------------------------------------------

    def submit_request(
        self,
        email: str,
        location: str,
        referral: str,
        verification_ok: bool,
        target: str,
        session_scope: str | None = None,
        parent_record: int | None = None,
    ) -> SubmitReceipt:
        if not verification_ok:
            raise SubmissionError("human verification failed")
        if not _EMAIL_RE.match(email or ""):
            raise SubmissionError(f"invalid email address {email!r}")
        if location not in LOCATIONS:
            raise SubmissionError(f"unknown location {location!r}")
        if referral not in REFERRALS:
            raise SubmissionError(f"unknown referral {referral!r}")
        try:
            ipaddress.IPv4Address(target)
        except (ipaddress.AddressValueError, ValueError) as exc:
            raise SubmissionError(f"target {target!r} is not an IPv4 address") from exc
        if self.store.in_flight_for_target(target) >= self.config.max_pending_per_target:
            raise ThrottleError(self.config.throttle_retry_after)

        scope = session_scope or secrets.token_urlsafe(16)
        record_id = None
        for _ in range(4):
            token = secrets.token_urlsafe(16)  # 128 bits, CSPRNG
            try:
                record_id = self.store.insert_record(
                    user_email=email,
                    target_address=target,
                    location=location,
                    referral=referral,
                    requested_at=self.clock.now(),
                    result_token=token,
                    session_scope=scope,
                    parent_record=parent_record,
                )
                break
            except sqlite3.IntegrityError:
                continue
        if record_id is None:
            raise RuntimeError("could not allocate a unique result token")
        if self.runner is not None:
            self.runner.submit(record_id)
        return SubmitReceipt(record_id=record_id, result_token=token, session_scope=scope)

    # -- diagnosis ----------------------------------------------------------

    def run_diagnosis(self, record_id: int) -> DiagnosisRecord:
        record = self.store.get(record_id)
        if record is None:
            raise DiagnosisError(f"no record {record_id}")
        if record.status != "pending":
            raise DiagnosisError(f"record {record_id} is {record.status}, not pending")
        self.store.set_status(record_id, "running")
        scan = self.config.scan
        try:
            responses = probe(
                record.target_address, scan.ports, scan.per_port_timeout, config=scan
            )
            telnet = check_telnet(
                record.target_address, scan.per_port_timeout, port=scan.telnet_port
            )
            ident = identify(responses, self.signature_db)
            verdict = self.sighting_store.infected_within(
                record.target_address, self.clock.now(), self.config.sightings.window
            )
            findings = assess(
                ident.identification, responses, telnet, verdict, self.vuln_db, self.measures
            )
        except Exception as exc:
            self.store.set_status(record_id, "failed")
            log.error("operator alert: diagnosis %s failed: %s", record_id, exc)
            raise DiagnosisError(f"diagnosis {record_id} failed: {exc}") from exc

        asn = self.asn_table.lookup(record.target_address)
        self.store.complete(record_id, self.clock.now(), tuple(findings), asn)
        done = self.store.get(record_id)
        assert done is not None
        self.event_log.append_completion(done)
        if self.notifier is not None:
            self.notifier.send_completion(done)
        return done

    def run_pending(self) -> list[int]:
        return [self.run_diagnosis(record_id).record_id for record_id in self.store.pending_ids()]

    # -- result access ------------------------------------------------------

    def fetch_result(self, result_token: str, session_scope: str) -> dict:
        record = self.store.by_token(result_token)
        if record is None or record.session_scope != session_scope:
            raise AccessDenied()
        return self.result_view(record)

    def result_view(self, record: DiagnosisRecord) -> dict:
        from .risks import RISK_LABELS

        return {
            "status": record.status,
            "requested_at": format_rfc3339(record.requested_at),
            "completed_at": format_rfc3339(record.completed_at) if record.completed_at else None,
            "clean": record.status == "done" and not record.findings,
            "findings": [
                {
                    "kind": f.kind.value,
                    "label": RISK_LABELS[f.kind],
                    "device_vendor": f.device.vendor if f.device else None,
                    "device_model": f.device.model if f.device else None,
                    "evidence": f.evidence,
                    "measure": f.recommended_measure,
                }
                for f in record.findings
            ],
            "redo_allowed": record.status == "done",
            "scope_note": "This page is only available from the browser session that requested the diagnosis.",
        }

    def redo(
        self,
        result_token: str,
        session_scope: str | None = None,
        target_override: str | None = None,
    ) -> int:
        parent = self.store.by_token(result_token)
        if parent is None or (session_scope is not None and parent.session_scope != session_scope):
            raise AccessDenied()
        if parent.status != "done":
            raise RedoError(f"parent record is {parent.status}; re-diagnosis needs a completed one")
        receipt = self.submit_request(
            email=parent.user_email,
            location=parent.location,
            referral=parent.referral,
            verification_ok=True,  # the bound session already passed verification
            target=target_override or parent.target_address,
            session_scope=parent.session_scope,
            parent_record=parent.record_id,
        )
        return receipt.record_id

    def request_support(self, result_token: str, session_scope: str, message: str) -> int:
        record = self.store.by_token(result_token)
        if record is None or record.session_scope != session_scope:
            raise AccessDenied()
        return self.store.store_support_request(record.record_id, message, self.clock.now())

    def store_questionnaire(self, payload: str, token: str | None = None) -> int:
        return self.store.store_questionnaire(payload, self.clock.now(), token)

    # -- remediation accounting ----------------------------------------------

    def environment_chains(self, email: str) -> dict[EnvironmentKey, list[DiagnosisRecord]]:
        from .remediation import group_by_environment

        records = [r for r in self.store.records_for_user(email) if r.status == "done"]
        return group_by_environment(records, self.asn_table)

    def outcomes_for_user(self, email: str, view: DecisionView = DecisionView.EARLIEST):
        return {
            key: classify_remediation([r.chain_view() for r in chain], view)
            for key, chain in self.environment_chains(email).items()
        }

    def delete_user(self, email: str) -> int:
        removed = self.store.delete_user(email)
        self.event_log.purge_email(email)
        return removed
