"""Email rendering and dispatch: completion notices, reminders, campaigns.

Due reminders are derived from persisted record state (completion time plus
the policy delay, and the absence of a child record), never from in-memory
timers, so a restart loses nothing. The sent-marker row in the outbox makes
reminder dispatch idempotent.
"""

from __future__ import annotations

import datetime as dt
import logging
import re
import smtplib
import threading
from dataclasses import dataclass
from email.message import EmailMessage
from pathlib import Path
from typing import Iterable, Protocol

from .clock import Clock, SystemClock
from .config import ReminderPolicy, default_template_dir
from .core import DiagnosisRecord, RecordStore

log = logging.getLogger("iot_clinic.notify")

EMAIL_KINDS = ("completion", "reminder", "campaign")

_PLACEHOLDER_RE = re.compile(r"\{[a-z_]+\}")


class MailTemplateError(ValueError):
    """Template missing, empty, or missing a required placeholder. Fail at startup."""


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class OutboundEmail:
    to: str
    subject: str
    body: str
    kind: str
    related_record: int | None = None
    scheduled_for: dt.datetime | None = None

    def __post_init__(self) -> None:
        if self.kind not in EMAIL_KINDS:
            raise ValueError(f"unknown email kind {self.kind!r}")


class MailTransport(Protocol):
    def deliver(self, email: OutboundEmail) -> None: ...


class SpoolTransport:
    """Writes each message to a directory; the test- and audit-friendly sink.

    File format: To/Subject/Kind/Record header lines, a blank line, then the
    body byte for byte.
    """

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._seq = len(list(self.directory.glob("*.msg")))

    def deliver(self, email: OutboundEmail) -> None:
        with self._lock:
            self._seq += 1
            path = self.directory / f"{self._seq:06d}-{email.kind}.msg"
        path.write_text(
            f"To: {email.to}\nSubject: {email.subject}\nKind: {email.kind}\n"
            f"Record: {email.related_record if email.related_record is not None else '-'}\n\n"
            f"{email.body}",
            encoding="utf-8",
        )

    def messages(self) -> list[dict]:
        parsed = []
        for path in sorted(self.directory.glob("*.msg")):
            head, _, body = path.read_text(encoding="utf-8").partition("\n\n")
            fields = dict(line.split(": ", 1) for line in head.splitlines())
            fields["body"] = body
            parsed.append(fields)
        return parsed


class SmtpTransport:
    """Plain mail submission; deployment concern, the acceptance suite uses the spool."""

    def __init__(self, host: str, port: int = 587, sender: str = "clinic@localhost"):
        self.host = host
        self.port = port
        self.sender = sender

    def deliver(self, email: OutboundEmail) -> None:
        message = EmailMessage()
        message["From"] = self.sender
        message["To"] = email.to
        message["Subject"] = email.subject
        message.set_content(email.body)
        try:
            with smtplib.SMTP(self.host, self.port, timeout=30) as smtp:
                smtp.send_message(message)
        except (OSError, smtplib.SMTPException) as exc:
            raise TransportError(f"delivery to {email.to} failed: {exc}") from exc


def transport_from_spec(spec: str) -> MailTransport:
    """Parse the mail.transport config value: spool:<dir> or smtp://host[:port]."""
    if spec.startswith("spool:"):
        return SpoolTransport(spec[len("spool:"):])
    if spec.startswith("smtp://"):
        rest = spec[len("smtp://"):]
        host, _, port = rest.partition(":")
        return SmtpTransport(host, int(port) if port else 587)
    raise ValueError(f"unknown mail transport {spec!r}")


class EmailTemplates:
    """Loads and validates the completion/reminder/campaign templates."""

    REQUIRED = {
        "completion": ("{date}", "{link}"),
        "reminder": ("{link}",),
        "campaign": ("{link}",),
    }

    def __init__(self, template_dir: Path | None = None):
        directory = (template_dir or default_template_dir()) / "email"
        self._templates: dict[str, str] = {}
        for kind in EMAIL_KINDS:
            path = directory / f"{kind}.txt"
            if not path.is_file():
                raise MailTemplateError(f"missing email template {path}")
            text = path.read_text(encoding="utf-8")
            for placeholder in self.REQUIRED[kind]:
                if placeholder not in text:
                    raise MailTemplateError(f"{path} lacks required placeholder {placeholder}")
            self._templates[kind] = text
        if "unsubscribe" not in self._templates["campaign"].lower():
            raise MailTemplateError("campaign template must explain how to unsubscribe")

    def render(self, kind: str, substitutions: dict[str, str]) -> str:
        body = self._templates[kind]
        for key, value in substitutions.items():
            body = body.replace("{" + key + "}", value)
        leftover = _PLACEHOLDER_RE.search(body)
        if leftover:
            raise MailTemplateError(f"unreplaced placeholder {leftover.group(0)} in {kind} template")
        return body

    def raw(self, kind: str) -> str:
        return self._templates[kind]


@dataclass(frozen=True)
class ReminderSchedule:
    record_id: int
    due_at: dt.datetime


class Notifier:
    def __init__(
        self,
        store: RecordStore,
        transport: MailTransport,
        *,
        templates: EmailTemplates | None = None,
        policy: ReminderPolicy | None = None,
        clock: Clock | None = None,
        result_url_base: str = "http://localhost:8000/result",
        top_url: str = "http://localhost:8000/",
    ):
        self.store = store
        self.transport = transport
        self.templates = templates or EmailTemplates()
        self.policy = policy or ReminderPolicy()
        self.clock = clock or SystemClock()
        self.result_url_base = result_url_base.rstrip("/")
        self.top_url = top_url

    def result_link(self, record: DiagnosisRecord) -> str:
        return f"{self.result_url_base}/{record.result_token}"

    # -- completion -----------------------------------------------------------

    def render_completion_email(self, record: DiagnosisRecord) -> OutboundEmail:
        if record.status != "done" or record.completed_at is None:
            raise ValueError("completion email needs a completed record")
        body = self.templates.render(
            "completion",
            {
                "date": record.completed_at.strftime("%Y/%m/%d %H:%M"),
                "link": self.result_link(record),
            },
        )
        return OutboundEmail(
            to=record.user_email,
            subject="IoT Clinic: your diagnosis is complete",
            body=body,
            kind="completion",
            related_record=record.record_id,
        )

    def send_completion(self, record: DiagnosisRecord) -> OutboundEmail | None:
        if self.store.is_suppressed(record.user_email):
            log.info("suppressed completion email for record %s", record.record_id)
            return None
        email = self.render_completion_email(record)
        self.transport.deliver(email)
        self.store.record_email(
            kind=email.kind,
            to_email=email.to,
            subject=email.subject,
            body=email.body,
            related_record=email.related_record,
            scheduled_for=None,
            sent_at=self.clock.now(),
        )
        return email

    # -- reminders --------------------------------------------------------------

    def schedule_reminder(self, record: DiagnosisRecord, policy: ReminderPolicy | None = None) -> ReminderSchedule | None:
        """The schedule is pure derivation; nothing has to be stored to arm it."""
        policy = policy or self.policy
        if not policy.enabled:
            return None
        if record.status != "done" or record.completed_at is None:
            raise ValueError("only completed records get reminders")
        return ReminderSchedule(record_id=record.record_id, due_at=record.completed_at + policy.delay)

    def due_reminders(self, now: dt.datetime | None = None) -> list[DiagnosisRecord]:
        if not self.policy.enabled:
            return []
        now = now or self.clock.now()
        due = []
        for record in self.store.done_records():
            schedule = self.schedule_reminder(record)
            if schedule is None or schedule.due_at > now:
                continue
            if self.store.children_of(record.record_id):
                continue  # re-diagnosis cancels the reminder
            if self.store.reminder_sent_for(record.record_id):
                continue  # at most one reminder per record
            if self.store.is_suppressed(record.user_email):
                continue
            due.append(record)
        return due

    def render_reminder(self, record: DiagnosisRecord) -> OutboundEmail:
        body = self.templates.render(
            "reminder",
            {
                "date": record.completed_at.strftime("%Y/%m/%d %H:%M") if record.completed_at else "",
                "link": self.result_link(record),
            },
        )
        return OutboundEmail(
            to=record.user_email,
            subject="IoT Clinic: reminder to re-diagnose",
            body=body,
            kind="reminder",
            related_record=record.record_id,
        )

    def process_due_reminders(self, now: dt.datetime | None = None) -> list[OutboundEmail]:
        sent = []
        for record in self.due_reminders(now):
            email = self.render_reminder(record)
            try:
                self.transport.deliver(email)
            except TransportError as exc:
                log.error("reminder for record %s not delivered: %s", record.record_id, exc)
                continue
            self.store.record_email(
                kind=email.kind,
                to_email=email.to,
                subject=email.subject,
                body=email.body,
                related_record=email.related_record,
                scheduled_for=None,
                sent_at=now or self.clock.now(),
            )
            sent.append(email)
        return sent

    # -- campaigns ---------------------------------------------------------------

    def run_campaign(self, addresses: Iterable[str], dry_run: bool = False) -> "CampaignReport":
        rendered: list[OutboundEmail] = []
        skipped: list[str] = []
        failures: list[str] = []
        body = self.templates.render("campaign", {"link": self.top_url})
        for address in dict.fromkeys(addresses):  # dedupe, keep order
            if self.store.is_suppressed(address):
                log.info("campaign: %s is unsubscribed, skipping", address)
                skipped.append(address)
                continue
            email = OutboundEmail(
                to=address,
                subject="IoT Clinic: time for a fresh diagnosis",
                body=body,
                kind="campaign",
            )
            rendered.append(email)
            if dry_run:
                continue
            try:
                self.transport.deliver(email)
            except TransportError as exc:
                log.error("campaign: delivery to %s failed: %s", address, exc)
                failures.append(address)
                continue
            self.store.record_email(
                kind=email.kind,
                to_email=email.to,
                subject=email.subject,
                body=email.body,
                related_record=None,
                scheduled_for=None,
                sent_at=self.clock.now(),
            )
        return CampaignReport(
            rendered=tuple(rendered),
            skipped_suppressed=tuple(skipped),
            failures=tuple(failures),
            sent=0 if dry_run else len(rendered) - len(failures),
        )


@dataclass(frozen=True)
class CampaignReport:
    rendered: tuple[OutboundEmail, ...]
    skipped_suppressed: tuple[str, ...]
    failures: tuple[str, ...]
    sent: int
