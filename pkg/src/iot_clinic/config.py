"""Dataclass configuration for the scanner, sighting store, and notifier."""

from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass, field
from pathlib import Path


def repo_root() -> Path:
    """Directory holding templates/ and fixtures/.

    Resolution order: IOT_CLINIC_HOME, the checkout root (src layout), then cwd.
    """
    env = os.environ.get("IOT_CLINIC_HOME")
    if env:
        return Path(env)
    candidate = Path(__file__).resolve().parents[2]
    if (candidate / "templates").is_dir():
        return candidate
    return Path.cwd()


def default_template_dir() -> Path:
    return repo_root() / "templates"


def default_fixture_dir() -> Path:
    return repo_root() / "fixtures"


@dataclass(frozen=True)
class ScanConfig:
    """Probe targets non-intrusively: one benign request per port, bounded reads."""

    ports: tuple[int, ...] = (23, 80, 8080, 443)
    telnet_port: int = 23
    web_ports: frozenset[int] = frozenset({80, 8080, 443, 8000, 8443})
    tls_ports: frozenset[int] = frozenset({443, 8443})
    per_port_timeout: dt.timedelta = dt.timedelta(seconds=3)
    banner_cap: int = 4 * 1024
    body_cap: int = 64 * 1024

    def port_class(self, port: int) -> str:
        if port == self.telnet_port:
            return "telnet"
        if port in self.web_ports:
            return "web_ui"
        return "other"


@dataclass(frozen=True)
class SightingConfig:
    # 24 h is a provisional default; keep it tunable.
    window: dt.timedelta = dt.timedelta(hours=24)
    clock_skew: dt.timedelta = dt.timedelta(minutes=5)
    retention_days: int | None = None


@dataclass(frozen=True)
class ReminderPolicy:
    delay: dt.timedelta = dt.timedelta(days=3)
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.delay <= dt.timedelta(0):
            raise ValueError("reminder delay must be positive")


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path = field(default_factory=lambda: Path("data"))
    template_dir: Path = field(default_factory=default_template_dir)
    signature_db: Path = field(default_factory=lambda: default_fixture_dir() / "signatures.json")
    vuln_db: Path = field(default_factory=lambda: default_fixture_dir() / "vulnerabilities.json")
    asn_table: Path = field(default_factory=lambda: default_fixture_dir() / "asn_table.csv")
    result_url_base: str = "http://localhost:8000/result"
    scan: ScanConfig = field(default_factory=ScanConfig)
    sightings: SightingConfig = field(default_factory=SightingConfig)
    reminder: ReminderPolicy = field(default_factory=ReminderPolicy)
    # None resolves to a spool directory inside data_dir.
    mail_transport: str | None = None
    workers: int = 4
    max_pending_per_target: int = 1
    throttle_retry_after: dt.timedelta = dt.timedelta(seconds=60)

    @property
    def db_path(self) -> Path:
        return self.data_dir / "clinic.db"

    @property
    def event_log_path(self) -> Path:
        return self.data_dir / "events.jsonl"

    @property
    def resolved_mail_transport(self) -> str:
        return self.mail_transport or f"spool:{self.data_dir / 'spool'}"

    @classmethod
    def from_file(cls, path: Path | str, data_dir: Path | None = None) -> "ServiceConfig":
        """Load the JSON deployment config (reminder.delay_days, mail.transport, ...)."""
        import json

        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        kwargs: dict = {}
        if data_dir is not None:
            kwargs["data_dir"] = data_dir
        elif "data_dir" in raw:
            kwargs["data_dir"] = Path(raw["data_dir"])
        for key in ("result_url_base", "workers", "max_pending_per_target"):
            if key in raw:
                kwargs[key] = raw[key]
        for key in ("template_dir", "signature_db", "vuln_db", "asn_table"):
            if key in raw:
                kwargs[key] = Path(raw[key])
        reminder = raw.get("reminder", {})
        if reminder:
            kwargs["reminder"] = ReminderPolicy(
                delay=dt.timedelta(days=reminder.get("delay_days", 3)),
                enabled=reminder.get("enabled", True),
            )
        mail = raw.get("mail", {})
        if "transport" in mail:
            kwargs["mail_transport"] = mail["transport"]
        sightings = raw.get("sightings", {})
        if sightings:
            kwargs["sightings"] = SightingConfig(
                window=dt.timedelta(hours=sightings.get("window_hours", 24)),
                retention_days=sightings.get("retention_days"),
            )
        scan = raw.get("scan", {})
        if scan:
            kwargs["scan"] = ScanConfig(
                ports=tuple(scan.get("ports", ScanConfig.ports)),
                per_port_timeout=dt.timedelta(milliseconds=scan.get("timeout_ms", 3000)),
            )
        return cls(**kwargs)
