"""Risk taxonomy, the vulnerability database, and finding assessment.

Ten risk kinds, fixed order. Serialized names are stable because the event
log and the analytics CLI key on them. Malware and Telnet findings are
identification-independent; every other kind needs an identified device.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

from .config import default_template_dir
from .scanner import DeviceIdentification, ProbeResponse, TelnetStatus
from .sightings import InfectionVerdict


class RiskKind(Enum):
    MALWARE_INFECTION = "MalwareInfection"
    RISKY_PROTOCOL_TELNET = "RiskyProtocolTelnet"
    END_OF_SUPPORT = "EndOfSupport"
    ADMIN_PASSWORD_NOT_SET = "AdminPasswordNotSet"
    KNOWN_VULNERABILITY = "KnownVulnerability"
    OLD_FIRMWARE = "OldFirmware"
    KNOWN_DEFAULT_ID = "KnownDefaultId"
    KNOWN_DEFAULT_CREDENTIAL = "KnownDefaultCredential"
    WEAK_DEFAULT_WIFI_PASSWORD = "WeakDefaultWifiPassword"
    NO_AUTHENTICATION = "NoAuthentication"


TAXONOMY_ORDER: tuple[RiskKind, ...] = tuple(RiskKind)

RISK_LABELS: dict[RiskKind, str] = {
    RiskKind.MALWARE_INFECTION: "Malware infection",
    RiskKind.RISKY_PROTOCOL_TELNET: "Risky protocol (Telnet)",
    RiskKind.END_OF_SUPPORT: "End of support",
    RiskKind.ADMIN_PASSWORD_NOT_SET: "Admin password not set",
    RiskKind.KNOWN_VULNERABILITY: "Known vulnerability",
    RiskKind.OLD_FIRMWARE: "Old firmware",
    RiskKind.KNOWN_DEFAULT_ID: "Known default ID",
    RiskKind.KNOWN_DEFAULT_CREDENTIAL: "Known default credentials",
    RiskKind.WEAK_DEFAULT_WIFI_PASSWORD: "Weak default Wi-Fi password",
    RiskKind.NO_AUTHENTICATION: "No authentication",
}

# Detectable without identifying the device model.
DEVICE_INDEPENDENT_KINDS = frozenset(
    {RiskKind.MALWARE_INFECTION, RiskKind.RISKY_PROTOCOL_TELNET}
)

# Detection keys on published factory defaults, not the configured secret, so
# these stay visible after a password change; remediation accounting treats
# them specially.
DEFAULT_CREDENTIAL_FAMILY = frozenset(
    {
        RiskKind.KNOWN_DEFAULT_ID,
        RiskKind.KNOWN_DEFAULT_CREDENTIAL,
        RiskKind.WEAK_DEFAULT_WIFI_PASSWORD,
    }
)

VULN_DB_KINDS = frozenset(
    {
        RiskKind.KNOWN_VULNERABILITY,
        RiskKind.OLD_FIRMWARE,
        RiskKind.ADMIN_PASSWORD_NOT_SET,
        RiskKind.NO_AUTHENTICATION,
    }
)

_TEMPLATE_FILES = {
    RiskKind.MALWARE_INFECTION: "malware_infection.txt",
    RiskKind.RISKY_PROTOCOL_TELNET: "risky_protocol_telnet.txt",
    RiskKind.END_OF_SUPPORT: "end_of_support.txt",
    RiskKind.ADMIN_PASSWORD_NOT_SET: "admin_password_not_set.txt",
    RiskKind.KNOWN_VULNERABILITY: "known_vulnerability.txt",
    RiskKind.OLD_FIRMWARE: "old_firmware.txt",
    RiskKind.KNOWN_DEFAULT_ID: "known_default_id.txt",
    RiskKind.KNOWN_DEFAULT_CREDENTIAL: "known_default_credential.txt",
    RiskKind.WEAK_DEFAULT_WIFI_PASSWORD: "weak_default_wifi_password.txt",
    RiskKind.NO_AUTHENTICATION: "no_authentication.txt",
}


class VulnDbError(ValueError):
    """Vulnerability database fails validation."""


class TemplateError(ValueError):
    """Measure template missing or malformed; raised at load time, fail fast."""


@dataclass(frozen=True)
class VulnerabilityRecord:
    vendor: str
    model: str
    kind: RiskKind
    advisory_id: str
    fixed_firmware: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in VULN_DB_KINDS:
            raise VulnDbError(f"kind {self.kind.value} cannot come from the vulnerability db")


@dataclass(frozen=True)
class VulnerabilityDatabase:
    records: tuple[VulnerabilityRecord, ...] = ()

    def __post_init__(self) -> None:
        seen: set[tuple[str, str, RiskKind, str]] = set()
        for rec in self.records:
            key = (rec.vendor, rec.model, rec.kind, rec.advisory_id)
            if key in seen:
                raise VulnDbError(f"duplicate advisory {key!r}")
            seen.add(key)

    def rows_for(self, vendor: str, model: str) -> list[VulnerabilityRecord]:
        return [r for r in self.records if r.vendor == vendor and r.model == model]

    @classmethod
    def loads(cls, text: str) -> "VulnerabilityDatabase":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise VulnDbError(f"vulnerability db is not valid JSON: {exc}") from exc
        if not isinstance(data, list):
            raise VulnDbError("vulnerability db must be a JSON array")
        records = []
        for obj in data:
            try:
                records.append(
                    VulnerabilityRecord(
                        vendor=obj["vendor"],
                        model=obj["model"],
                        kind=RiskKind(obj["kind"]),
                        advisory_id=obj["advisory_id"],
                        fixed_firmware=obj.get("fixed_firmware"),
                    )
                )
            except KeyError as exc:
                raise VulnDbError(f"advisory missing key {exc.args[0]!r}") from exc
            except ValueError as exc:
                raise VulnDbError(str(exc)) from exc
        return cls(tuple(records))

    @classmethod
    def load(cls, path: Path | str) -> "VulnerabilityDatabase":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class RiskFinding:
    kind: RiskKind
    evidence: str
    recommended_measure: str
    device: DeviceIdentification | None = None

    def __post_init__(self) -> None:
        if self.kind not in DEVICE_INDEPENDENT_KINDS and self.device is None:
            raise ValueError(f"{self.kind.value} finding requires an identified device")


class MeasureCatalog:
    """Loads the canonical recommended-measure texts, one file per risk kind.

    A line containing {vendor}/{model} is the device header: it is filled in
    when a device is known and dropped otherwise. Everything else is rendered
    byte for byte.
    """

    def __init__(self, template_dir: Path | None = None):
        directory = (template_dir or default_template_dir()) / "measures"
        self._templates: dict[RiskKind, str] = {}
        for kind, filename in _TEMPLATE_FILES.items():
            path = directory / filename
            if not path.is_file():
                raise TemplateError(f"missing measure template {path}")
            text = path.read_text(encoding="utf-8")
            if not text.strip():
                raise TemplateError(f"empty measure template {path}")
            self._templates[kind] = text

    def template(self, kind: RiskKind) -> str:
        return self._templates[kind]

    def render(self, kind: RiskKind, device: DeviceIdentification | None) -> str:
        template = self._templates[kind]
        lines = []
        for line in template.splitlines(keepends=True):
            if "{vendor}" in line or "{model}" in line:
                if device is None:
                    continue
                line = line.replace("{vendor}", device.vendor).replace("{model}", device.model)
            lines.append(line)
        return "".join(lines)


@lru_cache(maxsize=4)
def _default_catalog(template_dir: str | None) -> MeasureCatalog:
    return MeasureCatalog(Path(template_dir) if template_dir else None)


def recommendation_text(
    kind: RiskKind,
    device: DeviceIdentification | None = None,
    template_dir: Path | None = None,
) -> str:
    return _default_catalog(str(template_dir) if template_dir else None).render(kind, device)


def _version_key(version: str) -> tuple:
    parts = []
    for piece in version.replace("-", ".").split("."):
        parts.append((0, int(piece)) if piece.isdigit() else (1, piece))
    return tuple(parts)


def firmware_older_than(current: str, fixed: str) -> bool:
    return _version_key(current) < _version_key(fixed)


def assess(
    identification: DeviceIdentification | None,
    responses: list[ProbeResponse],
    telnet: TelnetStatus,
    infection: InfectionVerdict,
    vuln_db: VulnerabilityDatabase,
    measures: MeasureCatalog | None = None,
) -> list[RiskFinding]:
    """Derive at most one finding per risk kind, in fixed taxonomy order.

    Without an identification the only possible findings are malware
    infection and exposed Telnet.
    """
    catalog = measures or _default_catalog(None)
    found: dict[RiskKind, tuple[str, DeviceIdentification | None]] = {}

    if infection.infected:
        found[RiskKind.MALWARE_INFECTION] = (
            f"{len(infection.evidence)} sighting(s) of this address in sensor data "
            f"since {infection.window_start:%Y-%m-%d %H:%M}Z",
            None,
        )
    if telnet is TelnetStatus.OPEN:
        found[RiskKind.RISKY_PROTOCOL_TELNET] = ("Telnet port accepts connections", None)

    if identification is not None:
        flags = identification.flags
        if flags.end_of_support:
            found[RiskKind.END_OF_SUPPORT] = ("model is past vendor support", identification)
        if flags.default_id_known:
            found[RiskKind.KNOWN_DEFAULT_ID] = (
                "model ships with a published factory ID",
                identification,
            )
        if flags.default_credential_known:
            found[RiskKind.KNOWN_DEFAULT_CREDENTIAL] = (
                "model ships with a published factory ID and password",
                identification,
            )
        if flags.weak_default_wifi_password:
            found[RiskKind.WEAK_DEFAULT_WIFI_PASSWORD] = (
                "model ships with a guessable factory Wi-Fi password",
                identification,
            )
        for row in vuln_db.rows_for(identification.vendor, identification.model):
            if row.kind is RiskKind.OLD_FIRMWARE:
                # Conservative: without an extracted firmware version we do
                # not claim the firmware is old.
                if (
                    identification.firmware_version is not None
                    and row.fixed_firmware is not None
                    and firmware_older_than(identification.firmware_version, row.fixed_firmware)
                ):
                    found.setdefault(
                        RiskKind.OLD_FIRMWARE,
                        (
                            f"firmware {identification.firmware_version} predates "
                            f"{row.fixed_firmware} ({row.advisory_id})",
                            identification,
                        ),
                    )
            elif row.kind is RiskKind.KNOWN_VULNERABILITY:
                found.setdefault(
                    RiskKind.KNOWN_VULNERABILITY,
                    (f"known vulnerability {row.advisory_id}", identification),
                )
            elif row.kind is RiskKind.ADMIN_PASSWORD_NOT_SET:
                found.setdefault(
                    RiskKind.ADMIN_PASSWORD_NOT_SET,
                    (f"model operates without an initial password ({row.advisory_id})", identification),
                )
            elif row.kind is RiskKind.NO_AUTHENTICATION:
                found.setdefault(
                    RiskKind.NO_AUTHENTICATION,
                    (f"model exposes controls without authentication ({row.advisory_id})", identification),
                )

    return [
        RiskFinding(
            kind=kind,
            evidence=found[kind][0],
            recommended_measure=catalog.render(kind, found[kind][1]),
            device=found[kind][1],
        )
        for kind in TAXONOMY_ORDER
        if kind in found
    ]
