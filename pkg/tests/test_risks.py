from __future__ import annotations

import datetime as dt

import pytest

from iot_clinic.risks import (
    DEFAULT_CREDENTIAL_FAMILY,
    DEVICE_INDEPENDENT_KINDS,
    RISK_LABELS,
    RiskFinding,
    RiskKind,
    TAXONOMY_ORDER,
    TemplateError,
    VulnDbError,
    VulnerabilityDatabase,
    VulnerabilityRecord,
    assess,
    firmware_older_than,
    recommendation_text,
)
from iot_clinic.scanner import DeviceIdentification, RiskFlags, TelnetStatus
from iot_clinic.sightings import InfectionVerdict, Sighting

from .conftest import REPO, T0


def clean_verdict() -> InfectionVerdict:
    return InfectionVerdict(
        infected=False, window_start=T0 - dt.timedelta(hours=24), window_end=T0
    )


def infected_verdict(n: int = 1) -> InfectionVerdict:
    evidence = tuple(
        Sighting("198.51.100.9", T0 - dt.timedelta(hours=i + 1), "darknet") for i in range(n)
    )
    return InfectionVerdict(
        infected=True,
        window_start=T0 - dt.timedelta(hours=24),
        window_end=T0,
        evidence=evidence,
    )


def ident(
    vendor: str = "HarborStor",
    model: str = "HS-220",
    firmware: str | None = None,
    **flags,
) -> DeviceIdentification:
    return DeviceIdentification(
        vendor=vendor,
        series="HS",
        model=model,
        matched_signature=f"sig-{model.lower()}",
        specificity=2,
        firmware_version=firmware,
        flags=RiskFlags(**flags),
    )


def test_taxonomy_has_exactly_ten_stable_kinds():
    assert len(TAXONOMY_ORDER) == 10
    assert [k.value for k in TAXONOMY_ORDER] == [
        "MalwareInfection",
        "RiskyProtocolTelnet",
        "EndOfSupport",
        "AdminPasswordNotSet",
        "KnownVulnerability",
        "OldFirmware",
        "KnownDefaultId",
        "KnownDefaultCredential",
        "WeakDefaultWifiPassword",
        "NoAuthentication",
    ]
    assert set(RISK_LABELS) == set(TAXONOMY_ORDER)


def test_every_kind_has_a_nonempty_measure(measures):
    for kind in TAXONOMY_ORDER:
        body = measures.render(kind, None)
        assert body.strip(), kind
        body_with_device = measures.render(kind, ident())
        assert body_with_device.strip(), kind
        assert "{vendor}" not in body_with_device and "{model}" not in body_with_device


def test_measure_anchor_lines(measures):
    malware = measures.render(RiskKind.MALWARE_INFECTION, None)
    assert malware.startswith("Your device (router, etc.) is communicating suspiciously")
    assert "wait at least 24 hours before re-diagnosis" in malware

    eos = measures.render(RiskKind.END_OF_SUPPORT, ident())
    assert "Please consider replacing it with a new device." in eos

    cred = measures.render(RiskKind.KNOWN_DEFAULT_CREDENTIAL, ident())
    assert "we do not inspect the IDs and passwords actually set" in cred


def test_render_matches_template_bytes(measures):
    """Rendering is the template byte for byte, modulo the device header line."""
    device = ident(vendor="Owlsight", model="OC-30")
    for kind in TAXONOMY_ORDER:
        template = measures.template(kind)
        rendered = measures.render(kind, device)
        expected = template.replace("{vendor}", device.vendor).replace("{model}", device.model)
        assert rendered == expected
        # Without a device the header line disappears and the rest is untouched.
        headerless = "".join(
            line
            for line in template.splitlines(keepends=True)
            if "{vendor}" not in line and "{model}" not in line
        )
        assert measures.render(kind, None) == headerless


def test_recommendation_text_uses_repo_templates():
    text = recommendation_text(RiskKind.END_OF_SUPPORT, ident(), template_dir=REPO / "templates")
    assert text.startswith("Affected device: HarborStor HS-220\n")


def test_missing_template_fails_fast(tmp_path):
    from iot_clinic.risks import MeasureCatalog

    with pytest.raises(TemplateError, match="missing measure template"):
        MeasureCatalog(tmp_path)


def test_telnet_only_finding_without_identification(vuln_db, measures):
    findings = assess(None, [], TelnetStatus.OPEN, clean_verdict(), vuln_db, measures)
    assert [f.kind for f in findings] == [RiskKind.RISKY_PROTOCOL_TELNET]
    assert findings[0].device is None


def test_clean_scan_produces_no_findings(vuln_db, measures):
    assert assess(None, [], TelnetStatus.CLOSED, clean_verdict(), vuln_db, measures) == []


def test_flag_findings_in_taxonomy_order(vuln_db, measures):
    nas = ident(end_of_support=True, default_credential_known=True)
    findings = assess(nas, [], TelnetStatus.CLOSED, clean_verdict(), vuln_db, measures)
    assert [f.kind for f in findings] == [
        RiskKind.END_OF_SUPPORT,
        RiskKind.KNOWN_DEFAULT_CREDENTIAL,
    ]
    assert all(f.device == nas for f in findings)


def test_malware_finding_is_device_independent(vuln_db, measures):
    findings = assess(None, [], TelnetStatus.CLOSED, infected_verdict(2), vuln_db, measures)
    assert [f.kind for f in findings] == [RiskKind.MALWARE_INFECTION]
    assert findings[0].device is None
    assert "2 sighting(s)" in findings[0].evidence


def test_without_identification_only_device_independent_kinds(vuln_db, measures):
    findings = assess(None, [], TelnetStatus.OPEN, infected_verdict(), vuln_db, measures)
    assert {f.kind for f in findings} <= DEVICE_INDEPENDENT_KINDS
    assert [f.kind for f in findings] == [
        RiskKind.MALWARE_INFECTION,
        RiskKind.RISKY_PROTOCOL_TELNET,
    ]


def test_vuln_db_rows_drive_findings(vuln_db, measures):
    fg100 = ident(vendor="Bastion Labs", model="FG-100")
    findings = assess(fg100, [], TelnetStatus.CLOSED, clean_verdict(), vuln_db, measures)
    assert [f.kind for f in findings] == [
        RiskKind.ADMIN_PASSWORD_NOT_SET,
        RiskKind.KNOWN_VULNERABILITY,
    ]


def test_old_firmware_requires_extracted_version(vuln_db, measures):
    with_version = ident(vendor="HarborStor", model="HS-453", firmware="4.2.1")
    findings = assess(with_version, [], TelnetStatus.CLOSED, clean_verdict(), vuln_db, measures)
    assert [f.kind for f in findings] == [RiskKind.OLD_FIRMWARE]

    # No extracted version: stay silent even though an advisory exists.
    without_version = ident(vendor="HarborStor", model="HS-453")
    assert assess(without_version, [], TelnetStatus.CLOSED, clean_verdict(), vuln_db, measures) == []

    # Already fixed firmware: no finding either.
    fixed = ident(vendor="HarborStor", model="HS-453", firmware="4.3.0")
    assert assess(fixed, [], TelnetStatus.CLOSED, clean_verdict(), vuln_db, measures) == []


def test_at_most_one_finding_per_kind(measures):
    db = VulnerabilityDatabase(
        (
            VulnerabilityRecord("V", "M", RiskKind.KNOWN_VULNERABILITY, "ADV-1"),
            VulnerabilityRecord("V", "M", RiskKind.KNOWN_VULNERABILITY, "ADV-2"),
        )
    )
    device = ident(vendor="V", model="M")
    findings = assess(device, [], TelnetStatus.CLOSED, clean_verdict(), db, measures)
    assert len(findings) == 1
    assert findings[0].kind is RiskKind.KNOWN_VULNERABILITY


def test_finding_requires_device_for_identification_kinds():
    with pytest.raises(ValueError, match="requires an identified device"):
        RiskFinding(kind=RiskKind.END_OF_SUPPORT, evidence="x", recommended_measure="y", device=None)
    # Malware and Telnet findings legitimately carry no device.
    for kind in DEVICE_INDEPENDENT_KINDS:
        RiskFinding(kind=kind, evidence="x", recommended_measure="y", device=None)


def test_default_family_members():
    assert DEFAULT_CREDENTIAL_FAMILY == {
        RiskKind.KNOWN_DEFAULT_ID,
        RiskKind.KNOWN_DEFAULT_CREDENTIAL,
        RiskKind.WEAK_DEFAULT_WIFI_PASSWORD,
    }


def test_vuln_db_rejects_wrong_kind():
    with pytest.raises(VulnDbError):
        VulnerabilityRecord("V", "M", RiskKind.END_OF_SUPPORT, "ADV-9")


def test_vuln_db_rejects_duplicate_advisory():
    row = VulnerabilityRecord("V", "M", RiskKind.KNOWN_VULNERABILITY, "ADV-1")
    with pytest.raises(VulnDbError, match="duplicate"):
        VulnerabilityDatabase((row, row))


@pytest.mark.parametrize(
    "current,fixed,older",
    [
        ("1.0.0", "1.0.1", True),
        ("1.0.1", "1.0.0", False),
        ("4.2.1", "4.3.0", True),
        ("4.10", "4.9", False),
        ("2.0", "2.0", False),
    ],
)
def test_firmware_version_ordering(current, fixed, older):
    assert firmware_older_than(current, fixed) is older
