from __future__ import annotations

import datetime as dt
from pathlib import Path

import pytest

from iot_clinic.clock import ManualClock
from iot_clinic.config import ReminderPolicy, ScanConfig, ServiceConfig, SightingConfig
from iot_clinic.core import DiagnosisService, RecordStore
from iot_clinic.notify import EmailTemplates, Notifier, SpoolTransport
from iot_clinic.remediation import AsnTable
from iot_clinic.risks import MeasureCatalog, VulnerabilityDatabase
from iot_clinic.sightings import SightingStore
from iot_clinic.signatures import SignatureDatabase

REPO = Path(__file__).resolve().parents[1]
FIXTURES = REPO / "fixtures"

T0 = dt.datetime(2023, 5, 1, 12, 0, 0, tzinfo=dt.timezone.utc)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): release acceptance criterion, reported in the summary"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when == "call":
        report.acceptance_name = marker.args[0]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            name = getattr(report, "acceptance_name", None)
            if name:
                lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}")


@pytest.fixture()
def clock() -> ManualClock:
    return ManualClock(T0)


@pytest.fixture(scope="session")
def signature_db() -> SignatureDatabase:
    return SignatureDatabase.load(FIXTURES / "signatures.json")


@pytest.fixture(scope="session")
def vuln_db() -> VulnerabilityDatabase:
    return VulnerabilityDatabase.load(FIXTURES / "vulnerabilities.json")


@pytest.fixture(scope="session")
def asn_table() -> AsnTable:
    return AsnTable.load(FIXTURES / "asn_table.csv")


@pytest.fixture(scope="session")
def measures() -> MeasureCatalog:
    return MeasureCatalog(REPO / "templates")


@pytest.fixture()
def sighting_store(clock: ManualClock) -> SightingStore:
    return SightingStore(":memory:", SightingConfig(), clock=clock)


def make_service(
    tmp_path: Path,
    clock: ManualClock,
    scan: ScanConfig | None = None,
    reminder: ReminderPolicy | None = None,
) -> DiagnosisService:
    """A fully wired service on temp storage with a spool transport."""
    config = ServiceConfig(
        data_dir=tmp_path / "data",
        template_dir=REPO / "templates",
        signature_db=FIXTURES / "signatures.json",
        vuln_db=FIXTURES / "vulnerabilities.json",
        asn_table=FIXTURES / "asn_table.csv",
        scan=scan or ScanConfig(per_port_timeout=dt.timedelta(seconds=2)),
        reminder=reminder or ReminderPolicy(),
        mail_transport=f"spool:{tmp_path / 'spool'}",
    )
    config.data_dir.mkdir(parents=True, exist_ok=True)
    store = RecordStore(config.db_path)
    sightings = SightingStore(config.db_path, config.sightings, clock=clock)
    service = DiagnosisService(
        config,
        store=store,
        sighting_store=sightings,
        clock=clock,
    )
    transport = SpoolTransport(tmp_path / "spool")
    service.notifier = Notifier(
        store,
        transport,
        templates=EmailTemplates(REPO / "templates"),
        policy=config.reminder,
        clock=clock,
        result_url_base=config.result_url_base,
    )
    return service


@pytest.fixture()
def service(tmp_path: Path, clock: ManualClock) -> DiagnosisService:
    return make_service(tmp_path, clock)


@pytest.fixture()
def spool(service: DiagnosisService) -> SpoolTransport:
    return service.notifier.transport
