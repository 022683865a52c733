"""Release acceptance suite. One test per criterion; each carries its runtime
budget and tolerance inline, and the terminal summary prints one PASS/FAIL
line per criterion."""

from __future__ import annotations

import datetime as dt
import random
import time

import pytest
from click.testing import CliRunner

from iot_clinic.cli import main as cli_main
from iot_clinic.clock import ManualClock
from iot_clinic.config import ReminderPolicy
from iot_clinic.lab import (
    ScenarioQuery,
    ScenarioSighting,
    ScenarioSpec,
    generate_scenario,
    load_profiles,
    scan_config_for,
    spawn,
)
from iot_clinic.notify import EmailTemplates
from iot_clinic.remediation import ChainRecord, DecisionView, classify_remediation
from iot_clinic.risks import RiskKind, TAXONOMY_ORDER, recommendation_text
from iot_clinic.scanner import DeviceIdentification, check_telnet, identify, probe
from iot_clinic.sightings import SightingStore
from iot_clinic.core import AccessDenied

from .conftest import FIXTURES, REPO, T0, make_service
from .remediation_oracle import OracleRecord, oracle_classify

HOUR = dt.timedelta(hours=1)


@pytest.mark.acceptance("infection-window correctness vs interval oracle (1000 pairs, <5s)")
def test_infection_window_against_scenario_oracle():
    started = time.monotonic()
    rng = random.Random(0xC11)

    sightings = []
    queries = []
    addresses = [f"10.20.{i // 250}.{i % 250 + 1}" for i in range(1000)]
    for i, address in enumerate(addresses):
        if i < 6:
            # Forced boundary pairs: exactly +/-24 h and the instants beside them.
            offset = [
                dt.timedelta(hours=-24),
                dt.timedelta(hours=-24, seconds=1),
                dt.timedelta(hours=-24, seconds=-1),
                dt.timedelta(hours=24),
                dt.timedelta(0),
                dt.timedelta(seconds=-1),
            ][i]
        else:
            offset = dt.timedelta(seconds=rng.randrange(-48 * 3600, 48 * 3600))
        sightings.append(ScenarioSighting(address, offset))
        queries.append(ScenarioQuery(address, dt.timedelta(0)))

    scenario = generate_scenario(
        ScenarioSpec(sightings=tuple(sightings), queries=tuple(queries)), now=T0
    )
    store = SightingStore(":memory:", clock=ManualClock(T0 + dt.timedelta(hours=49)))
    counts = store.ingest_sightings(list(scenario.log_lines))
    assert counts.accepted == 1000 and counts.rejected == 0

    disagreements = 0
    for expected in scenario.expected:
        verdict = store.infected_within(expected.address, expected.query_time)
        if verdict.infected != expected.infected or len(verdict.evidence) != expected.evidence_count:
            disagreements += 1
    assert disagreements == 0
    assert time.monotonic() - started < 5.0


@pytest.mark.acceptance("fingerprinting corpus: zero misidentifications, <=1 request/port (<30s)")
def test_fingerprinting_corpus(signature_db):
    started = time.monotonic()
    profiles = load_profiles()
    assert len(profiles) >= 10
    seen_labels = set()
    for prof in profiles:
        with spawn(prof) as handle:
            config = scan_config_for(handle)
            responses = probe("127.0.0.1", config.ports, config.per_port_timeout, config=config)
            check_telnet("127.0.0.1", config.per_port_timeout, port=config.telnet_port)
            result = identify(responses, signature_db)
            assert result.identification is not None, f"{prof.profile_id}: unidentified"
            label = (result.identification.vendor, result.identification.model)
            expected = (prof.expected_vendor, prof.expected_model)
            assert label == expected, f"{prof.profile_id}: {label} != {expected}"
            assert label not in seen_labels, f"{prof.profile_id}: crossed label {label}"
            seen_labels.add(label)
            for port, n in handle.request_counts.items():
                assert n <= 1, f"{prof.profile_id} port {port}: {n} application requests"
    assert time.monotonic() - started < 30.0


@pytest.mark.acceptance("taxonomy completeness: 10 kinds, measures byte-match templates")
def test_taxonomy_and_measure_templates(measures):
    assert len(TAXONOMY_ORDER) == 10
    device = DeviceIdentification(
        vendor="HarborStor", series="HS", model="HS-220", matched_signature="s", specificity=2
    )
    for kind in TAXONOMY_ORDER:
        rendered = recommendation_text(kind, device, template_dir=REPO / "templates")
        template = measures.template(kind)
        assert rendered == template.replace("{vendor}", device.vendor).replace(
            "{model}", device.model
        ), kind

    malware = recommendation_text(RiskKind.MALWARE_INFECTION, None, template_dir=REPO / "templates")
    assert "communicating suspiciously" in malware
    eos = recommendation_text(RiskKind.END_OF_SUPPORT, device, template_dir=REPO / "templates")
    assert "Please consider replacing it with a new device." in eos
    cred = recommendation_text(
        RiskKind.KNOWN_DEFAULT_CREDENTIAL, device, template_dir=REPO / "templates"
    )
    assert "we do not inspect the IDs and passwords actually set" in cred


@pytest.mark.acceptance("remediation classifier equals brute-force oracle (randomized, <10s)")
def test_remediation_classifier_vs_oracle():
    started = time.monotonic()
    rng = random.Random(0x5EED)
    devices = [None, ("Aether Networks", "AR-1200"), ("HarborStor", "HS-220")]
    gaps = [1.0, 6.0, 23.999, 24.0, 24.001, 30.0, 72.0]

    def random_chain():
        length = rng.randint(1, 4)
        hours = 0.0
        chain = []
        for i in range(length):
            if i:
                hours += rng.choice(gaps)
            device = rng.choice(devices)
            pool = (
                [RiskKind.MALWARE_INFECTION, RiskKind.RISKY_PROTOCOL_TELNET]
                if device is None
                else list(RiskKind)
            )
            kinds = frozenset(k for k in pool if rng.random() < 0.4)
            chain.append(
                ChainRecord(
                    record_id=f"r{i}",
                    completed_at=T0 + dt.timedelta(hours=hours),
                    kinds=kinds,
                    device=device,
                )
            )
        return chain

    checked = 0
    for _ in range(3000):
        chain = random_chain()
        for view in DecisionView:
            expected = oracle_classify(
                [OracleRecord(r.record_id, r.completed_at, r.kinds, r.device) for r in chain],
                view.value,
            )
            actual = classify_remediation(chain, view)
            assert [
                (o.kind, o.outcome.value, o.first_detected_at, o.decided_by) for o in actual
            ] == [(o.kind, o.outcome, o.first_detected_at, o.decided_by) for o in expected]
            checked += 1

    # Directed cases: the visibility rule and the malware 24 h rule.
    device = ("Aether Networks", "AR-1200")
    visible = [
        ChainRecord("a", T0, frozenset({RiskKind.KNOWN_DEFAULT_ID}), device),
        ChainRecord("b", T0 + 5 * HOUR, frozenset(), device),
    ]
    assert classify_remediation(visible)[0].outcome.value == "Persisting"
    gone = [
        ChainRecord("a", T0, frozenset({RiskKind.KNOWN_DEFAULT_ID}), device),
        ChainRecord("b", T0 + 5 * HOUR, frozenset(), None),
    ]
    assert classify_remediation(gone)[0].outcome.value == "Remediated"
    early = [
        ChainRecord("a", T0, frozenset({RiskKind.MALWARE_INFECTION}), None),
        ChainRecord("b", T0 + 12 * HOUR, frozenset(), None),
    ]
    assert classify_remediation(early)[0].outcome.value == "Indeterminate"
    assert checked == 6000
    assert time.monotonic() - started < 10.0


@pytest.mark.acceptance("paper statistics replication: funnel 171/67/59 & 417/151/75; rates 88%/29%")
def test_paper_statistics_replication():
    runner = CliRunner()
    funnel = runner.invoke(cli_main, ["stats", "funnel", str(FIXTURES / "paper_table3.jsonl")])
    assert funnel.exit_code == 0, funnel.output
    rows = {
        parts[0]: parts[1:]
        for parts in (line.split() for line in funnel.output.splitlines()[1:])
        if parts
    }
    assert rows["malware"] == ["171", "67", "59"]
    assert rows["vul_all"] == ["417", "151", "75"]
    assert rows["vul_excluding_default_family"] == ["311", "117", "59"]

    by_risk = runner.invoke(cli_main, ["stats", "by-risk", str(FIXTURES / "paper_table3.jsonl")])
    assert by_risk.exit_code == 0, by_risk.output
    assert "Malware infection" in by_risk.output and "59/67 (88%)" in by_risk.output
    assert "Risky protocol (Telnet)" in by_risk.output and "15/51 (29%)" in by_risk.output
    assert "No authentication" in by_risk.output and "0/0" in by_risk.output


@pytest.mark.acceptance("reminder policy: one reminder at +3d (default) / +7d (configured); redo cancels")
def test_reminder_policy(tmp_path):
    from .test_core import submit
    from .test_scanner import profile

    def completed(tmp, delay_days):
        clock = ManualClock(T0)
        with spawn(profile("aether_ar3000_clean")) as handle:
            service = make_service(
                tmp, clock,
                scan=scan_config_for(handle),
                reminder=ReminderPolicy(delay=dt.timedelta(days=delay_days)),
            )
            record = service.run_diagnosis(submit(service).record_id)
        return service, record, clock

    # Default three-day policy: silent before, exactly one at the deadline.
    service, record, clock = completed(tmp_path / "d3", 3)
    clock.advance(dt.timedelta(days=3) - dt.timedelta(seconds=1))
    assert service.notifier.process_due_reminders() == []
    clock.advance(dt.timedelta(seconds=1))
    assert len(service.notifier.process_due_reminders()) == 1
    assert service.notifier.process_due_reminders() == []

    # Launch-era seven-day policy.
    service7, record7, clock7 = completed(tmp_path / "d7", 7)
    clock7.advance(dt.timedelta(days=3))
    assert service7.notifier.process_due_reminders() == []
    clock7.advance(dt.timedelta(days=4))
    assert len(service7.notifier.process_due_reminders()) == 1

    # Redo before the deadline: zero reminders ever.
    service_r, record_r, clock_r = completed(tmp_path / "redo", 3)
    clock_r.advance(dt.timedelta(days=1))
    service_r.redo(record_r.result_token)
    clock_r.advance(dt.timedelta(days=10))
    assert service_r.notifier.process_due_reminders() == []


@pytest.mark.acceptance("end-to-end: submit -> scan -> spool email -> gated result page (<5s)")
def test_end_to_end_loop(tmp_path):
    from .test_core import EMAIL, submit
    from .test_scanner import profile

    started = time.monotonic()
    clock = ManualClock(T0)
    with spawn(profile("owlsight_oc30")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        receipt = submit(service)
        record = service.run_diagnosis(receipt.record_id)

    # Completion email landed in the spool, body byte-equal to the template.
    messages = service.notifier.transport.messages()
    assert len(messages) == 1
    template = EmailTemplates(REPO / "templates").raw("completion")
    expected_body = template.replace(
        "{date}", record.completed_at.strftime("%Y/%m/%d %H:%M")
    ).replace("{link}", service.notifier.result_link(record))
    assert messages[0]["To"] == EMAIL
    assert messages[0]["body"] == expected_body

    # Result fetch under the bound session; uniform denial elsewhere.
    view = service.fetch_result(receipt.result_token, receipt.session_scope)
    assert view["status"] == "done"
    assert [f["kind"] for f in view["findings"]] == ["EndOfSupport", "KnownDefaultCredential"]
    with pytest.raises(AccessDenied) as foreign:
        service.fetch_result(receipt.result_token, "foreign-session")
    with pytest.raises(AccessDenied) as unknown:
        service.fetch_result("no-such-token", receipt.session_scope)
    assert str(foreign.value) == str(unknown.value)

    assert time.monotonic() - started < 5.0
