from __future__ import annotations

import datetime as dt
import json

import pytest

from iot_clinic.core import (
    AccessDenied,
    DiagnosisService,
    ManualRunner,
    RedoError,
    SubmissionError,
    ThrottleError,
    email_hash,
)
from iot_clinic.lab import scan_config_for, spawn
from iot_clinic.remediation import DecisionView, EnvironmentKey, OutcomeLabel
from iot_clinic.risks import RiskKind
from iot_clinic.sightings import Sighting

from .conftest import T0, make_service
from .test_scanner import profile

EMAIL = "user@example.com"


def submit(service: DiagnosisService, target="127.0.0.1", email=EMAIL, **kwargs):
    defaults = dict(location="home", referral="media", verification_ok=True)
    defaults.update(kwargs)
    return service.submit_request(email=email, target=target, **defaults)


def test_submit_creates_pending_record_with_fresh_token(service):
    receipt = submit(service)
    record = service.store.get(receipt.record_id)
    assert record.status == "pending"
    assert record.result_token == receipt.result_token
    assert len(receipt.result_token) >= 22  # 128 bits of urlsafe base64
    other = submit(service, target="10.0.0.2")
    assert other.result_token != receipt.result_token


def test_submit_rejects_failed_verification(service):
    with pytest.raises(SubmissionError, match="verification"):
        submit(service, verification_ok=False)
    assert service.store.all_records() == []


def test_submit_rejects_bad_email(service):
    for bad in ("", "nope", "a@b", "two words@example.com"):
        with pytest.raises(SubmissionError):
            submit(service, email=bad)


def test_submit_throttles_second_request_for_same_target(service):
    submit(service)
    with pytest.raises(ThrottleError) as excinfo:
        submit(service)
    assert excinfo.value.retry_after > dt.timedelta(0)
    # A different target is unaffected.
    submit(service, target="10.0.0.2")


def test_throttle_clears_after_completion(tmp_path, clock):
    with spawn(profile("aether_ar3000_clean")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        receipt = submit(service)
        service.run_diagnosis(receipt.record_id)
        submit(service)  # no throttle once the first is done


def test_run_diagnosis_clean_device(tmp_path, clock):
    with spawn(profile("aether_ar3000_clean")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        receipt = submit(service)
        record = service.run_diagnosis(receipt.record_id)
    assert record.status == "done"
    assert record.findings == ()
    assert record.completed_at == clock.now()
    assert record.as_number == 64496  # loopback prefix in the fixture table


def test_run_diagnosis_telnet_open(tmp_path, clock):
    with spawn(profile("northgate_w31")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        receipt = submit(service)
        record = service.run_diagnosis(receipt.record_id)
    kinds = [f.kind for f in record.findings]
    assert RiskKind.RISKY_PROTOCOL_TELNET in kinds
    assert kinds == [RiskKind.RISKY_PROTOCOL_TELNET, RiskKind.KNOWN_DEFAULT_CREDENTIAL]


def test_run_diagnosis_with_recent_sighting_flags_malware(tmp_path, clock):
    with spawn(profile("aether_ar3000_clean")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        service.sighting_store.add(
            Sighting("127.0.0.1", clock.now() - dt.timedelta(hours=2), "telnet_honeypot")
        )
        receipt = submit(service)
        record = service.run_diagnosis(receipt.record_id)
    assert [f.kind for f in record.findings] == [RiskKind.MALWARE_INFECTION]


def test_run_diagnosis_sends_completion_email(tmp_path, clock):
    with spawn(profile("aether_ar3000_clean")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        receipt = submit(service)
        record = service.run_diagnosis(receipt.record_id)
    messages = service.notifier.transport.messages()
    assert len(messages) == 1
    assert messages[0]["To"] == EMAIL
    assert messages[0]["Kind"] == "completion"
    assert record.result_token in messages[0]["body"]


def test_event_log_written_on_completion(tmp_path, clock):
    with spawn(profile("harborstor_hs220")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        receipt = submit(service)
        service.run_diagnosis(receipt.record_id)
    lines = service.event_log.path.read_text().strip().splitlines()
    assert len(lines) == 1
    event = json.loads(lines[0])
    assert event["record_id"] == receipt.record_id
    assert event["email_hash"] == email_hash(EMAIL)
    assert event["findings"] == ["EndOfSupport", "KnownDefaultCredential"]
    assert event["device"] == ["HarborStor", "HS-220"]
    assert EMAIL not in lines[0]  # only the hash ever reaches the log


def test_fetch_result_requires_bound_session(tmp_path, clock):
    with spawn(profile("aether_ar3000_clean")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        receipt = submit(service)
        service.run_diagnosis(receipt.record_id)

    view = service.fetch_result(receipt.result_token, receipt.session_scope)
    assert view["status"] == "done"
    assert view["clean"] is True
    assert view["redo_allowed"] is True

    with pytest.raises(AccessDenied) as foreign:
        service.fetch_result(receipt.result_token, "some-other-session")
    with pytest.raises(AccessDenied) as bogus:
        service.fetch_result("nonexistent-token", receipt.session_scope)
    # Uniform denial: same type, same message, no token-validity signal.
    assert str(foreign.value) == str(bogus.value)


def test_result_view_carries_measures(tmp_path, clock):
    with spawn(profile("owlsight_oc30")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        receipt = submit(service)
        service.run_diagnosis(receipt.record_id)
    view = service.fetch_result(receipt.result_token, receipt.session_scope)
    assert view["clean"] is False
    kinds = [f["kind"] for f in view["findings"]]
    assert kinds == ["EndOfSupport", "KnownDefaultCredential"]
    eos = view["findings"][0]
    assert eos["device_vendor"] == "Owlsight"
    assert "Please consider replacing it with a new device." in eos["measure"]


def test_redo_creates_child_and_chains(tmp_path, clock):
    with spawn(profile("aether_ar3000_clean")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        receipt = submit(service)
        service.run_diagnosis(receipt.record_id)

        child_id = service.redo(receipt.result_token)
        child = service.store.get(child_id)
        assert child.parent_record == receipt.record_id
        assert child.user_email == EMAIL
        assert child.status == "pending"

        clock.advance(dt.timedelta(hours=1))
        service.run_diagnosis(child_id)
        grandchild_id = service.redo(service.store.get(child_id).result_token)
        grandchild = service.store.get(grandchild_id)
        assert grandchild.parent_record == child_id
        assert grandchild.user_email == EMAIL
    chain_ids = [r.record_id for r in service.store.records_for_user(EMAIL)]
    assert chain_ids == [receipt.record_id, child_id, grandchild_id]


def test_redo_rejected_while_parent_pending(service):
    receipt = submit(service)
    with pytest.raises(RedoError, match="pending"):
        service.redo(receipt.result_token)


def test_redo_unknown_token_denied_uniformly(service):
    with pytest.raises(AccessDenied):
        service.redo("nope")


def test_manual_runner_enqueues_jobs(tmp_path, clock):
    with spawn(profile("aether_ar3000_clean")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        runner = ManualRunner()
        service.use_runner(runner)
        receipt = submit(service)
        assert runner.queue == [receipt.record_id]
        assert service.store.get(receipt.record_id).status == "pending"
        runner.drain(service)
        assert service.store.get(receipt.record_id).status == "done"


def test_failed_scan_marks_record_failed(tmp_path, clock):
    from iot_clinic.core import DiagnosisError

    service = make_service(tmp_path, clock)
    # Sabotage: a signature db path that no longer resolves rules at scan time.
    receipt = submit(service)
    service.signature_db = None  # identify() will blow up
    with pytest.raises(DiagnosisError):
        service.run_diagnosis(receipt.record_id)
    record = service.store.get(receipt.record_id)
    assert record.status == "failed"
    assert record.findings == ()


def test_environment_chains_and_outcomes(tmp_path, clock):
    service = make_service(tmp_path, clock)
    store = service.store

    def done_record(target, hours, kinds, device=None):
        receipt = submit(service, target=target)
        findings = []
        from iot_clinic.risks import RiskFinding
        from iot_clinic.scanner import DeviceIdentification

        ident = (
            DeviceIdentification(
                vendor=device[0], series="", model=device[1], matched_signature="s", specificity=1
            )
            if device
            else None
        )
        for kind in kinds:
            findings.append(
                RiskFinding(
                    kind=kind,
                    evidence="e",
                    recommended_measure="m",
                    device=None if kind in (RiskKind.MALWARE_INFECTION,) else ident,
                )
            )
        store.complete(receipt.record_id, T0 + dt.timedelta(hours=hours), tuple(findings),
                       service.asn_table.lookup(target))
        return receipt.record_id

    done_record("192.0.2.1", 0, [RiskKind.MALWARE_INFECTION])
    done_record("192.0.2.1", 30, [])
    done_record("198.51.100.1", 1, [])

    chains = service.environment_chains(EMAIL)
    assert len(chains) == 2
    assert sum(len(c) for c in chains.values()) == 3

    outcomes = service.outcomes_for_user(EMAIL, DecisionView.EARLIEST)
    home = outcomes[EnvironmentKey(EMAIL, 64500)]
    assert len(home) == 1
    assert home[0].kind is RiskKind.MALWARE_INFECTION
    assert home[0].outcome is OutcomeLabel.REMEDIATED


def test_questionnaire_stored_verbatim(service):
    payload = '{"continue_intent": 5, "helpful": "yes", "good_points": "fast", "weird": [1,2]}'
    service.store_questionnaire(payload, token=None)
    stored = service.store.questionnaires()
    assert stored[0][2] == payload


def test_delete_user_removes_records_and_events(tmp_path, clock):
    with spawn(profile("aether_ar3000_clean")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        receipt = submit(service)
        service.run_diagnosis(receipt.record_id)
        other = submit(service, email="other@example.com", target="10.0.0.3")
        service.run_diagnosis(other.record_id)

    assert service.delete_user(EMAIL) == 1
    assert service.store.records_for_user(EMAIL) == []
    remaining = service.event_log.path.read_text()
    assert email_hash(EMAIL) not in remaining
    assert email_hash("other@example.com") in remaining


def test_tokens_unique_across_records(service):
    tokens = set()
    for i in range(50):
        receipt = submit(service, target=f"10.1.0.{i + 1}")
        assert receipt.result_token not in tokens
        tokens.add(receipt.result_token)


def test_fetch_result_while_pending_reports_status(service):
    receipt = submit(service)
    view = service.fetch_result(receipt.result_token, receipt.session_scope)
    assert view["status"] == "pending"
    assert view["findings"] == []
    assert view["redo_allowed"] is False


def test_thread_pool_runner_completes_concurrent_submissions(tmp_path, clock):
    import time

    from iot_clinic.core import ThreadPoolRunner

    with spawn(profile("aether_ar3000_clean")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        runner = ThreadPoolRunner(service, workers=4)
        service.use_runner(runner)
        receipts = [
            submit(service, target="127.0.0.1" if i == 0 else f"10.3.0.{i}",
                   email=f"user{i}@example.com")
            for i in range(8)
        ]
        deadline = time.monotonic() + 20
        while time.monotonic() < deadline:
            statuses = {service.store.get(r.record_id).status for r in receipts}
            if statuses == {"done"}:
                break
            time.sleep(0.05)
        runner.shutdown()
    assert {service.store.get(r.record_id).status for r in receipts} == {"done"}
    # one completion email per record, all landed in the spool
    assert len(service.notifier.transport.messages()) == 8
    assert len(service.event_log.path.read_text().strip().splitlines()) == 8
