from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from iot_clinic.api import create_app
from iot_clinic.core import ManualRunner
from iot_clinic.lab import scan_config_for, spawn

from .conftest import make_service
from .test_scanner import profile

FORM = {
    "email": "user@example.com",
    "location": "home",
    "referral": "media",
    "verification": "ok",
    "target": "127.0.0.1",
}


@pytest.fixture()
def harness(tmp_path, clock):
    with spawn(profile("owlsight_oc30")) as handle:
        service = make_service(tmp_path, clock, scan=scan_config_for(handle))
        runner = ManualRunner()
        service.use_runner(runner)
        client = TestClient(create_app(service))
        yield service, runner, client


def test_submit_returns_202_with_token_and_session_cookie(harness):
    service, runner, client = harness
    response = client.post("/api/diagnoses", data=FORM)
    assert response.status_code == 202
    body = response.json()
    assert "token" in body and "record_id" in body
    assert "clinic_session" in response.cookies
    assert runner.queue == [body["record_id"]]


def test_submit_rejects_bad_email(harness):
    _, _, client = harness
    response = client.post("/api/diagnoses", data={**FORM, "email": "nope"})
    assert response.status_code == 400


def test_submit_with_failed_verification_rejected(tmp_path, clock):
    service = make_service(tmp_path, clock)
    client = TestClient(create_app(service, verifier=lambda token: token == "secret"))
    assert client.post("/api/diagnoses", data=FORM).status_code == 400
    assert client.post("/api/diagnoses", data={**FORM, "verification": "secret"}).status_code == 202


def test_throttle_yields_429_with_retry_after(harness):
    _, _, client = harness
    assert client.post("/api/diagnoses", data=FORM).status_code == 202
    second = client.post("/api/diagnoses", data=FORM)
    assert second.status_code == 429
    assert int(second.headers["Retry-After"]) > 0


def test_result_flow_and_uniform_denial(harness):
    service, runner, client = harness
    token = client.post("/api/diagnoses", data=FORM).json()["token"]
    runner.drain(service)

    result = client.get(f"/api/diagnoses/{token}")
    assert result.status_code == 200
    body = result.json()
    assert body["status"] == "done"
    assert [f["kind"] for f in body["findings"]] == ["EndOfSupport", "KnownDefaultCredential"]

    # A different browser session: identical denial to a bogus token.
    foreign = TestClient(create_app(service))
    foreign.cookies.set("clinic_session", "someone-else")
    denied_scope = foreign.get(f"/api/diagnoses/{token}")
    denied_bogus = foreign.get("/api/diagnoses/this-token-does-not-exist")
    assert denied_scope.status_code == denied_bogus.status_code == 404
    assert denied_scope.json() == denied_bogus.json()

    # No cookie at all: same shape again.
    bare = TestClient(create_app(service))
    denied_bare = bare.get(f"/api/diagnoses/{token}")
    assert denied_bare.status_code == 404
    assert denied_bare.json() == denied_bogus.json()


def test_redo_endpoint_enqueues_child(harness):
    service, runner, client = harness
    token = client.post("/api/diagnoses", data=FORM).json()["token"]
    runner.drain(service)

    redo = client.post(f"/api/diagnoses/{token}/redo")
    assert redo.status_code == 202
    child_id = redo.json()["record_id"]
    assert service.store.get(child_id).parent_record is not None
    assert runner.queue == [child_id]


def test_redo_on_pending_parent_conflicts(harness):
    service, runner, client = harness
    token = client.post("/api/diagnoses", data=FORM).json()["token"]
    assert client.post(f"/api/diagnoses/{token}/redo").status_code == 409


def test_support_request_recorded(harness):
    service, runner, client = harness
    token = client.post("/api/diagnoses", data=FORM).json()["token"]
    runner.drain(service)
    response = client.post(
        f"/api/diagnoses/{token}/support", content=b"please help me find the device"
    )
    assert response.status_code == 202
    requests = service.store.support_requests()
    assert len(requests) == 1
    assert requests[0][2] == "please help me find the device"


def test_support_denied_for_foreign_session(harness):
    service, runner, client = harness
    token = client.post("/api/diagnoses", data=FORM).json()["token"]
    runner.drain(service)
    foreign = TestClient(create_app(service))
    foreign.cookies.set("clinic_session", "intruder")
    assert foreign.post(f"/api/diagnoses/{token}/support", content=b"x").status_code == 404


def test_static_ui_mount_serves_bundle(tmp_path, clock):
    dist = tmp_path / "dist"
    dist.mkdir()
    (dist / "index.html").write_text("<html><body id='app'>clinic</body></html>")
    service = make_service(tmp_path, clock)
    client = TestClient(create_app(service, static_dir=dist))
    page = client.get("/")
    assert page.status_code == 200
    assert "clinic" in page.text
    # API routes still take precedence over the static mount.
    assert client.post("/api/diagnoses", data=FORM).status_code in (202, 400)


def test_questionnaire_stored_verbatim_and_never_gated(harness):
    service, _, client = harness
    payload = json.dumps(
        {"continue_intent": 5, "helpful": "helpful", "good_points": "", "bad_points": "none"}
    )
    response = client.post("/api/questionnaires", content=payload.encode())
    assert response.status_code == 202
    stored = service.store.questionnaires()
    assert stored[0][2] == payload
