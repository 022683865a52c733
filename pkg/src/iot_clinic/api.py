"""HTTP surface of the diagnosis service.

Result pages are gated by token plus the session cookie bound at submission;
an unknown token and a foreign session produce byte-identical 404s so the
response leaks nothing about token validity.
"""

from __future__ import annotations

import ipaddress
import secrets
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .core import (
    AccessDenied,
    DiagnosisService,
    RedoError,
    SubmissionError,
    ThrottleError,
)

SESSION_COOKIE = "clinic_session"

# The production deployment plugs in a third-party human-verification check;
# the lab stub accepts everything.
Verifier = Callable[[str], bool]


def always_pass_verifier(_token: str) -> bool:
    return True


def _denial() -> JSONResponse:
    return JSONResponse({"detail": "not found"}, status_code=404)


def _session_scope(request: Request) -> tuple[str, bool]:
    scope = request.cookies.get(SESSION_COOKIE)
    if scope:
        return scope, False
    return secrets.token_urlsafe(16), True


def create_app(
    service: DiagnosisService,
    verifier: Verifier | None = None,
    static_dir: Path | str | None = None,
) -> FastAPI:
    app = FastAPI(title="IoT Clinic", docs_url=None, redoc_url=None)
    verify = verifier or always_pass_verifier

    @app.post("/api/diagnoses", status_code=202)
    async def submit(request: Request):
        form = await request.form()
        email = str(form.get("email", ""))
        location = str(form.get("location", ""))
        referral = str(form.get("referral", ""))
        verification = str(form.get("verification", ""))
        target = str(form.get("target", "")) or (request.client.host if request.client else "")
        try:
            ipaddress.IPv4Address(target)
        except (ipaddress.AddressValueError, ValueError):
            return JSONResponse(
                {"detail": "could not determine an IPv4 target for this request"}, status_code=400
            )
        scope, fresh = _session_scope(request)
        try:
            receipt = service.submit_request(
                email=email,
                location=location,
                referral=referral,
                verification_ok=verify(verification),
                target=target,
                session_scope=scope,
            )
        except ThrottleError as exc:
            return JSONResponse(
                {"detail": str(exc)},
                status_code=429,
                headers={"Retry-After": str(int(exc.retry_after.total_seconds()))},
            )
        except SubmissionError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=400)
        response = JSONResponse(
            {"record_id": receipt.record_id, "token": receipt.result_token}, status_code=202
        )
        if fresh:
            response.set_cookie(SESSION_COOKIE, scope, httponly=True, samesite="lax")
        return response

    @app.get("/api/diagnoses/{token}")
    async def result(token: str, request: Request):
        scope = request.cookies.get(SESSION_COOKIE)
        if not scope:
            return _denial()
        try:
            return service.fetch_result(token, scope)
        except AccessDenied:
            return _denial()

    @app.post("/api/diagnoses/{token}/redo", status_code=202)
    async def redo(token: str, request: Request):
        scope = request.cookies.get(SESSION_COOKIE)
        if not scope:
            return _denial()
        try:
            record_id = service.redo(token, session_scope=scope)
        except AccessDenied:
            return _denial()
        except RedoError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=409)
        except ThrottleError as exc:
            return JSONResponse(
                {"detail": str(exc)},
                status_code=429,
                headers={"Retry-After": str(int(exc.retry_after.total_seconds()))},
            )
        return JSONResponse({"record_id": record_id}, status_code=202)

    @app.post("/api/diagnoses/{token}/support", status_code=202)
    async def support(token: str, request: Request):
        scope = request.cookies.get(SESSION_COOKIE)
        if not scope:
            return _denial()
        body = await request.body()
        try:
            service.request_support(token, scope, body.decode("utf-8", "replace"))
        except AccessDenied:
            return _denial()
        return JSONResponse({"received": True}, status_code=202)

    @app.post("/api/questionnaires", status_code=202)
    async def questionnaire(request: Request):
        # Stored verbatim; answering is voluntary and never gates results.
        body = await request.body()
        token = request.query_params.get("token")
        service.store_questionnaire(body.decode("utf-8", "replace"), token)
        return JSONResponse({"stored": True}, status_code=202)

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
