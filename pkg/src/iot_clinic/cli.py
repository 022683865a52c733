"""Operator command line: ingest, scan, stats, campaign, lab, serve."""

from __future__ import annotations

import datetime as dt
import json
import sys
from pathlib import Path

import click

from . import analytics
from .clock import utcnow
from .config import ScanConfig, ServiceConfig, default_fixture_dir
from .core import DiagnosisService, ThreadPoolRunner
from .lab import (
    DeviceProfile,
    ScenarioQuery,
    ScenarioSighting,
    ScenarioSpec,
    generate_scenario,
    spawn,
)
from .notify import Notifier, transport_from_spec
from .scanner import check_telnet, identify, probe
from .sightings import SightingStore
from .signatures import SignatureDatabase


@click.group()
@click.option("--data-dir", type=click.Path(path_type=Path), default=Path("data"), show_default=True)
@click.option(
    "--config",
    "config_file",
    type=click.Path(exists=True, path_type=Path),
    default=None,
    help="JSON deployment config (reminder.delay_days, mail.transport, ...).",
)
@click.pass_context
def main(ctx: click.Context, data_dir: Path, config_file: Path | None) -> None:
    """Self-hostable IoT security diagnosis service."""
    ctx.ensure_object(dict)
    ctx.obj["data_dir"] = data_dir
    ctx.obj["config_file"] = config_file


def _config(ctx_obj: dict) -> ServiceConfig:
    if ctx_obj.get("config_file"):
        return ServiceConfig.from_file(ctx_obj["config_file"], data_dir=ctx_obj["data_dir"])
    return ServiceConfig(data_dir=ctx_obj["data_dir"])


def _service(ctx_obj: dict) -> DiagnosisService:
    config = _config(ctx_obj)
    service = DiagnosisService(config)
    transport = transport_from_spec(config.resolved_mail_transport)
    service.notifier = Notifier(
        service.store,
        transport,
        policy=config.reminder,
        result_url_base=config.result_url_base,
    )
    return service


# -- sightings ----------------------------------------------------------------


@main.group()
def sightings() -> None:
    """Honeypot/darknet sighting log management."""


@sightings.command("ingest")
@click.argument("file", type=click.Path(exists=True, path_type=Path))
@click.option("--on-error", type=click.Choice(["skip", "abort"]), default="skip", show_default=True)
@click.pass_context
def sightings_ingest(ctx: click.Context, file: Path, on_error: str) -> None:
    config = _config(ctx.obj)
    config.data_dir.mkdir(parents=True, exist_ok=True)
    store = SightingStore(config.db_path, config.sightings)
    counts = store.ingest_file(file, reject_policy=on_error)
    click.echo(f"accepted={counts.accepted} rejected={counts.rejected}")


# -- scanning -------------------------------------------------------------------


@main.command()
@click.argument("address")
@click.option("--ports", default=None, help="Comma-separated TCP ports (default: 23,80,8080,443).")
@click.option(
    "--web-ports",
    default=None,
    help="Ports probed with an HTTP GET (default: the standard web set).",
)
@click.option(
    "--signatures",
    type=click.Path(exists=True, path_type=Path),
    default=None,
    help="Signature DB (default: fixtures/signatures.json).",
)
@click.option("--timeout", default=3000, show_default=True, help="Per-port timeout in milliseconds.")
def scan(
    address: str, ports: str | None, web_ports: str | None, signatures: Path | None, timeout: int
) -> None:
    """Probe ADDRESS, print responses and the identification as JSON."""
    config = ScanConfig(per_port_timeout=dt.timedelta(milliseconds=timeout))
    if web_ports:
        config = ScanConfig(
            per_port_timeout=config.per_port_timeout,
            web_ports=frozenset(int(p) for p in web_ports.split(",")),
        )
    port_list = tuple(int(p) for p in ports.split(",")) if ports else config.ports
    db = SignatureDatabase.load(signatures or default_fixture_dir() / "signatures.json")
    responses = probe(address, port_list, config.per_port_timeout, config=config)
    telnet = check_telnet(address, config.per_port_timeout, port=config.telnet_port)
    result = identify(responses, db)
    payload = {
        "target": address,
        "telnet": telnet.value,
        "responses": [
            {
                "port": r.port,
                "transport_ok": r.transport_ok,
                "banner": r.raw_banner.decode("latin-1"),
                "http_status": r.http_status,
                "elapsed_ms": int(r.elapsed.total_seconds() * 1000),
            }
            for r in responses
        ],
        "identification": (
            {
                "vendor": result.identification.vendor,
                "series": result.identification.series,
                "model": result.identification.model,
                "firmware_version": result.identification.firmware_version,
                "signature": result.identification.matched_signature,
            }
            if result.identification
            else None
        ),
        "candidates": [
            {"signature": s, "vendor": v, "model": m, "specificity": n}
            for s, v, m, n in result.candidates
        ],
    }
    click.echo(json.dumps(payload, indent=2))


# -- statistics -----------------------------------------------------------------


@main.group()
def stats() -> None:
    """Funnel and remediation statistics from the event log."""


def _load_events(log: Path) -> list[analytics.LogEvent]:
    try:
        return analytics.load_event_log(log)
    except analytics.LogFormatError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@stats.command()
@click.argument("log", type=click.Path(exists=True, path_type=Path))
@click.option("--json", "as_json", is_flag=True)
def funnel(log: Path, as_json: bool) -> None:
    rows = analytics.funnel(_load_events(log))
    if as_json:
        click.echo(json.dumps(analytics.funnel_to_json(rows), indent=2))
    else:
        click.echo(analytics.format_funnel(rows))


@stats.command("by-risk")
@click.argument("log", type=click.Path(exists=True, path_type=Path))
@click.option("--json", "as_json", is_flag=True)
def by_risk(log: Path, as_json: bool) -> None:
    rows = analytics.rate_by_risk(_load_events(log))
    if as_json:
        click.echo(json.dumps(analytics.rates_to_json(rows), indent=2))
    else:
        click.echo(analytics.format_rates(rows))


def _parse_bucket(token: str) -> dt.timedelta:
    token = token.strip().lower()
    units = {"d": 86400, "h": 3600, "m": 60, "s": 1}
    if token and token[-1] in units:
        return dt.timedelta(seconds=int(token[:-1]) * units[token[-1]])
    return dt.timedelta(days=int(token))


@stats.command()
@click.argument("log", type=click.Path(exists=True, path_type=Path))
@click.option("--buckets", default="1d,7d,30d", show_default=True)
@click.option("--json", "as_json", is_flag=True)
def ttr(log: Path, buckets: str, as_json: bool) -> None:
    """Time between detection and the re-diagnosis that confirmed remediation."""
    edges = tuple(_parse_bucket(b) for b in buckets.split(","))
    hist = analytics.time_to_remediation(_load_events(log), edges)
    if as_json:
        click.echo(json.dumps({"labels": hist.labels, "counts": hist.counts}, indent=2))
    else:
        click.echo(analytics.format_histogram(hist))


# -- campaigns --------------------------------------------------------------------


@main.group()
def campaign() -> None:
    """Re-diagnosis recommendation campaigns."""


@campaign.command("run")
@click.option("--audience", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--dry-run", is_flag=True)
@click.pass_context
def campaign_run(ctx: click.Context, audience: Path, dry_run: bool) -> None:
    service = _service(ctx.obj)
    addresses = [line.strip() for line in audience.read_text().splitlines() if line.strip()]
    report = service.notifier.run_campaign(addresses, dry_run=dry_run)
    if dry_run:
        for email in report.rendered:
            click.echo(f"--- {email.to}")
            click.echo(email.body)
    click.echo(
        f"rendered={len(report.rendered)} sent={report.sent}"
        f" skipped_unsubscribed={len(report.skipped_suppressed)} failures={len(report.failures)}"
    )


@main.command("delete-user")
@click.argument("email")
@click.pass_context
def delete_user(ctx: click.Context, email: str) -> None:
    """Delete all stored information about a user (deletion on request)."""
    service = _service(ctx.obj)
    removed = service.delete_user(email)
    click.echo(f"deleted {removed} diagnosis record(s) for {email}")


# -- lab ---------------------------------------------------------------------------


@main.group()
def lab() -> None:
    """Emulated devices and synthetic scenarios (loopback only)."""


@lab.command("up")
@click.argument("profile", type=click.Path(exists=True, path_type=Path))
def lab_up(profile: Path) -> None:
    handle = spawn(DeviceProfile.load(profile))
    click.echo(f"profile {handle.profile.profile_id} listening on {handle.address}")
    for logical, bound in sorted(handle.port_map.items()):
        click.echo(f"  port {logical} -> {handle.address}:{bound}")
    click.echo("Ctrl-C to stop")
    try:
        import time

        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        handle.stop()


@lab.command("scenario")
@click.argument("spec", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=Path("scenario-sightings.jsonl"), show_default=True)
def lab_scenario(spec: Path, out: Path) -> None:
    raw = json.loads(spec.read_text())
    scenario_spec = ScenarioSpec(
        sightings=tuple(
            ScenarioSighting(
                address=s["address"],
                offset=dt.timedelta(hours=s["offset_hours"]),
                sensor=s.get("sensor", "darknet"),
            )
            for s in raw["sightings"]
        ),
        queries=tuple(
            ScenarioQuery(address=q["address"], offset=dt.timedelta(hours=q.get("offset_hours", 0)))
            for q in raw["queries"]
        ),
        window=dt.timedelta(hours=raw.get("window_hours", 24)),
    )
    scenario = generate_scenario(scenario_spec, now=utcnow())
    scenario.write_log(out)
    click.echo(f"wrote {len(scenario.log_lines)} sightings to {out}")
    for verdict in scenario.expected:
        click.echo(
            f"expect {verdict.address} @ {verdict.query_time.isoformat()}:"
            f" infected={verdict.infected} evidence={verdict.evidence_count}"
        )


# -- service ---------------------------------------------------------------------


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option(
    "--ui",
    "ui_dir",
    type=click.Path(path_type=Path),
    default=None,
    help="Serve a built frontend bundle (e.g. frontend/dist) at /.",
)
@click.pass_context
def serve(ctx: click.Context, host: str, port: int, ui_dir: Path | None) -> None:
    """Run the HTTP API (and diagnosis workers)."""
    import uvicorn

    from .api import create_app

    service = _service(ctx.obj)
    service.use_runner(ThreadPoolRunner(service, workers=service.config.workers))
    uvicorn.run(create_app(service, static_dir=ui_dir), host=host, port=port)


if __name__ == "__main__":
    main()
