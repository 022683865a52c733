"""Operator statistics over the diagnosis event log.

All counts are user-level: a user is counted once per cohort no matter how
many re-diagnoses they ran, and a user active in several network environments
counts as soon as at least one affected environment satisfies the criterion.
Final outcome counts use the latest qualifying re-diagnosis; the
time-to-remediation histogram uses the earliest deciding one.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .clock import parse_rfc3339
from .remediation import ChainRecord, DecisionView, OutcomeLabel, classify_remediation
from .risks import DEFAULT_CREDENTIAL_FAMILY, RiskKind, TAXONOMY_ORDER

COHORTS = ("malware", "vul_all", "vul_excluding_default_family")

_VUL_KINDS = frozenset(k for k in RiskKind if k is not RiskKind.MALWARE_INFECTION)

COHORT_KINDS: dict[str, frozenset[RiskKind]] = {
    "malware": frozenset({RiskKind.MALWARE_INFECTION}),
    "vul_all": _VUL_KINDS,
    "vul_excluding_default_family": _VUL_KINDS - DEFAULT_CREDENTIAL_FAMILY,
}

_DECIDED = (OutcomeLabel.REMEDIATED, OutcomeLabel.PERSISTING)


class LogFormatError(ValueError):
    """Event log line failed to parse; aborts with the line number."""


@dataclass(frozen=True)
class LogEvent:
    record_id: int
    email_hash: str
    asn: int
    requested_at: dt.datetime
    completed_at: dt.datetime
    findings: frozenset[RiskKind]
    device: tuple[str, str] | None


@dataclass(frozen=True)
class FunnelRow:
    cohort: str
    users_with_issues: int
    users_rediagnosed: int
    users_remediated: int

    def __post_init__(self) -> None:
        assert self.users_remediated <= self.users_rediagnosed <= self.users_with_issues


@dataclass(frozen=True)
class RiskRateRow:
    kind: RiskKind
    confirmed_remediations: int
    rediagnosed: int

    @property
    def rate_percent(self) -> int | None:
        if self.rediagnosed == 0:
            return None
        # Round half up to an integer percent.
        return int(100 * self.confirmed_remediations / self.rediagnosed + 0.5)

    def formatted(self) -> str:
        base = f"{self.confirmed_remediations}/{self.rediagnosed}"
        if self.rate_percent is None:
            return base
        return f"{base} ({self.rate_percent}%)"


def parse_event_line(line: str, lineno: int) -> LogEvent:
    try:
        obj = json.loads(line)
        return LogEvent(
            record_id=int(obj["record_id"]),
            email_hash=str(obj["email_hash"]),
            asn=int(obj.get("asn", 0)),
            requested_at=parse_rfc3339(obj["requested_at"]),
            completed_at=parse_rfc3339(obj["completed_at"]),
            findings=frozenset(RiskKind(k) for k in obj.get("findings", [])),
            device=tuple(obj["device"]) if obj.get("device") else None,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise LogFormatError(f"line {lineno}: {exc}") from exc


def load_event_log(path: Path | str) -> list[LogEvent]:
    events = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            events.append(parse_event_line(line, lineno))
    return events


def build_chains(events: Iterable[LogEvent]) -> dict[tuple[str, int], list[ChainRecord]]:
    """(email_hash, asn) -> chronological chain of completed diagnoses."""
    grouped: dict[tuple[str, int], list[LogEvent]] = {}
    for event in events:
        grouped.setdefault((event.email_hash, event.asn), []).append(event)
    chains: dict[tuple[str, int], list[ChainRecord]] = {}
    for key, group in grouped.items():
        group.sort(key=lambda e: (e.completed_at, e.record_id))
        chains[key] = [
            ChainRecord(
                record_id=str(e.record_id),
                completed_at=e.completed_at,
                kinds=e.findings,
                device=e.device,
            )
            for e in group
        ]
    return chains


def _outcomes_by_user(
    chains: dict[tuple[str, int], list[ChainRecord]], view: DecisionView
) -> dict[str, list[dict[RiskKind, OutcomeLabel]]]:
    """email_hash -> per-environment {kind: outcome} maps."""
    per_user: dict[str, list[dict[RiskKind, OutcomeLabel]]] = {}
    for (user, _asn), chain in chains.items():
        outcome_map = {o.kind: o.outcome for o in classify_remediation(chain, view)}
        per_user.setdefault(user, []).append(outcome_map)
    return per_user


def funnel(events: Iterable[LogEvent]) -> list[FunnelRow]:
    chains = build_chains(events)
    per_user = _outcomes_by_user(chains, DecisionView.LATEST)
    rows = []
    for cohort in COHORTS:
        kinds = COHORT_KINDS[cohort]
        with_issues = 0
        rediagnosed = 0
        remediated = 0
        for env_outcomes in per_user.values():
            detected = any(k in om for om in env_outcomes for k in kinds)
            if not detected:
                continue
            with_issues += 1
            # Malware outcomes are only decided by a re-diagnosis at least
            # 24 h after detection, so "decided" doubles as "qualifying".
            decided = any(
                om.get(k) in _DECIDED for om in env_outcomes for k in kinds
            )
            if decided:
                rediagnosed += 1
            if any(
                om.get(k) is OutcomeLabel.REMEDIATED for om in env_outcomes for k in kinds
            ):
                remediated += 1
        rows.append(
            FunnelRow(
                cohort=cohort,
                users_with_issues=with_issues,
                users_rediagnosed=rediagnosed,
                users_remediated=remediated,
            )
        )
    return rows


def rate_by_risk(events: Iterable[LogEvent]) -> list[RiskRateRow]:
    chains = build_chains(events)
    per_user = _outcomes_by_user(chains, DecisionView.LATEST)
    rows = []
    for kind in TAXONOMY_ORDER:
        rediagnosed = 0
        confirmed = 0
        for env_outcomes in per_user.values():
            outcomes = [om[kind] for om in env_outcomes if kind in om]
            if not outcomes:
                continue
            if any(o in _DECIDED for o in outcomes):
                rediagnosed += 1
            if any(o is OutcomeLabel.REMEDIATED for o in outcomes):
                confirmed += 1
        rows.append(RiskRateRow(kind=kind, confirmed_remediations=confirmed, rediagnosed=rediagnosed))
    return rows


@dataclass(frozen=True)
class Histogram:
    # Edges are inclusive upper bounds; one overflow bucket follows the last edge.
    edges: tuple[dt.timedelta, ...]
    counts: tuple[int, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        names = tuple(f"<={_format_duration(edge)}" for edge in self.edges)
        return names + (f">{_format_duration(self.edges[-1])}",)


def _format_duration(delta: dt.timedelta) -> str:
    seconds = int(delta.total_seconds())
    if seconds % 86400 == 0:
        return f"{seconds // 86400}d"
    if seconds % 3600 == 0:
        return f"{seconds // 3600}h"
    return f"{seconds}s"


def time_to_remediation(
    events: Iterable[LogEvent],
    buckets: tuple[dt.timedelta, ...] = (
        dt.timedelta(days=1),
        dt.timedelta(days=7),
        dt.timedelta(days=30),
    ),
) -> Histogram:
    """Elapsed time between detection and the earliest deciding re-diagnosis."""
    if not buckets or any(b <= a for a, b in zip(buckets, buckets[1:])):
        raise ValueError("buckets must be strictly increasing")
    chains = build_chains(events)
    counts = [0] * (len(buckets) + 1)
    for chain in chains.values():
        by_id = {r.record_id: r for r in chain}
        for outcome in classify_remediation(chain, DecisionView.EARLIEST):
            if outcome.outcome is not OutcomeLabel.REMEDIATED:
                continue
            decider = by_id[outcome.decided_by]
            elapsed = decider.completed_at - outcome.first_detected_at
            for i, edge in enumerate(buckets):
                if elapsed <= edge:
                    counts[i] += 1
                    break
            else:
                counts[-1] += 1
    return Histogram(edges=tuple(buckets), counts=tuple(counts))


# -- text rendering -------------------------------------------------------------


def format_funnel(rows: list[FunnelRow]) -> str:
    headers = ("cohort", "users_with_issues", "users_rediagnosed", "users_remediated")
    table = [headers] + [
        (row.cohort, str(row.users_with_issues), str(row.users_rediagnosed), str(row.users_remediated))
        for row in rows
    ]
    widths = [max(len(line[col]) for line in table) for col in range(len(headers))]
    return "\n".join(
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip() for line in table
    )


def format_rates(rows: list[RiskRateRow]) -> str:
    from .risks import RISK_LABELS

    table = [("risk", "remediated/re-diagnosed")] + [
        (RISK_LABELS[row.kind], row.formatted()) for row in rows
    ]
    widths = [max(len(line[col]) for line in table) for col in range(2)]
    return "\n".join(
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip() for line in table
    )


def format_histogram(hist: Histogram) -> str:
    labels = hist.labels
    width = max(len(label) for label in labels)
    lines = []
    for label, count in zip(labels, hist.counts):
        bar = "#" * min(count, 60)
        lines.append(f"{label.ljust(width)}  {str(count).rjust(5)}  {bar}".rstrip())
    return "\n".join(lines)


def funnel_to_json(rows: list[FunnelRow]) -> list[dict]:
    return [
        {
            "cohort": row.cohort,
            "users_with_issues": row.users_with_issues,
            "users_rediagnosed": row.users_rediagnosed,
            "users_remediated": row.users_remediated,
        }
        for row in rows
    ]


def rates_to_json(rows: list[RiskRateRow]) -> list[dict]:
    return [
        {
            "kind": row.kind.value,
            "confirmed_remediations": row.confirmed_remediations,
            "rediagnosed": row.rediagnosed,
            "rate_percent": row.rate_percent,
        }
        for row in rows
    ]
