"""Environment grouping by AS number and remediation accounting across re-diagnoses.

A user's diagnoses are split into per-environment chains keyed by the
autonomous system of the diagnosed address, so a clean scan from the office
never counts as remediation of a risk found at home. Within a chain every
risk kind gets exactly one outcome.

The malware detector needs the target active in sensor data within the last
24 hours, so a re-diagnosis completed less than 24 hours after the detection
cannot decide the malware outcome either way. The default-credential family
keys on published factory defaults: changing the password does not change the
detection, so those risks only count as remediated when the device itself is
no longer identified by the scan.
"""

from __future__ import annotations

import csv
import datetime as dt
import ipaddress
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .risks import DEFAULT_CREDENTIAL_FAMILY, RiskKind, TAXONOMY_ORDER

MALWARE_DECISION_GAP = dt.timedelta(hours=24)

UNKNOWN_ASN = 0


class OutcomeLabel(Enum):
    REMEDIATED = "Remediated"
    PERSISTING = "Persisting"
    INDETERMINATE = "Indeterminate"
    NO_REDIAGNOSIS = "NoReDiagnosis"


class DecisionView(Enum):
    # Earliest qualifying record decides: the basis for time-to-remediation.
    EARLIEST = "earliest"
    # Latest qualifying record decides: the basis for final outcome counts.
    LATEST = "latest"


@dataclass(frozen=True)
class EnvironmentKey:
    user_email: str
    as_number: int

    def __post_init__(self) -> None:
        if self.as_number < 0:
            raise ValueError("as_number must be >= 0 (0 means unknown)")


@dataclass(frozen=True)
class RemediationOutcome:
    kind: RiskKind
    first_detected_at: dt.datetime
    outcome: OutcomeLabel
    decided_by: str | None = None

    def __post_init__(self) -> None:
        if self.outcome is OutcomeLabel.INDETERMINATE and self.kind is not RiskKind.MALWARE_INFECTION:
            raise ValueError("Indeterminate applies to malware infection only")
        if (self.decided_by is None) != (self.outcome is OutcomeLabel.NO_REDIAGNOSIS):
            raise ValueError("decided_by must be unset exactly for NoReDiagnosis")


@dataclass(frozen=True)
class ChainRecord:
    """The slice of a completed diagnosis that remediation accounting needs."""

    record_id: str
    completed_at: dt.datetime
    kinds: frozenset[RiskKind]
    device: tuple[str, str] | None = None  # (vendor, model) of the identification


def classify_remediation(
    chain: Sequence[ChainRecord],
    view: DecisionView = DecisionView.EARLIEST,
) -> list[RemediationOutcome]:
    """One outcome per risk kind present in the chain, in taxonomy order.

    The chain must be chronologically ordered and contain completed records
    of a single environment.
    """
    for earlier, later in zip(chain, chain[1:]):
        if later.completed_at < earlier.completed_at:
            raise ValueError("chain must be ordered by completion time")

    outcomes: list[RemediationOutcome] = []
    for kind in TAXONOMY_ORDER:
        detect_index = next((i for i, r in enumerate(chain) if kind in r.kinds), None)
        if detect_index is None:
            continue
        detect = chain[detect_index]
        later = list(chain[detect_index + 1 :])
        if not later:
            outcomes.append(
                RemediationOutcome(kind, detect.completed_at, OutcomeLabel.NO_REDIAGNOSIS)
            )
            continue

        if kind is RiskKind.MALWARE_INFECTION:
            qualifying = [
                r for r in later if r.completed_at - detect.completed_at >= MALWARE_DECISION_GAP
            ]
            if not qualifying:
                # Re-diagnosed, but always too soon for the sensor window to
                # have turned over; the last attempt is what we point at.
                outcomes.append(
                    RemediationOutcome(
                        kind,
                        detect.completed_at,
                        OutcomeLabel.INDETERMINATE,
                        decided_by=later[-1].record_id,
                    )
                )
                continue
            decider = qualifying[0] if view is DecisionView.EARLIEST else qualifying[-1]
            label = OutcomeLabel.PERSISTING if kind in decider.kinds else OutcomeLabel.REMEDIATED
            outcomes.append(
                RemediationOutcome(kind, detect.completed_at, label, decided_by=decider.record_id)
            )
            continue

        decider = later[0] if view is DecisionView.EARLIEST else later[-1]
        if kind in DEFAULT_CREDENTIAL_FAMILY and detect.device is not None:
            # Visibility rule: still identified means still at risk, whatever
            # the deciding record's findings say.
            persists = decider.device == detect.device
        else:
            persists = kind in decider.kinds
        outcomes.append(
            RemediationOutcome(
                kind,
                detect.completed_at,
                OutcomeLabel.PERSISTING if persists else OutcomeLabel.REMEDIATED,
                decided_by=decider.record_id,
            )
        )
    return outcomes


class AsnTable:
    """prefix -> AS number lookups with longest-prefix match; misses map to ASN 0."""

    def __init__(self, entries: Iterable[tuple[str, int]] = ()):
        self._networks: list[tuple[ipaddress.IPv4Network, int]] = []
        for prefix, asn in entries:
            network = ipaddress.IPv4Network(prefix, strict=False)
            if asn < 0:
                raise ValueError(f"negative ASN for {prefix}")
            self._networks.append((network, asn))
        self._networks.sort(key=lambda item: item[0].prefixlen, reverse=True)

    def lookup(self, address: str) -> int:
        try:
            addr = ipaddress.IPv4Address(address)
        except (ipaddress.AddressValueError, ValueError):
            return UNKNOWN_ASN
        for network, asn in self._networks:
            if addr in network:
                return asn
        return UNKNOWN_ASN

    @classmethod
    def load(cls, path: Path | str) -> "AsnTable":
        entries = []
        with open(path, newline="", encoding="utf-8") as handle:
            for row in csv.reader(handle):
                if not row or row[0].strip().startswith("#") or row[0].strip() == "prefix":
                    continue
                entries.append((row[0].strip(), int(row[1])))
        return cls(entries)


def group_by_environment(records, asn_table: AsnTable):
    """Partition one user's diagnosis records into per-ASN chronological chains.

    Records must expose user_email, target_address, completed_at/requested_at
    and an optional as_number recorded at diagnosis time (preferred over a
    fresh table lookup, since assignments drift).
    """
    emails = {r.user_email for r in records}
    if len(emails) > 1:
        raise ValueError(f"records span multiple users: {sorted(emails)}")
    groups: dict[EnvironmentKey, list] = {}
    for record in records:
        asn = getattr(record, "as_number", None)
        if asn is None:
            asn = asn_table.lookup(record.target_address)
        key = EnvironmentKey(user_email=record.user_email, as_number=asn)
        groups.setdefault(key, []).append(record)
    for chain in groups.values():
        chain.sort(key=lambda r: (r.completed_at or r.requested_at, r.record_id))
    return groups
