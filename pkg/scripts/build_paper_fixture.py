#!/usr/bin/env python3
"""Build fixtures/paper_table3.jsonl, the synthetic accounting fixture.

The log is constructed so that user-level funnel counts and per-risk
remediation ratios land exactly on the published reference values the
analytics suite asserts:

  malware cohort            171 with issues / 67 qualifying re-diagnoses / 59 remediated
  all vulnerabilities       417 / 151 / 75
  excluding default family  311 / 117 / 59

plus per-risk re-diagnosis/remediation pairs (e.g. 59/67 malware, 15/51
telnet, 0/0 no-authentication) and per-risk detection totals. It validates
the accounting pipeline, not detection. Every construction decision below is
budgeted and asserted; if an edit breaks a target, this script fails loudly.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from collections import Counter
from pathlib import Path

BASE = dt.datetime(2023, 6, 1, tzinfo=dt.timezone.utc)
OUT = Path(__file__).resolve().parents[1] / "fixtures" / "paper_table3.jsonl"

MAL = "MalwareInfection"
TEL = "RiskyProtocolTelnet"
EOS = "EndOfSupport"
ADM = "AdminPasswordNotSet"
KV = "KnownVulnerability"
OFW = "OldFirmware"
DID = "KnownDefaultId"
DCR = "KnownDefaultCredential"
WIFI = "WeakDefaultWifiPassword"
NOA = "NoAuthentication"

DEFAULT_FAMILY = {DID, DCR, WIFI}

# Targets: (rediagnosed, remediated) per risk.
RISK_TARGETS = {
    MAL: (67, 59),
    DID: (55, 27),
    OFW: (40, 23),
    TEL: (51, 15),
    DCR: (36, 25),
    EOS: (31, 25),
    WIFI: (13, 8),
    KV: (12, 6),
    ADM: (1, 1),
    NOA: (0, 0),
}

# Targets: detections per risk (users having the risk at least once).
DETECTED_TARGETS = {
    MAL: 171,
    DID: 154,
    OFW: 113,
    TEL: 121,
    DCR: 102,
    EOS: 86,
    WIFI: 37,
    KV: 29,
    ADM: 2,
    NOA: 1,
}

FUNNEL_TARGETS = {
    "malware": (171, 67, 59),
    "vul_all": (417, 151, 75),
    "vul_excluding_default_family": (311, 117, 59),
}


class Builder:
    def __init__(self) -> None:
        self.lines: list[str] = []
        self.user_seq = 0
        self.record_seq = 0
        # bookkeeping for assertions
        self.detected: Counter = Counter()
        self.rediagnosed: Counter = Counter()
        self.remediated: Counter = Counter()
        self.users_mal = [0, 0, 0]
        self.users_vul = [0, 0, 0]
        self.users_vul_exc = [0, 0, 0]

    def _emit(self, email_hash: str, asn: int, offset_hours: float, kinds, device) -> None:
        self.record_seq += 1
        completed = BASE + dt.timedelta(hours=offset_hours)
        self.lines.append(
            json.dumps(
                {
                    "record_id": self.record_seq,
                    "email_hash": email_hash,
                    "asn": asn,
                    "requested_at": (completed - dt.timedelta(minutes=2)).isoformat(),
                    "completed_at": completed.isoformat(),
                    "findings": sorted(kinds),
                    "device": list(device) if device else None,
                }
            )
        )

    def user(self, records, rem_kinds=frozenset(), rediag_kinds=frozenset()):
        """records: list of (kinds, device); spaced 37 minutes apart per user.

        rem_kinds / rediag_kinds are this user's by-construction contributions
        to the per-risk counters (the analytics recomputes them from scratch).
        """
        self.user_seq += 1
        email_hash = hashlib.sha256(f"user{self.user_seq:04d}@example.test".encode()).hexdigest()
        asn = (64500, 64501, 64502)[self.user_seq % 3]
        base_offset = self.user_seq * 0.62  # spread users out
        for kinds, device, gap_hours in records:
            self._emit(email_hash, asn, base_offset + gap_hours, kinds, device)

        all_kinds = set().union(*(set(k) for k, _, _ in records))
        for kind in all_kinds:
            self.detected[kind] += 1
        for kind in rediag_kinds:
            self.rediagnosed[kind] += 1
        for kind in rem_kinds:
            self.remediated[kind] += 1

        vul_kinds = all_kinds - {MAL}
        nd_kinds = vul_kinds - DEFAULT_FAMILY
        if MAL in all_kinds:
            self.users_mal[0] += 1
            if MAL in rediag_kinds:
                self.users_mal[1] += 1
            if MAL in rem_kinds:
                self.users_mal[2] += 1
        if vul_kinds:
            self.users_vul[0] += 1
            if rediag_kinds & vul_kinds:
                self.users_vul[1] += 1
            if rem_kinds & vul_kinds:
                self.users_vul[2] += 1
        if nd_kinds:
            self.users_vul_exc[0] += 1
            if rediag_kinds & nd_kinds:
                self.users_vul_exc[1] += 1
            if rem_kinds & nd_kinds:
                self.users_vul_exc[2] += 1

    def device(self) -> tuple[str, str]:
        vendors = ("Aether Networks", "HarborStor", "Owlsight", "Bastion Labs", "Northgate")
        return (vendors[self.user_seq % 5], f"Model-{self.user_seq % 23:02d}")


def vul_pair(b: Builder, kinds: set[str], outcome: str, gap: float = 30.0) -> None:
    """Detection record plus one deciding re-diagnosis for vulnerability kinds."""
    device = b.device()
    if outcome == "rem":
        # Device replaced or taken offline: everything clears, including the
        # default-credential family (no longer visible).
        b.user(
            [(kinds, device, 0.0), (set(), None, gap)],
            rem_kinds=frozenset(kinds),
            rediag_kinds=frozenset(kinds),
        )
    elif outcome == "rem_same_device":
        # Fixable without replacement (firmware updated, telnet disabled):
        # only valid for kinds decided by finding presence.
        assert not (kinds & DEFAULT_FAMILY) and EOS not in kinds
        b.user(
            [(kinds, device, 0.0), (set(), device, gap)],
            rem_kinds=frozenset(kinds),
            rediag_kinds=frozenset(kinds),
        )
    elif outcome == "persist":
        b.user(
            [(kinds, device, 0.0), (kinds, device, gap)],
            rem_kinds=frozenset(),
            rediag_kinds=frozenset(kinds),
        )
    else:
        raise AssertionError(outcome)


def vul_single_record(b: Builder, kinds: set[str]) -> None:
    b.user([(kinds, b.device(), 0.0)])


def main() -> None:
    b = Builder()

    # ---- malware users (171) -----------------------------------------------
    for _ in range(59):  # clean at a qualifying >= 24 h re-diagnosis
        b.user(
            [({MAL}, None, 0.0), (set(), None, 30.0)],
            rem_kinds={MAL},
            rediag_kinds={MAL},
        )
    for _ in range(8):  # still sighted at the qualifying re-diagnosis
        b.user([({MAL}, None, 0.0), ({MAL}, None, 30.0)], rediag_kinds={MAL})
    for _ in range(41):  # re-diagnosed too early (< 24 h): cannot decide
        b.user([({MAL}, None, 0.0), (set(), None, 12.0)])
    for _ in range(60):  # never came back
        b.user([({MAL}, None, 0.0)])
    # three users had both malware and a vulnerability; they never re-diagnosed
    for _ in range(3):
        b.user([({MAL, TEL}, None, 0.0)])

    # ---- vulnerability users who re-diagnosed (151) --------------------------
    # Singles, remediated in place (4): firmware fixed / telnet stopped.
    vul_pair(b, {ADM}, "rem_same_device", gap=18.0)
    vul_pair(b, {KV}, "rem_same_device", gap=18.0)
    vul_pair(b, {OFW}, "rem_same_device", gap=18.0)
    vul_pair(b, {TEL}, "rem_same_device", gap=30.0)

    # Singles, still detected (25).
    for kind, n in ((TEL, 15), (OFW, 5), (KV, 3), (EOS, 2)):
        for _ in range(n):
            vul_pair(b, {kind}, "persist")

    # Default-family singles: 16 remediated by replacement, 18 persisting.
    for kind, n in ((DID, 6), (DCR, 7), (WIFI, 3)):
        for _ in range(n):
            vul_pair(b, {kind}, "rem")
    for kind, n in ((DID, 12), (DCR, 4), (WIFI, 2)):
        for _ in range(n):
            vul_pair(b, {kind}, "persist")

    # Two non-default risks, both cleared by replacement (11 pairs).
    for pair, n in (((EOS, OFW), 6), ((EOS, TEL), 5)):
        for _ in range(n):
            vul_pair(b, set(pair), "rem", gap=18.0 if b.user_seq % 2 else 30.0)

    # Two non-default risks, both persisting (7 pairs).
    for pair, n in (((TEL, OFW), 5), ((TEL, KV), 2)):
        for _ in range(n):
            vul_pair(b, set(pair), "persist")

    # Mixed default + non-default, both cleared by replacement (44 pairs).
    nd_rem = [EOS] * 14 + [OFW] * 16 + [TEL] * 9 + [KV] * 5
    def_rem = [DID] * 21 + [DCR] * 18 + [WIFI] * 5
    assert len(nd_rem) == len(def_rem) == 44
    for nd, df in zip(nd_rem, def_rem):
        vul_pair(b, {nd, df}, "rem", gap=18.0 if b.user_seq % 2 else 30.0)

    # Mixed default + non-default, both persisting (26 pairs).
    nd_per = [OFW] * 7 + [TEL] * 14 + [EOS] * 4 + [KV] * 1
    def_per = [DID] * 16 + [DCR] * 7 + [WIFI] * 3
    assert len(nd_per) == len(def_per) == 26
    for nd, df in zip(nd_per, def_per):
        vul_pair(b, {nd, df}, "persist")

    # ---- vulnerability users who never re-diagnosed (263 more) ----------------
    # (plus the 3 malware-overlap users above = 266 total, 417 vul users overall)
    # Non-default singles (108 here; 111 with the 3 overlap telnet users).
    for kind, n in ((OFW, 33), (TEL, 30), (EOS, 29), (KV, 14), (ADM, 1), (NOA, 1)):
        for _ in range(n):
            vul_single_record(b, {kind})
    # Non-default pairs (23).
    for pair, n in (((TEL, OFW), 12), ((EOS, OFW), 8), ((EOS, KV), 3)):
        for _ in range(n):
            vul_single_record(b, set(pair))
    # Mixed non-default + default pairs (60).
    nd_mix = [OFW] * 20 + [TEL] * 25 + [EOS] * 15
    def_mix = [DID] * 40 + [DCR] * 15 + [WIFI] * 5
    assert len(nd_mix) == len(def_mix) == 60
    for nd, df in zip(nd_mix, def_mix):
        vul_single_record(b, {nd, df})
    # Default-family-only users (72): 57 pairs + 15 singles.
    for pair, n in (((DID, DCR), 40), ((DID, WIFI), 10), ((DCR, WIFI), 7)):
        for _ in range(n):
            vul_single_record(b, set(pair))
    for kind, n in ((DID, 9), (DCR, 4), (WIFI, 2)):
        for _ in range(n):
            vul_single_record(b, {kind})

    # ---- a few clean users for realism ----------------------------------------
    for _ in range(3):
        b.user([(set(), None, 0.0), (set(), None, 48.0)])

    # ---- assert every budget ----------------------------------------------------
    for kind, (rediag, rem) in RISK_TARGETS.items():
        assert b.rediagnosed[kind] == rediag, (kind, b.rediagnosed[kind], rediag)
        assert b.remediated[kind] == rem, (kind, b.remediated[kind], rem)
    for kind, detected in DETECTED_TARGETS.items():
        assert b.detected[kind] == detected, (kind, b.detected[kind], detected)
    assert tuple(b.users_mal) == FUNNEL_TARGETS["malware"], b.users_mal
    assert tuple(b.users_vul) == FUNNEL_TARGETS["vul_all"], b.users_vul
    assert tuple(b.users_vul_exc) == FUNNEL_TARGETS["vul_excluding_default_family"], b.users_vul_exc
    # 171 + 417 - 3 shared users
    users_with_issues = b.users_mal[0] + b.users_vul[0] - 3
    assert users_with_issues == 585, users_with_issues

    OUT.write_text("".join(line + "\n" for line in b.lines), encoding="utf-8")
    print(f"wrote {OUT.name}: {len(b.lines)} events, {b.user_seq} users")
    print(f"  malware   {b.users_mal}")
    print(f"  vul(all)  {b.users_vul}")
    print(f"  vul(exc)  {b.users_vul_exc}")


if __name__ == "__main__":
    main()
