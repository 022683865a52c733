#!/usr/bin/env python3
"""Regenerate the device profile corpus under fixtures/profiles/."""

from __future__ import annotations

import json
from pathlib import Path

PROFILES_DIR = Path(__file__).resolve().parents[1] / "fixtures" / "profiles"

PROFILES = [
    {
        "profile_id": "aether_ar1200",
        "category": "router",
        "listeners": [
            {"port": 8080, "behavior": "http_fixture", "fixture_ref": "aether_ar1200_http.bin"}
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "Aether Networks", "model": "AR-1200"},
        "expected_risks": ["EndOfSupport", "KnownDefaultId"],
    },
    {
        "profile_id": "aether_ar2400",
        "category": "router",
        "listeners": [
            {"port": 80, "behavior": "http_fixture", "fixture_ref": "aether_ar2400_http.bin"}
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "Aether Networks", "model": "AR-2400"},
        "expected_risks": ["WeakDefaultWifiPassword"],
    },
    {
        "profile_id": "aether_ar3000_clean",
        "category": "router",
        "listeners": [
            {"port": 80, "behavior": "http_fixture", "fixture_ref": "aether_ar3000_http.bin"}
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "Aether Networks", "model": "AR-3000"},
        "expected_risks": [],
    },
    {
        "profile_id": "northgate_w31",
        "category": "router",
        "listeners": [
            {"port": 80, "behavior": "http_fixture", "fixture_ref": "northgate_w31_http.bin"},
            {"port": 23, "behavior": "raw_banner", "fixture_ref": "northgate_telnet.txt"},
        ],
        "telnet_open": True,
        "expected_identification": {"vendor": "Northgate", "model": "W31"},
        "expected_risks": ["RiskyProtocolTelnet", "KnownDefaultCredential"],
    },
    {
        "profile_id": "kestrel_kr500",
        "category": "router",
        "listeners": [
            {"port": 8080, "behavior": "http_fixture", "fixture_ref": "kestrel_kr500_http.bin"}
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "Kestrel Systems", "model": "KR-500"},
        "expected_risks": ["EndOfSupport", "KnownVulnerability"],
    },
    {
        "profile_id": "harborstor_hs220",
        "category": "nas",
        "listeners": [
            {"port": 8080, "behavior": "http_fixture", "fixture_ref": "harborstor_hs220_http.bin"}
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "HarborStor", "model": "HS-220"},
        "expected_risks": ["EndOfSupport", "KnownDefaultCredential"],
    },
    {
        "profile_id": "harborstor_hs453",
        "category": "nas",
        "listeners": [
            {"port": 8080, "behavior": "http_fixture", "fixture_ref": "harborstor_hs453_http.bin"}
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "HarborStor", "model": "HS-453"},
        "expected_risks": ["OldFirmware"],
    },
    {
        "profile_id": "bluevault_nv2",
        "category": "nas",
        "listeners": [
            {"port": 80, "behavior": "http_fixture", "fixture_ref": "bluevault_nv2_http.bin"},
            {"port": 2121, "behavior": "raw_banner", "fixture_ref": "bluevault_nv2_banner.txt"},
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "BlueVault", "model": "NV-2"},
        "expected_risks": ["KnownDefaultId"],
    },
    {
        "profile_id": "owlsight_oc30",
        "category": "web_camera",
        "listeners": [
            {"port": 80, "behavior": "http_fixture", "fixture_ref": "owlsight_oc30_http.bin"}
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "Owlsight", "model": "OC-30"},
        "expected_risks": ["EndOfSupport", "KnownDefaultCredential"],
    },
    {
        "profile_id": "owlsight_oc45",
        "category": "web_camera",
        "listeners": [
            {"port": 80, "behavior": "http_fixture", "fixture_ref": "owlsight_oc45_http.bin"}
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "Owlsight", "model": "OC-45"},
        "expected_risks": ["KnownVulnerability"],
    },
    {
        "profile_id": "meridian_m10",
        "category": "web_camera",
        "listeners": [
            {"port": 80, "behavior": "http_fixture", "fixture_ref": "meridian_m10_http.bin"}
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "Meridian Optics", "model": "M10"},
        "expected_risks": ["NoAuthentication"],
    },
    {
        "profile_id": "bastion_fg60",
        "category": "firewall",
        "listeners": [
            {"port": 8080, "behavior": "http_fixture", "fixture_ref": "bastion_fg60_http.bin"},
            {"port": 4444, "behavior": "raw_banner", "fixture_ref": "bastion_fg60_banner.txt"},
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "Bastion Labs", "model": "FG-60"},
        "expected_risks": ["OldFirmware"],
    },
    {
        "profile_id": "bastion_fg100",
        "category": "firewall",
        "listeners": [
            {"port": 8080, "behavior": "http_fixture", "fixture_ref": "bastion_fg100_http.bin"}
        ],
        "telnet_open": False,
        "expected_identification": {"vendor": "Bastion Labs", "model": "FG-100"},
        "expected_risks": ["AdminPasswordNotSet", "KnownVulnerability"],
    },
]


def main() -> None:
    PROFILES_DIR.mkdir(parents=True, exist_ok=True)
    for profile in PROFILES:
        path = PROFILES_DIR / f"{profile['profile_id']}.json"
        path.write_text(json.dumps(profile, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path.name}")


if __name__ == "__main__":
    main()
