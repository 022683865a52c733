#!/usr/bin/env python3
"""Regenerate the emulator banner fixtures under fixtures/banners/.

HTTP fixtures are complete wire responses (CRLF head, close-delimited body)
so the emulators can replay them byte for byte.
"""

from __future__ import annotations

from pathlib import Path

BANNERS = Path(__file__).resolve().parents[1] / "fixtures" / "banners"


def http_response(server: str, title: str, body_extra: str = "") -> bytes:
    body = (
        f"<html><head><title>{title}</title></head>\n"
        f"<body><h1>{title}</h1>\n{body_extra}</body></html>\n"
    ).encode("utf-8")
    head = (
        "HTTP/1.1 200 OK\r\n"
        f"Server: {server}\r\n"
        "Content-Type: text/html; charset=utf-8\r\n"
        f"Content-Length: {len(body)}\r\n"
        "Connection: close\r\n"
        "\r\n"
    ).encode("ascii")
    return head + body


FIXTURES: dict[str, bytes] = {
    "aether_ar1200_http.bin": http_response(
        "AetherHTTPd/1.4", "AR-1200 Home Gateway", "<p>Aether Networks AR-1200 login</p>\n"
    ),
    "aether_ar2400_http.bin": http_response(
        "AetherHTTPd/2.1", "AR-2400 Wireless Router", "<p>Aether Networks AR-2400 setup</p>\n"
    ),
    "aether_ar3000_http.bin": http_response(
        "AetherHTTPd/3.0", "AR-3000 Mesh Router", "<p>Aether Networks AR-3000 console</p>\n"
    ),
    "northgate_w31_http.bin": http_response(
        "NorthgateWeb/0.9", "WaveLink W31 Admin", "<p>Northgate WaveLink W31</p>\n"
    ),
    "northgate_telnet.txt": b"\r\nWaveLink W31 management console\r\nlogin: ",
    "kestrel_kr500_http.bin": http_response(
        "Kestrel-embedded/1.0", "KR-500 Router", "<p>Kestrel Systems KR-500</p>\n"
    ),
    "harborstor_hs220_http.bin": http_response(
        "HarborStor-UI/5.2", "HS-220 Storage Manager", "<p>HarborStor HS-220</p>\n"
    ),
    "harborstor_hs453_http.bin": http_response(
        "HarborStor-UI/7.0",
        "HS-453 Storage Manager",
        "<p>HarborStor HS-453</p>\n<p>Firmware 4.2.1</p>\n",
    ),
    "bluevault_nv2_http.bin": http_response(
        "BlueVaultWeb/2.3", "NV-2 Private Cloud", "<p>BlueVault NV-2</p>\n"
    ),
    "bluevault_nv2_banner.txt": b"220 BlueVault NV-2 file service ready\r\n",
    "owlsight_oc30_http.bin": http_response(
        "Owlsight-httpd/1.1", "OC-30 Network Camera", "<p>Owlsight OC-30 live view</p>\n"
    ),
    "owlsight_oc45_http.bin": http_response(
        "Owlsight-httpd/2.4", "OC-45 Network Camera", "<p>Owlsight OC-45 live view</p>\n"
    ),
    "meridian_m10_http.bin": http_response(
        "MeridianCam/0.7", "M10 Viewer", "<p>Meridian Optics M10</p>\n"
    ),
    "bastion_fg60_http.bin": http_response(
        "BastionOS-web", "FG-60 Security Gateway", "<p>BastionOS 5.2.8 on FG-60</p>\n"
    ),
    "bastion_fg60_banner.txt": b"BastionSSH-2.0 FG-60\r\n",
    "bastion_fg100_http.bin": http_response(
        "BastionOS-web", "FG-100 Security Gateway", "<p>BastionOS 7.1.3 on FG-100</p>\n"
    ),
    "telnet_login.txt": b"\r\nlogin: ",
}


def main() -> None:
    BANNERS.mkdir(parents=True, exist_ok=True)
    for name, payload in FIXTURES.items():
        (BANNERS / name).write_bytes(payload)
        print(f"wrote {name} ({len(payload)} bytes)")


if __name__ == "__main__":
    main()
