"""Non-intrusive probing and signature-based device identification.

Probing sends at most one benign application-layer request per port: a single
HTTP GET of / on web ports, a passive banner read elsewhere. No credentials
are ever tried and nothing is written to the device.
"""

from __future__ import annotations

import concurrent.futures
import datetime as dt
import ipaddress
import socket
import ssl
import threading
import time
from dataclasses import dataclass, field
from enum import Enum

from .config import ScanConfig
from .signatures import DeviceSignature, MatchRule, SignatureDatabase


class TelnetStatus(Enum):
    OPEN = "open"
    CLOSED = "closed"
    FILTERED = "filtered"


@dataclass(frozen=True)
class ProbeResponse:
    port: int
    transport_ok: bool
    raw_banner: bytes = b""
    http_status: int | None = None
    http_headers: tuple[tuple[str, str], ...] | None = None
    http_body_excerpt: bytes | None = None
    elapsed: dt.timedelta = dt.timedelta(0)
    # Recorded at probe time; lab emulators use ephemeral ports, so the class
    # cannot be recovered from the port number alone.
    port_class: str = "other"
    tls_name: str | None = None

    @property
    def is_http(self) -> bool:
        return self.http_status is not None


@dataclass(frozen=True)
class RiskFlags:
    """Risk booleans copied from the matched signature at identification time."""

    end_of_support: bool = False
    default_id_known: bool = False
    default_credential_known: bool = False
    weak_default_wifi_password: bool = False


@dataclass(frozen=True)
class DeviceIdentification:
    vendor: str
    series: str
    model: str
    matched_signature: str
    specificity: int
    release_year: int | None = None
    firmware_version: str | None = None
    flags: RiskFlags = field(default_factory=RiskFlags)

    def label(self) -> str:
        return f"{self.vendor} {self.model}"


@dataclass(frozen=True)
class IdentificationResult:
    identification: DeviceIdentification | None
    # Matching signatures, strongest first; >1 entry at the top specificity
    # means the scan was ambiguous and no identification is reported.
    candidates: tuple[tuple[str, str, str, int], ...] = field(default_factory=tuple)

    @property
    def ambiguous(self) -> bool:
        return self.identification is None and len(self.candidates) > 1


# One in-flight probe set per target; concurrent scans of the same device
# would break per-device rate expectations.
_target_locks: dict[str, threading.Lock] = {}
_target_locks_guard = threading.Lock()


def _lock_for_target(address: str) -> threading.Lock:
    with _target_locks_guard:
        return _target_locks.setdefault(address, threading.Lock())


def _read_until_timeout(sock: socket.socket, cap: int, deadline: float) -> bytes:
    chunks: list[bytes] = []
    size = 0
    while size < cap:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        sock.settimeout(remaining)
        try:
            chunk = sock.recv(min(4096, cap - size))
        except socket.timeout:
            break
        except OSError:
            break
        if not chunk:
            break
        chunks.append(chunk)
        size += len(chunk)
    return b"".join(chunks)


def _tls_peer_name(sock: ssl.SSLSocket) -> str | None:
    der = sock.getpeercert(binary_form=True)
    if not der:
        return None
    try:
        from cryptography import x509
        from cryptography.x509.oid import NameOID

        cert = x509.load_der_x509_certificate(der)
        names = cert.subject.get_attributes_for_oid(NameOID.COMMON_NAME)
        if names:
            return str(names[0].value)
    except Exception:
        return None
    return None


def _probe_one(address: str, port: int, timeout: dt.timedelta, config: ScanConfig) -> ProbeResponse:
    port_class = config.port_class(port)
    budget = timeout.total_seconds()
    started = time.monotonic()
    try:
        sock = socket.create_connection((address, port), timeout=budget)
    except OSError:
        return ProbeResponse(
            port=port,
            transport_ok=False,
            elapsed=dt.timedelta(seconds=time.monotonic() - started),
            port_class=port_class,
        )

    tls_name: str | None = None
    deadline = time.monotonic() + budget
    try:
        if port_class == "web_ui" and port in config.tls_ports:
            context = ssl.create_default_context()
            context.check_hostname = False
            context.verify_mode = ssl.CERT_NONE
            try:
                sock.settimeout(max(deadline - time.monotonic(), 0.01))
                sock = context.wrap_socket(sock, server_hostname=address)
                tls_name = _tls_peer_name(sock)
            except (ssl.SSLError, OSError, socket.timeout):
                return ProbeResponse(
                    port=port,
                    transport_ok=True,
                    elapsed=dt.timedelta(seconds=time.monotonic() - started),
                    port_class=port_class,
                )

        if port_class == "web_ui":
            request = (
                f"GET / HTTP/1.1\r\nHost: {address}\r\n"
                "User-Agent: iot-clinic/0.1\r\nAccept: */*\r\nConnection: close\r\n\r\n"
            ).encode("ascii")
            try:
                sock.sendall(request)
            except OSError:
                return ProbeResponse(
                    port=port,
                    transport_ok=True,
                    elapsed=dt.timedelta(seconds=time.monotonic() - started),
                    port_class=port_class,
                    tls_name=tls_name,
                )
            raw = _read_until_timeout(sock, config.body_cap + config.banner_cap, deadline)
            status, headers, body = _parse_http_response(raw)
            banner = raw.split(b"\r\n", 1)[0][: config.banner_cap]
            return ProbeResponse(
                port=port,
                transport_ok=True,
                raw_banner=banner,
                http_status=status,
                http_headers=headers,
                http_body_excerpt=body[: config.body_cap] if status is not None else None,
                elapsed=dt.timedelta(seconds=time.monotonic() - started),
                port_class=port_class,
                tls_name=tls_name,
            )

        banner = _read_until_timeout(sock, config.banner_cap, deadline)
        return ProbeResponse(
            port=port,
            transport_ok=True,
            raw_banner=banner,
            elapsed=dt.timedelta(seconds=time.monotonic() - started),
            port_class=port_class,
        )
    finally:
        try:
            sock.close()
        except OSError:
            pass


def _parse_http_response(
    raw: bytes,
) -> tuple[int | None, tuple[tuple[str, str], ...] | None, bytes]:
    if not raw.startswith(b"HTTP/"):
        return None, None, b""
    head, _, body = raw.partition(b"\r\n\r\n")
    lines = head.split(b"\r\n")
    parts = lines[0].split(None, 2)
    if len(parts) < 2:
        return None, None, b""
    try:
        status = int(parts[1])
    except ValueError:
        return None, None, b""
    headers: list[tuple[str, str]] = []
    for line in lines[1:]:
        name, sep, value = line.partition(b":")
        if not sep:
            continue
        headers.append((name.decode("latin-1").strip(), value.decode("latin-1").strip()))
    return status, tuple(headers), body


def probe(
    target: str,
    ports: tuple[int, ...] | list[int] | None = None,
    per_port_timeout: dt.timedelta | None = None,
    config: ScanConfig | None = None,
) -> list[ProbeResponse]:
    """One ProbeResponse per port, in input order; failures are encoded, never raised."""
    config = config or ScanConfig()
    ports = tuple(ports) if ports else config.ports
    if not ports:
        raise ValueError("ports must be non-empty")
    timeout = per_port_timeout or config.per_port_timeout
    if timeout <= dt.timedelta(0):
        raise ValueError("timeout must be positive")
    ipaddress.IPv4Address(target)

    with _lock_for_target(target):
        with concurrent.futures.ThreadPoolExecutor(max_workers=min(8, len(ports))) as pool:
            futures = [pool.submit(_probe_one, target, port, timeout, config) for port in ports]
            return [f.result() for f in futures]


def check_telnet(
    target: str,
    timeout: dt.timedelta = dt.timedelta(seconds=3),
    port: int = 23,
) -> TelnetStatus:
    """Open iff TCP connect succeeds; closed on active refusal; filtered on timeout."""
    if timeout <= dt.timedelta(0):
        raise ValueError("timeout must be positive")
    ipaddress.IPv4Address(target)
    try:
        sock = socket.create_connection((target, port), timeout=timeout.total_seconds())
    except ConnectionRefusedError:
        return TelnetStatus.CLOSED
    except OSError:
        # Timeouts and unreachable routes alike: nothing actively refused.
        return TelnetStatus.FILTERED
    sock.close()
    return TelnetStatus.OPEN


def _rule_texts(rule: MatchRule, response: ProbeResponse) -> list[str]:
    if rule.port_class != "any" and response.port_class != rule.port_class:
        return []
    if rule.field == "banner":
        return [response.raw_banner.decode("latin-1")]
    if not response.is_http:
        return []
    if rule.field == "http_status":
        return [str(response.http_status)]
    if rule.field == "http_header":
        headers = response.http_headers or ()
        if rule.header_name is not None:
            wanted = rule.header_name.lower()
            return [value for name, value in headers if name.lower() == wanted]
        return [f"{name}: {value}" for name, value in headers]
    if rule.field == "http_body":
        body = response.http_body_excerpt or b""
        return [body.decode("latin-1")]
    return []


def _rule_satisfied(rule: MatchRule, responses: list[ProbeResponse]) -> bool:
    return any(
        rule.compiled.search(text) for response in responses for text in _rule_texts(rule, response)
    )


def _extract_firmware(rule: MatchRule, responses: list[ProbeResponse]) -> str | None:
    for response in responses:
        for text in _rule_texts(rule, response):
            match = rule.compiled.search(text)
            if match:
                return match.group(1) if match.groups() else match.group(0)
    return None


def identify(responses: list[ProbeResponse], db: SignatureDatabase) -> IdentificationResult:
    """Best all-rules match wins; an exact specificity tie yields no identification.

    Unidentified is a normal outcome: the risk engine then limits itself to
    identification-independent findings.
    """
    matching: list[DeviceSignature] = [
        sig
        for sig in db
        if all(_rule_satisfied(rule, responses) for rule in sig.match_rules)
    ]
    matching.sort(key=lambda s: (-s.specificity, s.signature_id))
    candidates = tuple(
        (s.signature_id, s.vendor, s.model, s.specificity) for s in matching
    )
    if not matching:
        return IdentificationResult(identification=None, candidates=candidates)
    best = matching[0]
    if len(matching) > 1 and matching[1].specificity == best.specificity:
        return IdentificationResult(identification=None, candidates=candidates)
    firmware = (
        _extract_firmware(best.firmware_extract, responses) if best.firmware_extract else None
    )
    return IdentificationResult(
        identification=DeviceIdentification(
            vendor=best.vendor,
            series=best.series,
            model=best.model,
            matched_signature=best.signature_id,
            specificity=best.specificity,
            release_year=best.release_year,
            firmware_version=firmware,
            flags=RiskFlags(
                end_of_support=best.end_of_support,
                default_id_known=best.default_id_known,
                default_credential_known=best.default_credential_known,
                weak_default_wifi_password=best.weak_default_wifi_password,
            ),
        ),
        candidates=candidates,
    )
