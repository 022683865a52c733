"""Desk-scale test substrate: emulated devices and synthetic sighting logs.

Emulators bind loopback only and serve fixture bytes verbatim, so the repo
never scans anything but itself by default. Each listener keeps connection
and request counters so tests can hold the scanner to its one-benign-request
budget.
"""

from __future__ import annotations

import datetime as dt
import json
import socket
import threading
from dataclasses import dataclass
from pathlib import Path

from .clock import format_rfc3339, utcnow
from .config import default_fixture_dir
from .risks import RiskKind

BEHAVIORS = ("http_fixture", "raw_banner", "stall", "refuse")


class LabError(RuntimeError):
    pass


@dataclass(frozen=True)
class ListenerSpec:
    port: int
    behavior: str
    fixture_ref: str | None = None

    def __post_init__(self) -> None:
        if self.behavior not in BEHAVIORS:
            raise LabError(f"unknown behavior {self.behavior!r}")
        if self.behavior in ("http_fixture", "raw_banner") and not self.fixture_ref:
            raise LabError(f"behavior {self.behavior} needs a fixture_ref")


@dataclass(frozen=True)
class DeviceProfile:
    profile_id: str
    listeners: tuple[ListenerSpec, ...]
    telnet_open: bool
    expected_vendor: str
    expected_model: str
    expected_risks: tuple[RiskKind, ...] = ()
    category: str = "router"

    @classmethod
    def from_dict(cls, obj: dict) -> "DeviceProfile":
        return cls(
            profile_id=obj["profile_id"],
            listeners=tuple(
                ListenerSpec(
                    port=l["port"], behavior=l["behavior"], fixture_ref=l.get("fixture_ref")
                )
                for l in obj["listeners"]
            ),
            telnet_open=bool(obj.get("telnet_open", False)),
            expected_vendor=obj["expected_identification"]["vendor"],
            expected_model=obj["expected_identification"]["model"],
            expected_risks=tuple(RiskKind(k) for k in obj.get("expected_risks", [])),
            category=obj.get("category", "router"),
        )

    @classmethod
    def load(cls, path: Path | str) -> "DeviceProfile":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_profiles(directory: Path | str | None = None) -> list[DeviceProfile]:
    directory = Path(directory) if directory else default_fixture_dir() / "profiles"
    return [DeviceProfile.load(p) for p in sorted(directory.glob("*.json"))]


class _Listener(threading.Thread):
    def __init__(self, handle: "EmulatorHandle", spec: ListenerSpec, payload: bytes):
        super().__init__(daemon=True)
        self.handle = handle
        self.spec = spec
        self.payload = payload
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self.sock.bind(("127.0.0.1", 0))
        except OSError as exc:
            raise LabError(f"cannot bind listener for port {spec.port}: {exc}") from exc
        self.sock.listen(8)
        self.bound_port = self.sock.getsockname()[1]
        self._stopping = threading.Event()

    def run(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            self.handle._count_connection(self.spec.port)
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn: socket.socket) -> None:
        try:
            if self.spec.behavior == "raw_banner":
                conn.sendall(self.payload)
            elif self.spec.behavior == "stall":
                # Accept and go silent; the scanner's read must time out.
                self._stopping.wait(timeout=30)
            elif self.spec.behavior == "http_fixture":
                conn.settimeout(5)
                data = b""
                while b"\r\n\r\n" not in data and len(data) < 16384:
                    chunk = conn.recv(4096)
                    if not chunk:
                        break
                    data += chunk
                if data:
                    self.handle._count_request(self.spec.port)
                conn.sendall(self.payload)
        except OSError:
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def stop(self) -> None:
        self._stopping.set()
        try:
            self.sock.close()
        except OSError:
            pass


class EmulatorHandle:
    """A running emulated device; maps profile ports to bound loopback ports."""

    def __init__(self, profile: DeviceProfile):
        self.profile = profile
        self.address = "127.0.0.1"
        self.port_map: dict[int, int] = {}
        self.telnet_port: int | None = None
        # A loopback port guaranteed to refuse connections (reserved, not bound).
        self.refused_port: int = _reserve_port()
        self._listeners: list[_Listener] = []
        self._counter_lock = threading.Lock()
        self.connection_counts: dict[int, int] = {}
        self.request_counts: dict[int, int] = {}

    def _count_connection(self, profile_port: int) -> None:
        with self._counter_lock:
            self.connection_counts[profile_port] = self.connection_counts.get(profile_port, 0) + 1

    def _count_request(self, profile_port: int) -> None:
        with self._counter_lock:
            self.request_counts[profile_port] = self.request_counts.get(profile_port, 0) + 1

    def port_for(self, profile_port: int) -> int:
        return self.port_map[profile_port]

    @property
    def scan_ports(self) -> tuple[int, ...]:
        return tuple(self.port_map[spec.port] for spec in self.profile.listeners)

    def stop(self) -> None:
        for listener in self._listeners:
            listener.stop()

    def __enter__(self) -> "EmulatorHandle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def _reserve_port() -> int:
    """Pick a loopback port and leave it unbound: connects there get refused."""
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return port


def spawn(profile: DeviceProfile, fixture_dir: Path | str | None = None) -> EmulatorHandle:
    """Start all of a profile's listeners on ephemeral loopback ports."""
    banners = Path(fixture_dir) if fixture_dir else default_fixture_dir() / "banners"
    handle = EmulatorHandle(profile)
    specs = list(profile.listeners)
    if profile.telnet_open and not any(s.port == 23 for s in specs):
        specs.append(ListenerSpec(port=23, behavior="raw_banner", fixture_ref="telnet_login.txt"))
    for spec in specs:
        if spec.behavior == "refuse":
            handle.port_map[spec.port] = _reserve_port()
            continue
        payload = b""
        if spec.fixture_ref:
            fixture_path = banners / spec.fixture_ref
            if not fixture_path.is_file():
                raise LabError(f"fixture {fixture_path} not found")
            payload = fixture_path.read_bytes()
        listener = _Listener(handle, spec, payload)
        handle._listeners.append(listener)
        handle.port_map[spec.port] = listener.bound_port
        if spec.port == 23:
            handle.telnet_port = listener.bound_port
        listener.start()
    return handle


def scan_config_for(handle: EmulatorHandle, timeout: dt.timedelta = dt.timedelta(seconds=2)):
    """ScanConfig aimed at an emulator's actual (ephemeral) port bindings."""
    from .config import ScanConfig

    web_ports = set()
    ports = []
    for spec in handle.profile.listeners:
        bound = handle.port_map[spec.port]
        ports.append(bound)
        if spec.behavior == "http_fixture":
            web_ports.add(bound)
    if handle.telnet_port and handle.telnet_port not in ports:
        ports.append(handle.telnet_port)  # passive banner read, status via check_telnet
    return ScanConfig(
        ports=tuple(ports),
        telnet_port=handle.telnet_port if handle.telnet_port else handle.refused_port,
        web_ports=frozenset(web_ports),
        tls_ports=frozenset(),
        per_port_timeout=timeout,
    )


@dataclass(frozen=True)
class ScenarioSighting:
    address: str
    offset: dt.timedelta  # relative to the scenario's reference instant
    sensor: str = "darknet"
    detail: str = ""


@dataclass(frozen=True)
class ScenarioQuery:
    address: str
    offset: dt.timedelta = dt.timedelta(0)


@dataclass(frozen=True)
class ExpectedVerdict:
    address: str
    query_time: dt.datetime
    infected: bool
    evidence_count: int


@dataclass(frozen=True)
class ScenarioSpec:
    sightings: tuple[ScenarioSighting, ...]
    queries: tuple[ScenarioQuery, ...]
    window: dt.timedelta = dt.timedelta(hours=24)


@dataclass(frozen=True)
class Scenario:
    log_lines: tuple[str, ...]
    expected: tuple[ExpectedVerdict, ...]

    def write_log(self, path: Path | str) -> Path:
        path = Path(path)
        path.write_text("".join(line + "\n" for line in self.log_lines), encoding="utf-8")
        return path


def generate_scenario(spec: ScenarioSpec, now: dt.datetime | None = None) -> Scenario:
    """Emit a sighting JSONL plus ground-truth verdicts for the stated queries.

    The expected verdicts come from a direct interval check over the scenario
    tuples themselves, independent of the sighting store implementation.
    """
    now = now or utcnow()
    lines = []
    placed: list[tuple[str, dt.datetime]] = []
    for s in spec.sightings:
        observed = now + s.offset
        placed.append((s.address, observed))
        lines.append(
            json.dumps(
                {
                    "src": s.address,
                    "ts": format_rfc3339(observed),
                    "sensor": s.sensor,
                    "detail": s.detail or "synthetic scenario sighting",
                },
                separators=(", ", ": "),
            )
        )
    expected = []
    for q in spec.queries:
        query_time = now + q.offset
        hits = sum(
            1
            for address, observed in placed
            if address == q.address and query_time - spec.window < observed <= query_time
        )
        expected.append(
            ExpectedVerdict(
                address=q.address,
                query_time=query_time,
                infected=hits > 0,
                evidence_count=hits,
            )
        )
    return Scenario(log_lines=tuple(lines), expected=tuple(expected))
