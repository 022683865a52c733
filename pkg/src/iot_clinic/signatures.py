"""Device signature database: rules that map probe responses to vendor/model.

A signature matches only when every one of its rules is satisfied, so the
rule count doubles as the match specificity. The JSON file format mirrors
these dataclasses one to one.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

PORT_CLASSES = ("web_ui", "telnet", "any")
RULE_FIELDS = ("banner", "http_header", "http_body", "http_status")


class SignatureError(ValueError):
    """Signature file fails validation."""


@dataclass(frozen=True)
class MatchRule:
    port_class: str
    field: str
    pattern: str
    header_name: str | None = None

    def __post_init__(self) -> None:
        if self.port_class not in PORT_CLASSES:
            raise SignatureError(f"unknown port_class {self.port_class!r}")
        if self.field not in RULE_FIELDS:
            raise SignatureError(f"unknown field {self.field!r}")
        try:
            object.__setattr__(self, "_compiled", re.compile(self.pattern))
        except re.error as exc:
            raise SignatureError(f"bad pattern {self.pattern!r}: {exc}") from exc

    @property
    def compiled(self) -> re.Pattern[str]:
        return self._compiled  # type: ignore[attr-defined]


@dataclass(frozen=True)
class DeviceSignature:
    signature_id: str
    vendor: str
    series: str
    model: str
    match_rules: tuple[MatchRule, ...]
    release_year: int | None = None
    end_of_support: bool = False
    default_id_known: bool = False
    default_credential_known: bool = False
    weak_default_wifi_password: bool = False
    firmware_extract: MatchRule | None = None

    def __post_init__(self) -> None:
        if not self.match_rules:
            raise SignatureError(f"signature {self.signature_id!r} has no match rules")

    @property
    def specificity(self) -> int:
        return len(self.match_rules)


def _rule_from_dict(obj: dict, context: str) -> MatchRule:
    try:
        return MatchRule(
            port_class=obj.get("port_class", "any"),
            field=obj["field"],
            pattern=obj["pattern"],
            header_name=obj.get("header_name"),
        )
    except KeyError as exc:
        raise SignatureError(f"{context}: rule missing key {exc.args[0]!r}") from exc


def signature_from_dict(obj: dict) -> DeviceSignature:
    try:
        sig_id = obj["signature_id"]
        rules = tuple(
            _rule_from_dict(rule, f"signature {obj.get('signature_id')!r}")
            for rule in obj["match_rules"]
        )
        extract = obj.get("firmware_extract")
        return DeviceSignature(
            signature_id=sig_id,
            vendor=obj["vendor"],
            series=obj.get("series", ""),
            model=obj["model"],
            match_rules=rules,
            release_year=obj.get("release_year"),
            end_of_support=bool(obj.get("end_of_support", False)),
            default_id_known=bool(obj.get("default_id_known", False)),
            default_credential_known=bool(obj.get("default_credential_known", False)),
            weak_default_wifi_password=bool(obj.get("weak_default_wifi_password", False)),
            firmware_extract=_rule_from_dict(extract, f"signature {sig_id!r}") if extract else None,
        )
    except KeyError as exc:
        raise SignatureError(f"signature missing key {exc.args[0]!r}") from exc


@dataclass(frozen=True)
class SignatureDatabase:
    signatures: tuple[DeviceSignature, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        seen: set[tuple[str, str]] = set()
        ids: set[str] = set()
        for sig in self.signatures:
            key = (sig.vendor, sig.model)
            if key in seen:
                raise SignatureError(f"duplicate (vendor, model) {key!r}")
            if sig.signature_id in ids:
                raise SignatureError(f"duplicate signature_id {sig.signature_id!r}")
            seen.add(key)
            ids.add(sig.signature_id)

    def __len__(self) -> int:
        return len(self.signatures)

    def __iter__(self):
        return iter(self.signatures)

    def without(self, signature_id: str) -> "SignatureDatabase":
        return SignatureDatabase(
            tuple(s for s in self.signatures if s.signature_id != signature_id)
        )

    @classmethod
    def loads(cls, text: str) -> "SignatureDatabase":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SignatureError(f"signature file is not valid JSON: {exc}") from exc
        if not isinstance(data, list):
            raise SignatureError("signature file must be a JSON array")
        return cls(tuple(signature_from_dict(obj) for obj in data))

    @classmethod
    def load(cls, path: Path | str) -> "SignatureDatabase":
        return cls.loads(Path(path).read_text(encoding="utf-8"))
