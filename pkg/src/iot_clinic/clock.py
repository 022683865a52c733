"""Injectable time source so schedulers and stores can run on a simulated clock."""

from __future__ import annotations

import datetime as dt
from typing import Protocol


def utcnow() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc).replace(microsecond=0)


class Clock(Protocol):
    def now(self) -> dt.datetime: ...


class SystemClock:
    def now(self) -> dt.datetime:
        return utcnow()


class ManualClock:
    """Test clock: starts at a fixed instant and only moves when told to."""

    def __init__(self, start: dt.datetime):
        if start.tzinfo is None:
            raise ValueError("ManualClock requires an aware datetime")
        self._now = start

    def now(self) -> dt.datetime:
        return self._now

    def advance(self, delta: dt.timedelta) -> dt.datetime:
        self._now = self._now + delta
        return self._now

    def set(self, instant: dt.datetime) -> None:
        if instant.tzinfo is None:
            raise ValueError("ManualClock requires an aware datetime")
        self._now = instant


def parse_rfc3339(value: str) -> dt.datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime.

    Python 3.10's fromisoformat does not accept a trailing 'Z', so normalize it.
    """
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    parsed = dt.datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        raise ValueError(f"timestamp missing UTC offset: {value!r}")
    return parsed.astimezone(dt.timezone.utc)


def format_rfc3339(value: dt.datetime) -> str:
    if value.tzinfo is None:
        raise ValueError("naive datetime cannot be serialized")
    return value.astimezone(dt.timezone.utc).isoformat()
