"""Wall-clock switch instants (EMS rotation happens at a local hour)."""

from __future__ import annotations

from datetime import datetime, timedelta, tzinfo
from typing import Optional


def switch_instant(day: datetime, tz: Optional[tzinfo], hour: int = 15) -> datetime:
    """The switch instant on the local calendar day containing ``day``."""
    local = day.astimezone(tz) if tz is not None else day
    return local.replace(hour=hour, minute=0, second=0, microsecond=0)


def next_switch(t: datetime, tz: Optional[tzinfo], hour: int = 15) -> datetime:
    """First switch instant strictly after ``t`` (DST-safe via wall clock)."""
    candidate = switch_instant(t, tz, hour)
    while candidate <= t:
        candidate = switch_instant(candidate + timedelta(days=1), tz, hour)
    return candidate


def prev_switch(t: datetime, tz: Optional[tzinfo], hour: int = 15) -> datetime:
    """Last switch instant at or before ``t``."""
    candidate = switch_instant(t, tz, hour)
    while candidate > t:
        candidate = switch_instant(candidate - timedelta(days=1), tz, hour)
    return candidate
