"""The fair-comparison protocol: daily EMS rotation across the four houses.

Each experiment day assigns a permutation of the four EMSs to the four
houses. The 48-day schedule tests every permutation exactly twice while
never giving the learning-dependent EMSs (exploration stub, MPC) the same
house on consecutive days. EV sessions that would span the 15:00 switch are
shortened to their longer side.
"""

from __future__ import annotations

import itertools
import logging
import random
from dataclasses import dataclass
from datetime import tzinfo
from typing import Optional

from hemsim.assets import EvSession
from hemsim.clock import next_switch

log = logging.getLogger(__name__)

EMS_NAMES = ("rl-stub", "rbc", "treec", "mpc")
STATEFUL_EMS = ("rl-stub", "mpc")

# A day assignment maps house 1..4 to the EMS at index house-1.
DayAssignment = tuple[str, str, str, str]

_ALL_ASSIGNMENTS: list[DayAssignment] = sorted(itertools.permutations(EMS_NAMES))

MAX_ATTEMPTS = 10_000


@dataclass(frozen=True)
class Schedule:
    days: tuple[DayAssignment, ...]

    def ems_for(self, day: int, house: int) -> str:
        return self.days[day][house - 1]

    def house_of(self, day: int, ems: str) -> int:
        return self.days[day].index(ems) + 1

    def validate(self) -> None:
        if len(self.days) != 48:
            raise ValueError(f"schedule must have 48 days, got {len(self.days)}")
        counts: dict[DayAssignment, int] = {}
        for day in self.days:
            if sorted(day) != sorted(EMS_NAMES):
                raise ValueError(f"day assignment {day} is not a permutation of the EMSs")
            counts[day] = counts.get(day, 0) + 1
        if any(c != 2 for c in counts.values()) or len(counts) != 24:
            raise ValueError("each of the 24 house/EMS combinations must appear exactly twice")
        for prev, cur in zip(self.days, self.days[1:]):
            for ems in STATEFUL_EMS:
                if prev.index(ems) == cur.index(ems):
                    raise ValueError(
                        f"{ems} keeps house {prev.index(ems) + 1} on consecutive days"
                    )


def _half_ok(half: list[DayAssignment]) -> bool:
    return all(
        prev.index(ems) != cur.index(ems)
        for prev, cur in zip(half, half[1:])
        for ems in STATEFUL_EMS
    )


def _boundary_ok(a: DayAssignment, b: DayAssignment) -> bool:
    return all(a.index(ems) != b.index(ems) for ems in STATEFUL_EMS)


def generate_schedule(seed: int = 0) -> Schedule:
    """Rejection-sample two distinct valid 24-day halves; deterministic."""
    rng = random.Random(seed)
    deck = list(_ALL_ASSIGNMENTS)

    def draw_half() -> Optional[list[DayAssignment]]:
        candidate = list(deck)
        rng.shuffle(candidate)
        return candidate if _half_ok(candidate) else None

    for _ in range(MAX_ATTEMPTS):
        first = draw_half()
        if first is None:
            continue
        second = draw_half()
        if second is None or second == first:
            continue
        if not _boundary_ok(first[-1], second[0]):
            continue
        schedule = Schedule(tuple(first + second))
        schedule.validate()
        return schedule
    raise RuntimeError(f"no valid schedule found in {MAX_ATTEMPTS} attempts")


def adjust_sessions(
    sessions: list[EvSession], tz: Optional[tzinfo] = None, switch_hour: int = 15
) -> list[EvSession]:
    """Shorten sessions that span a switch instant to their longest segment.

    Segment boundaries are every switch the session crosses; ties between
    equal-length segments keep the earlier one. Start and goal SOC are kept.
    """
    adjusted: list[EvSession] = []
    for s in sessions:
        cuts = []
        cut = next_switch(s.arrival, tz, switch_hour)
        while cut < s.departure:
            cuts.append(cut)
            cut = next_switch(cut, tz, switch_hour)
        if not cuts:
            adjusted.append(s)
            continue
        bounds = [s.arrival] + cuts + [s.departure]
        segments = list(zip(bounds, bounds[1:]))
        best = max(segments, key=lambda seg: seg[1] - seg[0])  # max keeps first tie
        if best[0] >= best[1]:
            log.warning("dropping zero-length session at %s", s.arrival.isoformat())
            continue
        adjusted.append(EvSession(best[0], best[1], s.soc_start, s.soc_goal))
    return adjusted
