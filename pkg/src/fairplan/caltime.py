"""Mapping between calendar time and the solver's minute domain.

The solver works in integer minutes counted from a reference instant.
Weekends (Saturday 06:00 up to Monday 06:00) are excised from that count,
so consecutive solver minutes may be 48 hours apart in calendar time.
Working days are structured into three shifts: early (06:00-14:00),
late (14:00-22:00) and night (22:00-06:00 next day).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

MINUTES_PER_WEEK = 7 * 24 * 60
WORKING_MINUTES_PER_WEEK = 5 * 24 * 60  # Mon 06:00 .. Sat 06:00
MINUTES_PER_DAY = 24 * 60

SHIFT_STARTS = (6 * 60, 14 * 60, 22 * 60)  # minutes after midnight
SHIFT_LABELS = ("early", "late", "night")
SHIFT_MINUTES = 8 * 60


class TimeDomainError(ValueError):
    """Raised for instants or minutes outside the calendar's domain."""


def _floor_to_minute(ts: datetime) -> datetime:
    return ts.replace(second=0, microsecond=0)


def _week_anchor(ts: datetime) -> datetime:
    """Monday 06:00 at or before ``ts``."""
    monday = ts - timedelta(days=ts.weekday())
    anchor = monday.replace(hour=6, minute=0, second=0, microsecond=0)
    if anchor > ts:
        anchor -= timedelta(days=7)
    return anchor


def _working_minutes_from(anchor: datetime, ts: datetime) -> int:
    """Working minutes in [anchor, ts) where anchor is a Monday 06:00."""
    total = int((ts - anchor).total_seconds()) // 60
    weeks, rest = divmod(total, MINUTES_PER_WEEK)
    return weeks * WORKING_MINUTES_PER_WEEK + min(rest, WORKING_MINUTES_PER_WEEK)


def next_working_minute(ts: datetime) -> datetime:
    """Snap an instant forward out of the weekend gap (identity elsewhere)."""
    ts = _floor_to_minute(ts)
    anchor = _week_anchor(ts)
    rest = int((ts - anchor).total_seconds()) // 60
    if rest < WORKING_MINUTES_PER_WEEK:
        return ts
    return anchor + timedelta(days=7)


def is_working_minute(ts: datetime) -> bool:
    return next_working_minute(ts) == _floor_to_minute(ts)


@dataclass(frozen=True)
class Shift:
    start: int
    end: int
    label: str


@dataclass(frozen=True)
class ShiftGrid:
    shifts: tuple[Shift, ...]

    def __len__(self) -> int:
        return len(self.shifts)

    def __iter__(self):
        return iter(self.shifts)

    def containing(self, start: int, end: int) -> Shift | None:
        """Shift that fully contains [start, end), if any."""
        for shift in self.shifts:
            if shift.start <= start and end <= shift.end:
                return shift
        return None

    def boundaries(self) -> list[int]:
        pts: set[int] = set()
        for shift in self.shifts:
            pts.add(shift.start)
            pts.add(shift.end)
        return sorted(pts)


@dataclass(frozen=True)
class SolverCalendar:
    """Reference instant plus a horizon measured in working days.

    A reference falling inside a weekend is snapped forward to Monday
    06:00, mirroring how weekend instants are treated by the forward
    mapping. Sub-minute precision is truncated.
    """

    reference: datetime
    horizon_days: int
    _anchor: datetime = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.horizon_days < 1:
            raise ValueError(f"horizon_days must be >= 1, got {self.horizon_days}")
        ref = next_working_minute(self.reference)
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "_anchor", _week_anchor(ref))

    @property
    def horizon_minutes(self) -> int:
        return self.horizon_days * MINUTES_PER_DAY

    def extended(self, minutes: int) -> "SolverCalendar":
        """Same reference, horizon enlarged to cover ``minutes``."""
        days = max(self.horizon_days, -(-minutes // MINUTES_PER_DAY))
        return SolverCalendar(self.reference, days)

    def to_solver_minutes(self, ts: datetime) -> int:
        """Working minutes elapsed since the reference.

        Instants inside the weekend gap snap forward to the next working
        minute; instants before the reference are a domain error.
        """
        ts = _floor_to_minute(ts)
        if ts < self.reference:
            raise TimeDomainError(f"{ts.isoformat()} is before reference {self.reference.isoformat()}")
        return _working_minutes_from(self._anchor, ts) - _working_minutes_from(self._anchor, self.reference)

    def from_solver_minutes(self, minute: int) -> datetime:
        """Inverse of :meth:`to_solver_minutes` over working minutes."""
        if minute < 0:
            raise TimeDomainError(f"solver minute must be >= 0, got {minute}")
        if minute > self.horizon_minutes:
            raise TimeDomainError(
                f"solver minute {minute} beyond horizon of {self.horizon_minutes} minutes"
            )
        target = _working_minutes_from(self._anchor, self.reference) + minute
        weeks, rest = divmod(target, WORKING_MINUTES_PER_WEEK)
        return self._anchor + timedelta(minutes=weeks * MINUTES_PER_WEEK + rest)

    def to_epoch_seconds(self, minute: int) -> int:
        """Solver minute to Unix epoch seconds (naive instants read as UTC)."""
        ts = self.from_solver_minutes(minute)
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        return int(ts.timestamp())

    def shift_grid(self) -> ShiftGrid:
        """Ordered early/late/night shifts covering [0, horizon_minutes).

        Boundaries sit at calendar 06:00 / 14:00 / 22:00; shifts are
        contiguous in solver minutes because the weekend gap is excised.
        """
        shifts: list[Shift] = []
        # planning day containing the reference (may start before it)
        day = self.reference.replace(hour=6, minute=0, second=0, microsecond=0)
        if day > self.reference:
            day -= timedelta(days=1)
        day = next_working_minute(day)
        while True:
            if day.weekday() >= 5:  # Saturday 06:00 start would be weekend
                day = next_working_minute(day)
            day_start = self.to_solver_minutes(max(day, self.reference))
            if day_start >= self.horizon_minutes:
                break
            for offset, label in zip(SHIFT_STARTS, SHIFT_LABELS):
                cal_start = day.replace(hour=0, minute=0) + timedelta(minutes=offset)
                start = max(0, self.to_solver_minutes(max(cal_start, self.reference)))
                end_cal = cal_start + timedelta(minutes=SHIFT_MINUTES)
                end = min(
                    self.horizon_minutes,
                    self.to_solver_minutes(max(end_cal, self.reference)),
                )
                if start < end:
                    shifts.append(Shift(start, end, label))
            day += timedelta(days=1)
        return ShiftGrid(tuple(shifts))
