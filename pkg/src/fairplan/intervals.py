"""Decompose a line schedule into atomic time intervals and worker slots.

Boundaries are the union of all placement starts/ends with every shift
boundary inside the schedule span. Consecutive boundaries delimit the
intervals; each interval holds one row per line that is producing during
it, carrying that row's worker requirement.
"""

from __future__ import annotations

from dataclasses import dataclass

from .caltime import ShiftGrid
from .lineplan import OrderLineSchedule
from .model import Instance


@dataclass(frozen=True)
class SlotRow:
    interval_index: int  # 1-based, matches the owning interval
    line_id: str
    batch_id: str
    geometry_id: str
    order_id: str
    required: int


@dataclass(frozen=True)
class TimeInterval:
    index: int  # 1-based
    start: int
    end: int
    rows: tuple[SlotRow, ...]


def decompose(
    schedule: OrderLineSchedule, grid: ShiftGrid, instance: Instance
) -> list[TimeInterval]:
    """Atomic intervals of ``schedule`` against ``grid``.

    Intervals with no producing line are dropped; rows within an interval
    are ordered by line id.
    """
    if not schedule.placements:
        return []
    by_id = {b.id: b for b in instance.batches}
    span_start = min(p.start for p in schedule.placements)
    span_end = max(p.end for p in schedule.placements)

    boundaries: set[int] = set()
    for p in schedule.placements:
        boundaries.add(p.start)
        boundaries.add(p.end)
    for point in grid.boundaries():
        if span_start <= point <= span_end:
            boundaries.add(point)
    points = sorted(boundaries)

    intervals: list[TimeInterval] = []
    for start, end in zip(points, points[1:]):
        if start == end:
            continue
        rows = []
        for p in sorted(schedule.placements, key=lambda p: p.line_id):
            if p.start <= start and end <= p.end:
                batch = by_id[p.batch_id]
                rows.append(
                    SlotRow(
                        interval_index=len(intervals) + 1,
                        line_id=p.line_id,
                        batch_id=batch.id,
                        geometry_id=batch.geometry_id,
                        order_id=batch.order_id,
                        required=batch.options[p.line_id].required_workers,
                    )
                )
        if rows:
            intervals.append(TimeInterval(index=len(intervals) + 1, start=start, end=end, rows=tuple(rows)))
    return intervals


def slot_count(intervals: list[TimeInterval]) -> int:
    """Total worker slots over all rows."""
    return sum(row.required for iv in intervals for row in iv.rows)
