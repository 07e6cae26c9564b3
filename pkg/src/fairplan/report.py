"""Schedule KPIs, radar-chart data and timebox export.

A timebox is one line-interval record with epoch-second bounds, worker
list and production accounting. Batches with a setup time get a leading
setup box that never carries workers or production; the production span
is split at every interval boundary, with quantities apportioned by
duration using largest-remainder rounding so batch totals stay exact.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .lineplan import OrderLineSchedule
from .mdp import fairness_score
from .model import Instance
from .strategies import SolveResult

TIMEBOX_FIELDS = (
    "Finish",
    "Resource",
    "Start",
    "Task",
    "geometry",
    "is_setup_timebox",
    "order",
    "produced_amount",
    "produced_until_now",
    "required_workers",
    "total_amount",
    "warning",
    "workers",
)

TIMEBOX_SCHEMA = {
    "type": "object",
    "properties": {
        "Finish": {"type": "integer"},
        "Resource": {"type": "string"},
        "Start": {"type": "integer"},
        "Task": {"type": "string"},
        "geometry": {"type": "string"},
        "is_setup_timebox": {"type": "integer", "enum": [0, 1]},
        "order": {"type": "string"},
        "produced_amount": {"type": "integer", "minimum": 0},
        "produced_until_now": {"type": "integer", "minimum": 0},
        "required_workers": {"type": "integer", "minimum": 0},
        "total_amount": {"type": "integer", "minimum": 1},
        "warning": {"type": ["string", "null"]},
        "workers": {"type": "array", "items": {"type": "string"}},
    },
    "required": list(TIMEBOX_FIELDS),
    "additionalProperties": False,
}


@dataclass(frozen=True)
class KpiSummary:
    mean_xi: float
    mean_pi: float
    mean_rho: float
    fairness: float
    assignments: int
    worker_mean_preference: dict[str, float]

    def __post_init__(self):
        for name in ("mean_xi", "mean_pi", "mean_rho", "fairness"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0 + 1e-12):
                raise ValueError(f"{name}={value} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "mean_xi": self.mean_xi,
            "mean_pi": self.mean_pi,
            "mean_rho": self.mean_rho,
            "fairness": self.fairness,
            "assignments": self.assignments,
            "worker_mean_preference": dict(sorted(self.worker_mean_preference.items())),
        }


@dataclass(frozen=True)
class Timebox:
    Start: int
    Finish: int
    Resource: str
    Task: str
    geometry: str
    order: str
    produced_amount: int
    produced_until_now: int
    total_amount: int
    required_workers: int
    is_setup_timebox: int
    workers: tuple[str, ...]
    warning: str | None

    def to_dict(self) -> dict:
        return {
            "Finish": self.Finish,
            "Resource": self.Resource,
            "Start": self.Start,
            "Task": self.Task,
            "geometry": self.geometry,
            "is_setup_timebox": self.is_setup_timebox,
            "order": self.order,
            "produced_amount": self.produced_amount,
            "produced_until_now": self.produced_until_now,
            "required_workers": self.required_workers,
            "total_amount": self.total_amount,
            "warning": self.warning,
            "workers": list(self.workers),
        }


def kpis(result: SolveResult) -> KpiSummary:
    """Means of the assigned workers' experience/preference/resilience over
    every realized assignment, plus the fairness score."""
    env = result.env
    pairs = env.assignments()
    if not pairs:
        raise ValueError("no assignments; KPIs undefined")
    xi = sum(env.exper[r, w] for r, w in pairs) / len(pairs)
    pi = sum(env.pref[r, w] for r, w in pairs) / len(pairs)
    rho = sum(env.resil[r, w] for r, w in pairs) / len(pairs)
    lists = env.preference_lists()
    fairness = fairness_score(lists)
    per_worker = {
        env.worker_ids[w]: sum(values) / len(values)
        for w, values in enumerate(lists)
        if values
    }
    return KpiSummary(
        mean_xi=float(xi),
        mean_pi=float(pi),
        mean_rho=float(rho),
        fairness=float(fairness),
        assignments=len(pairs),
        worker_mean_preference=per_worker,
    )


def _largest_remainder(total: int, weights: list[int]) -> list[int]:
    """Integer split of ``total`` proportional to ``weights``, exact sum."""
    denom = sum(weights)
    raw = [total * w / denom for w in weights]
    floors = [int(f) for f in raw]
    shortfall = total - sum(floors)
    # hand out the remainder by largest fractional part, later boxes first on ties
    order = sorted(range(len(raw)), key=lambda i: (raw[i] - floors[i], i), reverse=True)
    for i in order[:shortfall]:
        floors[i] += 1
    return floors


def export_timeboxes(
    schedule: OrderLineSchedule,
    result: SolveResult,
    instance: Instance,
    compat_setup_workers: bool = False,
) -> list[dict]:
    """Listing-style timebox dicts for every batch of ``schedule``.

    ``compat_setup_workers=True`` reproduces the legacy behavior of
    listing the interval's crew on setup boxes as well.
    """
    env = result.env
    cal = instance.calendar.extended(schedule.makespan)
    by_id = {b.id: b for b in instance.batches}

    row_lookup: dict[tuple[str, int, int], int] = {}
    for r, row in enumerate(env.rows):
        iv = env.row_interval(r)
        row_lookup[(row.line_id, iv.start, iv.end)] = r

    def row_workers(line_id: str, start: int, end: int) -> tuple[list[str], str | None]:
        r = row_lookup.get((line_id, start, end))
        if r is None:
            return [], None
        workers = [env.worker_ids[w] for w in range(env.n_workers) if env.sigma[r, w]]
        warning = None
        missing = int(env.req[r] - env.alloc[r])
        if missing > 0:
            warning = f"{missing} of {env.req[r]} worker slots unfilled"
        return workers, warning

    boundaries = sorted({iv.start for iv in env.intervals} | {iv.end for iv in env.intervals})
    boxes: list[Timebox] = []

    for placement in schedule.placements:
        batch = by_id[placement.batch_id]
        option = batch.options[placement.line_id]
        task = f"{batch.order_id} × {batch.geometry_id}"
        req = option.required_workers

        prod_start = placement.start + option.setup_minutes
        if option.setup_minutes > 0:
            crosses = any(placement.start < b < prod_start for b in boundaries)
            warning = "setup spans an interval boundary" if crosses else None
            workers: tuple[str, ...] = ()
            if compat_setup_workers:
                iv = next(
                    (iv for iv in env.intervals if iv.start <= placement.start < iv.end), None
                )
                if iv is not None:
                    listed, _ = row_workers(placement.line_id, iv.start, iv.end)
                    workers = tuple(listed)
            boxes.append(
                Timebox(
                    Start=cal.to_epoch_seconds(placement.start),
                    Finish=cal.to_epoch_seconds(prod_start),
                    Resource=placement.line_id,
                    Task=task,
                    geometry=batch.geometry_id,
                    order=batch.order_id,
                    produced_amount=0,
                    produced_until_now=0,
                    total_amount=batch.quantity,
                    required_workers=req,
                    is_setup_timebox=1,
                    workers=workers,
                    warning=warning,
                )
            )

        cuts = [prod_start] + [b for b in boundaries if prod_start < b < placement.end] + [placement.end]
        spans = list(zip(cuts, cuts[1:]))
        amounts = _largest_remainder(batch.quantity, [e - s for s, e in spans])
        produced = 0
        for (start, end), amount in zip(spans, amounts):
            iv = next(
                (iv for iv in env.intervals if iv.start <= start and end <= iv.end), None
            )
            if iv is not None:
                workers_list, warning = row_workers(placement.line_id, iv.start, iv.end)
            else:
                workers_list, warning = [], None
            produced += amount
            boxes.append(
                Timebox(
                    Start=cal.to_epoch_seconds(start),
                    Finish=cal.to_epoch_seconds(end),
                    Resource=placement.line_id,
                    Task=task,
                    geometry=batch.geometry_id,
                    order=batch.order_id,
                    produced_amount=amount,
                    produced_until_now=produced,
                    total_amount=batch.quantity,
                    required_workers=req,
                    is_setup_timebox=0,
                    workers=tuple(workers_list),
                    warning=warning,
                )
            )

    boxes.sort(key=lambda b: (b.Start, b.Resource, b.Finish))
    return [b.to_dict() for b in boxes]


def radar_data(summaries: dict[tuple[str, str], KpiSummary]) -> list[dict]:
    """Rows (strategy, parametrization, means) for triangular radar plots."""
    if not summaries:
        raise ValueError("no summaries to tabulate")
    rows = []
    for (strategy, parametrization), summary in sorted(summaries.items()):
        for name, value in (
            ("mean_xi", summary.mean_xi),
            ("mean_pi", summary.mean_pi),
            ("mean_rho", summary.mean_rho),
        ):
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{strategy}/{parametrization}: {name}={value} outside [0, 1]")
        rows.append(
            {
                "strategy": strategy,
                "parametrization": parametrization,
                "mean_xi": summary.mean_xi,
                "mean_pi": summary.mean_pi,
                "mean_rho": summary.mean_rho,
            }
        )
    return rows


def radar_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(
        out,
        fieldnames=["strategy", "parametrization", "mean_xi", "mean_pi", "mean_rho"],
        lineterminator="\n",
    )
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue()


def kpis_from_timeboxes(boxes: list[dict], instance: Instance) -> KpiSummary:
    """Recompute the KPI summary from exported production timeboxes."""
    pairs: list[tuple[float, float, float, str]] = []
    for box in boxes:
        if box["is_setup_timebox"]:
            continue
        for worker_id in box["workers"]:
            pairs.append(
                (
                    instance.factors.xi(worker_id, box["Resource"], box["geometry"]),
                    instance.factors.pi(worker_id, box["Resource"], box["geometry"]),
                    instance.factors.rho(worker_id, box["Resource"], box["geometry"]),
                    worker_id,
                )
            )
    if not pairs:
        raise ValueError("no worker assignments in timeboxes")
    per_worker: dict[str, list[float]] = {}
    for _, pi, _, worker_id in pairs:
        per_worker.setdefault(worker_id, []).append(pi)
    return KpiSummary(
        mean_xi=sum(p[0] for p in pairs) / len(pairs),
        mean_pi=sum(p[1] for p in pairs) / len(pairs),
        mean_rho=sum(p[2] for p in pairs) / len(pairs),
        fairness=fairness_score(list(per_worker.values())),
        assignments=len(pairs),
        worker_mean_preference={w: sum(v) / len(v) for w, v in sorted(per_worker.items())},
    )
