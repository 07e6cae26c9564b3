"""Domain model: orders, lines, workers, human-factor tables, instances.

Orders arrive as CSV (one row per geometry batch); the static plant
context (lines, line options, workers, factor tables) is a JSON
document. Instances are immutable after loading.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime

from .caltime import SolverCalendar

ORDER_COLUMNS = ("order_id", "geometry_id", "quantity", "due_date", "priority")


class ValidationError(ValueError):
    """Input document failed validation; message lists the offenders."""


@dataclass(frozen=True)
class LineOption:
    """How one geometry runs on one line."""

    setup_minutes: int
    rate: float  # units per minute
    required_workers: int

    def __post_init__(self):
        if self.setup_minutes < 0:
            raise ValidationError(f"setup_minutes must be >= 0, got {self.setup_minutes}")
        if self.rate <= 0:
            raise ValidationError(f"rate must be > 0, got {self.rate}")
        if self.required_workers < 1:
            raise ValidationError(f"required_workers must be >= 1, got {self.required_workers}")


@dataclass(frozen=True)
class GeometryBatch:
    id: str
    geometry_id: str
    order_id: str
    quantity: int
    due_date: int  # solver minute
    priority: bool
    options: dict[str, LineOption]  # line_id -> option; the admissible set

    def __post_init__(self):
        if self.quantity < 1:
            raise ValidationError(f"batch {self.id}: quantity must be >= 1")
        if self.due_date < 0:
            raise ValidationError(f"batch {self.id}: due_date must be >= 0")
        if not self.options:
            raise ValidationError(f"batch {self.id}: no admissible line")


@dataclass(frozen=True)
class Worker:
    id: str
    shifts: frozenset[str]  # labels the worker covers on every working day

    def __post_init__(self):
        unknown = self.shifts - {"early", "late", "night"}
        if unknown:
            raise ValidationError(f"worker {self.id}: unknown shift labels {sorted(unknown)}")


class HumanFactorTable:
    """Per (worker, line, geometry) clearance/preference/experience plus
    per-worker resilience (optionally overridden per line-geometry).

    A missing triple reads as not cleared: mu=0 and zeroed scores.
    """

    def __init__(
        self,
        triples: dict[tuple[str, str, str], tuple[int, float, float]],
        resilience: dict[str, float],
        resilience_overrides: dict[tuple[str, str, str], float] | None = None,
    ):
        for key, (mu, pi, xi) in triples.items():
            if mu not in (0, 1):
                raise ValidationError(f"factor {key}: mu must be 0 or 1, got {mu}")
            if not (0.0 <= pi <= 1.0) or not (0.0 <= xi <= 1.0):
                raise ValidationError(f"factor {key}: pi/xi must lie in [0, 1]")
        for wid, rho in resilience.items():
            if not (0.0 <= rho <= 1.0):
                raise ValidationError(f"resilience for {wid} must lie in [0, 1], got {rho}")
        for key, rho in (resilience_overrides or {}).items():
            if not (0.0 <= rho <= 1.0):
                raise ValidationError(f"resilience override {key} must lie in [0, 1]")
        self._triples = dict(triples)
        self._resilience = dict(resilience)
        self._rho_overrides = dict(resilience_overrides or {})

    def mu(self, worker_id: str, line_id: str, geometry_id: str) -> int:
        return self._triples.get((worker_id, line_id, geometry_id), (0, 0.0, 0.0))[0]

    def pi(self, worker_id: str, line_id: str, geometry_id: str) -> float:
        mu, pi, _ = self._triples.get((worker_id, line_id, geometry_id), (0, 0.0, 0.0))
        return pi if mu else 0.0

    def xi(self, worker_id: str, line_id: str, geometry_id: str) -> float:
        mu, _, xi = self._triples.get((worker_id, line_id, geometry_id), (0, 0.0, 0.0))
        return xi if mu else 0.0

    def rho(self, worker_id: str, line_id: str, geometry_id: str) -> float:
        if not self.mu(worker_id, line_id, geometry_id):
            return 0.0
        override = self._rho_overrides.get((worker_id, line_id, geometry_id))
        if override is not None:
            return override
        return self._resilience.get(worker_id, 0.0)

    def worker_ids(self) -> set[str]:
        ids = {key[0] for key in self._triples}
        ids.update(self._resilience)
        ids.update(key[0] for key in self._rho_overrides)
        return ids

    def line_ids(self) -> set[str]:
        return {key[1] for key in self._triples} | {key[1] for key in self._rho_overrides}

    def to_dict(self) -> dict:
        return {
            "factors": [
                {"worker_id": w, "line_id": l, "geometry_id": g, "mu": mu, "pi": pi, "xi": xi}
                for (w, l, g), (mu, pi, xi) in sorted(self._triples.items())
            ],
            "resilience": [
                {"worker_id": w, "rho": rho} for w, rho in sorted(self._resilience.items())
            ],
            "resilience_overrides": [
                {"worker_id": w, "line_id": l, "geometry_id": g, "rho": rho}
                for (w, l, g), rho in sorted(self._rho_overrides.items())
            ],
        }


@dataclass(frozen=True)
class Instance:
    batches: tuple[GeometryBatch, ...]
    lines: tuple[str, ...]
    workers: tuple[Worker, ...]
    factors: HumanFactorTable
    calendar: SolverCalendar

    def __post_init__(self):
        line_set = set(self.lines)
        missing = sorted(
            {lid for b in self.batches for lid in b.options if lid not in line_set}
        )
        if missing:
            raise ValidationError(f"options reference unknown lines: {missing}")
        worker_set = {w.id for w in self.workers}
        if len(worker_set) != len(self.workers):
            raise ValidationError("duplicate worker ids")
        stray = sorted(self.factors.worker_ids() - worker_set)
        if stray:
            raise ValidationError(f"factors reference unknown workers: {stray}")
        stray_lines = sorted(self.factors.line_ids() - line_set)
        if stray_lines:
            raise ValidationError(f"factors reference unknown lines: {stray_lines}")
        ids = [b.id for b in self.batches]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate batch ids")

    def batch(self, batch_id: str) -> GeometryBatch:
        for b in self.batches:
            if b.id == batch_id:
                return b
        raise KeyError(batch_id)


def duration(batch: GeometryBatch, line_id: str) -> int:
    """Setup plus processing minutes of ``batch`` on ``line_id``.

    Processing is ceil(quantity / rate), never below one minute.
    """
    option = batch.options.get(line_id)
    if option is None:
        raise ValidationError(f"line {line_id} not admissible for batch {batch.id}")
    processing = max(1, math.ceil(batch.quantity / option.rate - 1e-9))
    return option.setup_minutes + processing


def parse_orders_csv(text: str) -> list[dict]:
    """Raw order rows from CSV text; header must match ORDER_COLUMNS."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != ORDER_COLUMNS:
        raise ValidationError(
            f"orders CSV header must be {','.join(ORDER_COLUMNS)}, got {reader.fieldnames}"
        )
    rows = list(reader)
    if not rows:
        raise ValidationError("orders CSV contains no rows")
    return rows


def load_instance(
    orders_csv: str,
    context: dict,
    *,
    reference: datetime | None = None,
    horizon_days: int | None = None,
) -> Instance:
    """Build a validated :class:`Instance` from an orders CSV string and a
    static-context dict.

    ``reference``/``horizon_days`` override the context's values; the
    context may carry ``reference`` (ISO timestamp) and ``horizon_days``.
    """
    if reference is None:
        ref_text = context.get("reference")
        if ref_text is None:
            raise ValidationError("no reference instant: pass reference= or set context['reference']")
        reference = datetime.fromisoformat(ref_text)
    if horizon_days is None:
        horizon_days = int(context.get("horizon_days", 5))
    cal = SolverCalendar(reference, horizon_days)

    lines = tuple(context.get("lines", ()))
    if not lines:
        raise ValidationError("context defines no lines")

    options: dict[tuple[str, str], LineOption] = {}
    for row in context.get("options", ()):
        key = (row["geometry_id"], row["line_id"])
        options[key] = LineOption(
            setup_minutes=int(row["setup_minutes"]),
            rate=float(row["rate"]),
            required_workers=int(row["required_workers"]),
        )

    workers = tuple(
        Worker(id=row["id"], shifts=frozenset(row["shifts"])) for row in context.get("workers", ())
    )

    triples = {
        (row["worker_id"], row["line_id"], row["geometry_id"]): (
            int(row["mu"]),
            float(row["pi"]),
            float(row["xi"]),
        )
        for row in context.get("factors", ())
    }
    resilience = {row["worker_id"]: float(row["rho"]) for row in context.get("resilience", ())}
    overrides = {
        (row["worker_id"], row["line_id"], row["geometry_id"]): float(row["rho"])
        for row in context.get("resilience_overrides", ())
    }
    factors = HumanFactorTable(triples, resilience, overrides)

    batches = []
    seen: set[tuple[str, str]] = set()
    for row in parse_orders_csv(orders_csv):
        order_id = row["order_id"].strip()
        geometry_id = row["geometry_id"].strip()
        if (order_id, geometry_id) in seen:
            raise ValidationError(f"duplicate order row {order_id}/{geometry_id}")
        seen.add((order_id, geometry_id))
        batch_options = {
            line_id: opt for (geo, line_id), opt in options.items() if geo == geometry_id
        }
        if not batch_options:
            raise ValidationError(f"geometry {geometry_id} has no line options")
        unknown = sorted(set(batch_options) - set(lines))
        if unknown:
            raise ValidationError(f"geometry {geometry_id} references unknown lines: {unknown}")
        due = cal.to_solver_minutes(datetime.fromisoformat(row["due_date"]))
        batches.append(
            GeometryBatch(
                id=f"{order_id}/{geometry_id}",
                geometry_id=geometry_id,
                order_id=order_id,
                quantity=int(row["quantity"]),
                due_date=due,
                priority=bool(int(row["priority"])),
                options=batch_options,
            )
        )

    return Instance(
        batches=tuple(batches), lines=lines, workers=workers, factors=factors, calendar=cal
    )


def dump_orders_csv(instance: Instance) -> str:
    """Serialize an instance's batches back to the orders CSV format."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(ORDER_COLUMNS)
    for b in instance.batches:
        due = instance.calendar.from_solver_minutes(b.due_date).isoformat()
        writer.writerow([b.order_id, b.geometry_id, b.quantity, due, int(b.priority)])
    return out.getvalue()


def dump_context(instance: Instance) -> dict:
    """Serialize lines/options/workers/factors back to the context format."""
    options = []
    seen: set[tuple[str, str]] = set()
    for b in instance.batches:
        for line_id, opt in sorted(b.options.items()):
            key = (b.geometry_id, line_id)
            if key in seen:
                continue
            seen.add(key)
            options.append(
                {
                    "geometry_id": b.geometry_id,
                    "line_id": line_id,
                    "setup_minutes": opt.setup_minutes,
                    "rate": opt.rate,
                    "required_workers": opt.required_workers,
                }
            )
    doc = {
        "reference": instance.calendar.reference.isoformat(),
        "horizon_days": instance.calendar.horizon_days,
        "lines": list(instance.lines),
        "options": options,
        "workers": [{"id": w.id, "shifts": sorted(w.shifts)} for w in instance.workers],
    }
    doc.update(instance.factors.to_dict())
    return doc


def load_instance_from_files(orders_path: str, context_path: str, **kwargs) -> Instance:
    with open(orders_path, encoding="utf-8") as fh:
        orders_csv = fh.read()
    with open(context_path, encoding="utf-8") as fh:
        context = json.load(fh)
    return load_instance(orders_csv, context, **kwargs)
