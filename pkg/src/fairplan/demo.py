"""Bundled demo instance: eight geometry batches on three lines with a
43-person crew split over the three shifts.

The balanced objective packs each line back-to-back over two days, the
decomposition yields six intervals with eighteen line-interval rows and
83 worker slots, and the night-shift handover exercises the continuation
rule. The packaged CSV/JSON fixtures are generated by the builders here.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import datetime
from importlib import resources

import numpy as np

from .caltime import SolverCalendar
from .lineplan import ObjectiveWeights, OrderLineSchedule, solve
from .model import Instance, load_instance

DEMO_REFERENCE = datetime(2023, 9, 11, 6, 0)  # Monday 06:00
DEMO_HORIZON_DAYS = 5
_FACTOR_SEED = 20230911

#       geometry   line  quantity  rate  setup  req  due(minute)
_DEMO_BATCHES = (
    ("GEO-01", "l3", 1200, 1.0, 0, 3, 2400),
    ("GEO-02", "l3", 960, 2.0, 0, 4, 480),
    ("GEO-03", "l3", 720, 1.0, 0, 3, 1200),
    ("GEO-04", "l2", 4800, 5.0, 0, 5, 1920),
    ("GEO-05", "l2", 1920, 2.0, 0, 5, 960),
    ("GEO-06", "l2", 450, 1.0, 30, 5, 2400),
    ("GEO-07", "l1", 960, 1.0, 0, 5, 2400),
    ("GEO-08", "l1", 2880, 2.0, 0, 6, 1440),
)

OBJECTIVE_PARAMETRIZATIONS = {
    "makespan": ObjectiveWeights(1.0, 0.0),
    "tardiness": ObjectiveWeights(0.0, 1.0),
    "balanced": ObjectiveWeights(1.0, 1.0),
}


def build_demo_orders_csv() -> str:
    cal = SolverCalendar(DEMO_REFERENCE, DEMO_HORIZON_DAYS)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["order_id", "geometry_id", "quantity", "due_date", "priority"])
    for i, (geometry, _, quantity, _, _, _, due) in enumerate(_DEMO_BATCHES):
        writer.writerow(
            [f"ORD-{i + 1:02d}", geometry, quantity, cal.from_solver_minutes(due).isoformat(), 0]
        )
    return out.getvalue()


def build_demo_context() -> dict:
    lines = ["l1", "l2", "l3"]
    workers = (
        [{"id": f"w{i:02d}", "shifts": ["early"]} for i in range(1, 16)]
        + [{"id": f"w{i:02d}", "shifts": ["late"]} for i in range(16, 30)]
        + [{"id": f"w{i:02d}", "shifts": ["night"]} for i in range(30, 43)]
        + [{"id": "w43", "shifts": ["late", "night"]}]
    )
    options = [
        {
            "geometry_id": geometry,
            "line_id": line,
            "setup_minutes": setup,
            "rate": rate,
            "required_workers": req,
        }
        for geometry, line, _, rate, setup, req, _ in _DEMO_BATCHES
    ]

    rng = np.random.default_rng(_FACTOR_SEED)
    factors = []
    for worker in workers:
        for geometry, line, *_ in _DEMO_BATCHES:
            factors.append(
                {
                    "worker_id": worker["id"],
                    "line_id": line,
                    "geometry_id": geometry,
                    "mu": 1,
                    "pi": round(float(rng.uniform()), 2),
                    "xi": round(float(rng.uniform()), 2),
                }
            )
    resilience = [
        {"worker_id": worker["id"], "rho": round(float(rng.uniform()), 2)} for worker in workers
    ]
    # pin the worked-example attribute triple for w01 on l2 / GEO-05
    for row in factors:
        if row["worker_id"] == "w01" and row["line_id"] == "l2" and row["geometry_id"] == "GEO-05":
            row["pi"], row["xi"] = 0.84, 0.83
    resilience[0]["rho"] = 0.79

    return {
        "reference": DEMO_REFERENCE.isoformat(),
        "horizon_days": DEMO_HORIZON_DAYS,
        "lines": lines,
        "options": options,
        "workers": workers,
        "factors": factors,
        "resilience": resilience,
    }


def demo_orders_csv() -> str:
    return resources.files("fairplan.data").joinpath("demo_orders.csv").read_text(encoding="utf-8")


def demo_context() -> dict:
    text = resources.files("fairplan.data").joinpath("demo_context.json").read_text(encoding="utf-8")
    return json.loads(text)


def demo_instance() -> Instance:
    return load_instance(demo_orders_csv(), demo_context())


def demo_schedule(instance: Instance | None = None, objective: str = "balanced") -> OrderLineSchedule:
    instance = instance or demo_instance()
    return solve(instance, OBJECTIVE_PARAMETRIZATIONS[objective])


def write_demo_files(directory: str) -> None:
    """Regenerate the packaged fixture files (used once, kept for audit)."""
    import pathlib

    base = pathlib.Path(directory)
    base.mkdir(parents=True, exist_ok=True)
    (base / "demo_orders.csv").write_text(build_demo_orders_csv(), encoding="utf-8")
    (base / "demo_context.json").write_text(
        json.dumps(build_demo_context(), indent=1) + "\n", encoding="utf-8"
    )
