"""Seeded random instances for training, benchmarking and property tests."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .caltime import SHIFT_LABELS, SolverCalendar
from .model import GeometryBatch, HumanFactorTable, Instance, LineOption, Worker, duration

DEFAULT_REFERENCE = datetime(2023, 9, 11, 6, 0)  # a Monday 06:00


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    n_batches: tuple[int, int] = (3, 8)
    n_lines: tuple[int, int] = (2, 3)
    n_workers: tuple[int, int] = (6, 12)
    quantity: tuple[int, int] = (60, 600)
    rate: tuple[float, float] = (0.5, 2.0)
    setup_minutes: tuple[int, int] = (0, 45)
    required_workers: tuple[int, int] = (1, 4)
    lines_per_batch: tuple[int, int] = (1, 3)
    priority_probability: float = 0.2
    clearance_probability: float = 0.8  # chance a (worker, line, geometry) is cleared
    due_tightness: tuple[float, float] = (1.2, 3.0)  # multiple of fastest duration
    pi_range: tuple[float, float] = (0.0, 1.0)  # uniform supports of the factor draws
    xi_range: tuple[float, float] = (0.0, 1.0)
    rho_range: tuple[float, float] = (0.0, 1.0)
    reference: datetime = DEFAULT_REFERENCE
    shift_choices: tuple[tuple[str, ...], ...] = tuple((label,) for label in SHIFT_LABELS)

    def __post_init__(self):
        for name in ("n_batches", "n_lines", "n_workers", "quantity", "setup_minutes",
                     "required_workers", "lines_per_batch"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < (0 if name == "setup_minutes" else 1):
                raise ValueError(f"bad range for {name}: ({lo}, {hi})")
        if not (0.0 <= self.priority_probability <= 1.0):
            raise ValueError("priority_probability must lie in [0, 1]")
        if not (0.0 <= self.clearance_probability <= 1.0):
            raise ValueError("clearance_probability must lie in [0, 1]")
        if self.due_tightness[0] < 1.0 or self.due_tightness[0] > self.due_tightness[1]:
            raise ValueError("due_tightness must be >= 1 and ordered")
        for name in ("pi_range", "xi_range", "rho_range"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"{name} must be an ordered sub-range of [0, 1]")


def _randint(rng: np.random.Generator, bounds: tuple[int, int]) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


def generate(config: GeneratorConfig) -> Instance:
    """A valid random instance; identical config (incl. seed) is repeatable."""
    rng = np.random.default_rng(config.seed)

    n_lines = _randint(rng, config.n_lines)
    lines = tuple(f"l{i + 1}" for i in range(n_lines))
    n_batches = _randint(rng, config.n_batches)
    n_workers = _randint(rng, config.n_workers)

    batches = []
    for b in range(n_batches):
        geometry_id = f"GEO-{b + 1:02d}"
        order_id = f"ORD-{b + 1:02d}"
        k = min(n_lines, _randint(rng, config.lines_per_batch))
        chosen = sorted(rng.choice(n_lines, size=k, replace=False).tolist())
        quantity = _randint(rng, config.quantity)
        options = {}
        for li in chosen:
            options[lines[li]] = LineOption(
                setup_minutes=_randint(rng, config.setup_minutes),
                rate=float(rng.uniform(*config.rate)),
                required_workers=_randint(rng, config.required_workers),
            )
        batch = GeometryBatch(
            id=f"{order_id}/{geometry_id}",
            geometry_id=geometry_id,
            order_id=order_id,
            quantity=quantity,
            due_date=0,  # placeholder until the fastest duration is known
            priority=bool(rng.random() < config.priority_probability),
            options=options,
        )
        fastest = min(duration(batch, lid) for lid in options)
        due = int(np.ceil(fastest * rng.uniform(*config.due_tightness)))
        batches.append(dataclasses.replace(batch, due_date=due))

    workers = tuple(
        Worker(
            id=f"w{w + 1:02d}",
            shifts=frozenset(config.shift_choices[rng.integers(len(config.shift_choices))]),
        )
        for w in range(n_workers)
    )

    triples = {}
    for worker in workers:
        for batch in batches:
            for line_id in batch.options:
                cleared = int(rng.random() < config.clearance_probability)
                pi = round(float(rng.uniform(*config.pi_range)), 2)
                xi = round(float(rng.uniform(*config.xi_range)), 2)
                triples[(worker.id, line_id, batch.geometry_id)] = (cleared, pi, xi)
    resilience = {w.id: round(float(rng.uniform(*config.rho_range)), 2) for w in workers}

    total_load = sum(max(duration(b, lid) for lid in b.options) for b in batches)
    horizon_days = max(2, -(-(total_load + max(b.due_date for b in batches)) // 1440) + 1)
    cal = SolverCalendar(config.reference, horizon_days)

    return Instance(
        batches=tuple(batches),
        lines=lines,
        workers=workers,
        factors=HumanFactorTable(triples, resilience),
        calendar=cal,
    )
