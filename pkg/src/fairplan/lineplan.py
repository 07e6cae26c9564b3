"""Layer 1: assign each geometry batch to one admissible line and a time
interval, minimizing weighted makespan plus total tardiness.

The solver is a deterministic branch-and-bound over line assignments with
an exact per-line sequencing step. Placements are left-justified: priority
batches chain from minute 0 on their line, non-priority batches chain from
the instant every priority batch has finished (the priority rule is global
across lines). Among schedules with equal objective the solver prefers the
one with the smallest total of start times, then a fixed lexicographic
order, so identical inputs always produce the identical schedule.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .model import Instance, GeometryBatch, duration


class NoSolutionError(RuntimeError):
    """Budget exhausted before any complete schedule was found."""


@dataclass(frozen=True)
class ObjectiveWeights:
    w_c: float
    w_tau: float

    def __post_init__(self):
        if self.w_c < 0 or self.w_tau < 0:
            raise ValueError("objective weights must be non-negative")
        if self.w_c == 0 and self.w_tau == 0:
            raise ValueError("at least one objective weight must be positive")


@dataclass(frozen=True)
class SolveBudget:
    time_limit_ms: int = 10_000
    node_limit: int = 50_000_000

    def __post_init__(self):
        if self.time_limit_ms <= 0 or self.node_limit <= 0:
            raise ValueError("budget limits must be positive")


@dataclass(frozen=True)
class BatchPlacement:
    batch_id: str
    line_id: str
    start: int
    end: int


@dataclass(frozen=True)
class OrderLineSchedule:
    placements: tuple[BatchPlacement, ...]
    makespan: int
    total_tardiness: int
    objective: float
    status: str = "optimal"  # "optimal" once search completed, else "feasible"

    def placement(self, batch_id: str) -> BatchPlacement:
        for p in self.placements:
            if p.batch_id == batch_id:
                return p
        raise KeyError(batch_id)


@dataclass
class Violation:
    code: str
    message: str
    batch_ids: tuple[str, ...]


@dataclass
class VerifyReport:
    ok: bool
    violations: list[Violation] = field(default_factory=list)


def objective_components(
    schedule: OrderLineSchedule, instance: Instance, weights: ObjectiveWeights
) -> tuple[int, int, float]:
    """(makespan, total tardiness, objective), recomputed from placements."""
    by_id = {b.id: b for b in instance.batches}
    makespan = max(p.end for p in schedule.placements)
    tardiness = sum(max(0, p.end - by_id[p.batch_id].due_date) for p in schedule.placements)
    return makespan, tardiness, weights.w_c * makespan + weights.w_tau * tardiness


def verify(
    schedule: OrderLineSchedule, instance: Instance, weights: ObjectiveWeights
) -> VerifyReport:
    """Check every scheduling rule; violations are data, not exceptions."""
    violations: list[Violation] = []
    by_id = {b.id: b for b in instance.batches}

    placed = [p.batch_id for p in schedule.placements]
    missing = sorted(set(by_id) - set(placed))
    if missing:
        violations.append(Violation("coverage", f"batches not placed: {missing}", tuple(missing)))
    if len(set(placed)) != len(placed):
        dupes = sorted({b for b in placed if placed.count(b) > 1})
        violations.append(Violation("line-choice", f"batches placed more than once: {dupes}", tuple(dupes)))

    for p in schedule.placements:
        batch = by_id.get(p.batch_id)
        if batch is None:
            violations.append(Violation("coverage", f"unknown batch {p.batch_id}", (p.batch_id,)))
            continue
        if p.line_id not in batch.options:
            violations.append(
                Violation("line-choice", f"{p.batch_id} placed on inadmissible line {p.line_id}", (p.batch_id,))
            )
            continue
        expected = duration(batch, p.line_id)
        if p.end - p.start != expected:
            violations.append(
                Violation(
                    "interval",
                    f"{p.batch_id}: interval length {p.end - p.start} != duration {expected}",
                    (p.batch_id,),
                )
            )
        if p.start < 0:
            violations.append(Violation("interval", f"{p.batch_id}: negative start", (p.batch_id,)))

    by_line: dict[str, list[BatchPlacement]] = {}
    for p in schedule.placements:
        by_line.setdefault(p.line_id, []).append(p)
    for line_id, plist in sorted(by_line.items()):
        plist = sorted(plist, key=lambda p: (p.start, p.batch_id))
        for a, b in zip(plist, plist[1:]):
            if b.start < a.end:
                violations.append(
                    Violation(
                        "overlap",
                        f"{a.batch_id} and {b.batch_id} overlap on {line_id}",
                        (a.batch_id, b.batch_id),
                    )
                )

    prio_ends = [(p.end, p.batch_id) for p in schedule.placements if by_id.get(p.batch_id) and by_id[p.batch_id].priority]
    nonprio_starts = [
        (p.start, p.batch_id) for p in schedule.placements if by_id.get(p.batch_id) and not by_id[p.batch_id].priority
    ]
    if prio_ends and nonprio_starts:
        latest_p = max(prio_ends)
        earliest_n = min(nonprio_starts)
        if latest_p[0] > earliest_n[0]:
            violations.append(
                Violation(
                    "priority",
                    f"priority batch {latest_p[1]} ends at {latest_p[0]} after "
                    f"non-priority batch {earliest_n[1]} starts at {earliest_n[0]}",
                    (latest_p[1], earliest_n[1]),
                )
            )

    if not any(v.code in ("coverage", "line-choice", "interval") for v in violations):
        makespan, tardiness, objective = objective_components(schedule, instance, weights)
        if makespan != schedule.makespan:
            violations.append(Violation("objective", f"stored makespan {schedule.makespan} != {makespan}", ()))
        if tardiness != schedule.total_tardiness:
            violations.append(
                Violation("objective", f"stored tardiness {schedule.total_tardiness} != {tardiness}", ())
            )
        if abs(objective - schedule.objective) > 1e-9:
            violations.append(Violation("objective", f"stored objective {schedule.objective} != {objective}", ()))

    return VerifyReport(ok=not violations, violations=violations)


class _Budget:
    def __init__(self, budget: SolveBudget):
        self.deadline = time.monotonic() + budget.time_limit_ms / 1000.0
        self.nodes_left = budget.node_limit
        self.exhausted = False

    def tick(self) -> bool:
        """Consume one node; True while the search may continue."""
        self.nodes_left -= 1
        if self.nodes_left <= 0 or (self.nodes_left % 256 == 0 and time.monotonic() > self.deadline):
            self.exhausted = True
        return not self.exhausted


def _sequence_chain(
    jobs: list[tuple[str, int, int]], t0: int, cache: dict, cache_key: tuple
) -> tuple[float, int, tuple[tuple[str, int], ...]]:
    """Optimal order of ``jobs`` = (id, duration, due) chained from ``t0``.

    Minimizes (total tardiness, total start time) lexicographically; on
    remaining ties smaller ids start earlier. Returns (tardiness,
    start sum, ((id, start), ...)). Exact subset dynamic program; job
    counts per line are small.
    """
    key = (cache_key, t0)
    hit = cache.get(key)
    if hit is not None:
        return hit

    n = len(jobs)
    if n == 0:
        result = (0.0, 0, ())
        cache[key] = result
        return result

    durs = [j[1] for j in jobs]
    dues = [j[2] for j in jobs]
    # extend left to right, trying smaller ids first so ties start them earlier
    order = sorted(range(n), key=lambda i: jobs[i][0])

    best: dict[int, tuple[float, int, tuple[int, ...]]] = {0: (0.0, 0, ())}
    for _ in range(n):
        nxt: dict[int, tuple[float, int, tuple[int, ...]]] = {}
        for mask, (tau, ssum, seq) in best.items():
            elapsed = t0 + sum(durs[i] for i in range(n) if mask >> i & 1)
            for i in order:
                if mask >> i & 1:
                    continue
                end = elapsed + durs[i]
                cand = (
                    tau + max(0, end - dues[i]),
                    ssum + elapsed,
                    seq + (i,),
                )
                new_mask = mask | 1 << i
                cur = nxt.get(new_mask)
                if cur is None or cand[:2] < cur[:2]:
                    nxt[new_mask] = cand
        best = nxt

    tau, ssum, seq = best[(1 << n) - 1]
    starts = []
    at = t0
    for i in seq:
        starts.append((jobs[i][0], at))
        at += durs[i]
    result = (tau, ssum, tuple(starts))
    cache[key] = result
    return result


def solve(
    instance: Instance,
    weights: ObjectiveWeights,
    budget: SolveBudget | None = None,
    seed: int = 0,
) -> OrderLineSchedule:
    """Best schedule within budget; proves optimality when search finishes.

    ``seed`` is accepted for interface stability; the search itself is
    deterministic and does not randomize.
    """
    del seed
    budget = budget or SolveBudget()
    clock = _Budget(budget)

    batches = sorted(instance.batches, key=lambda b: (not b.priority, b.id))
    lines = sorted({lid for b in batches for lid in b.options})
    n = len(batches)
    durs = [{lid: duration(b, lid) for lid in sorted(b.options)} for b in batches]
    min_dur = [min(d.values()) for d in durs]
    # every batch must at least run for its shortest duration starting at 0
    tau_floor = sum(max(0, min_dur[i] - batches[i].due_date) for i in range(n))

    seq_cache: dict = {}
    incumbent: list | None = None  # [objective, start_sum, starts_key, placements]

    assign: list[str | None] = [None] * n
    p_load = {lid: 0 for lid in lines}
    np_load = {lid: 0 for lid in lines}

    id_order = sorted(range(n), key=lambda i: batches[i].id)

    def evaluate_leaf():
        nonlocal incumbent
        p_end = max(p_load.values(), default=0)
        makespan = 0
        for lid in lines:
            end = p_end + np_load[lid] if np_load[lid] else p_load[lid]
            makespan = max(makespan, end)
        # each batch ends no earlier than its chain start plus its duration
        tau_floor_leaf = 0
        for i in range(n):
            t0 = 0 if batches[i].priority else p_end
            tau_floor_leaf += max(0, t0 + durs[i][assign[i]] - batches[i].due_date)
        if incumbent is not None:
            lb = weights.w_c * makespan + weights.w_tau * tau_floor_leaf
            if lb > incumbent[0] + 1e-12:
                return

        total_tau = 0.0
        start_by_batch: dict[str, int] = {}
        for lid in lines:
            for prio in (True, False):
                jobs = [
                    (batches[i].id, durs[i][lid], batches[i].due_date)
                    for i in range(n)
                    if assign[i] == lid and batches[i].priority == prio
                ]
                if not jobs:
                    continue
                t0 = 0 if prio else p_end
                cache_key = (lid, prio, tuple(sorted(j[0] for j in jobs)))
                tau, _, starts = _sequence_chain(jobs, t0, seq_cache, cache_key)
                total_tau += tau
                start_by_batch.update(starts)

        objective = weights.w_c * makespan + weights.w_tau * total_tau
        start_sum = sum(start_by_batch.values())
        starts_key = tuple(start_by_batch[batches[i].id] for i in id_order)
        cand = [objective, start_sum, starts_key]
        if incumbent is None or cand < incumbent[:3]:
            placements = tuple(
                BatchPlacement(
                    batch_id=batches[i].id,
                    line_id=assign[i],
                    start=start_by_batch[batches[i].id],
                    end=start_by_batch[batches[i].id] + durs[i][assign[i]],
                )
                for i in id_order
            )
            incumbent = cand + [placements, int(total_tau), makespan]

    def lower_bound(depth: int) -> float:
        loads = [p_load[lid] + np_load[lid] for lid in lines]
        assigned_total = sum(loads)
        remaining = sum(min_dur[i] for i in range(depth, n))
        cmax_lb = max(max(loads), -(-(assigned_total + remaining) // len(lines)))
        return weights.w_c * cmax_lb + weights.w_tau * tau_floor

    def dfs(depth: int):
        if clock.exhausted:
            return
        if not clock.tick():
            return
        if depth == n:
            evaluate_leaf()
            return
        if incumbent is not None and lower_bound(depth) > incumbent[0] + 1e-12:
            return
        b = batches[depth]
        for lid in sorted(b.options):
            assign[depth] = lid
            bucket = p_load if b.priority else np_load
            bucket[lid] += durs[depth][lid]
            dfs(depth + 1)
            bucket[lid] -= durs[depth][lid]
            assign[depth] = None

    if n == 0:
        raise NoSolutionError("instance has no batches")
    dfs(0)

    if incumbent is None:
        raise NoSolutionError("no solution within budget")
    status = "feasible" if clock.exhausted else "optimal"
    return OrderLineSchedule(
        placements=incumbent[3],
        makespan=incumbent[5],
        total_tardiness=incumbent[4],
        objective=incumbent[0],
        status=status,
    )


def schedule_to_dict(schedule: OrderLineSchedule, instance: Instance) -> dict:
    """Serializable view with solver minutes and epoch seconds per placement."""
    cal = instance.calendar.extended(schedule.makespan)
    return {
        "status": schedule.status,
        "makespan": schedule.makespan,
        "total_tardiness": schedule.total_tardiness,
        "objective": schedule.objective,
        "placements": [
            {
                "batch_id": p.batch_id,
                "line_id": p.line_id,
                "start": p.start,
                "end": p.end,
                "start_epoch": cal.to_epoch_seconds(p.start),
                "end_epoch": cal.to_epoch_seconds(p.end),
            }
            for p in schedule.placements
        ],
    }
