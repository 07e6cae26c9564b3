"""Planning service: one parametrized solve endpoint covering the
objective x reward x strategy grid, content-addressed solution records on
disk, and server-held episodes for manual stepping.

The static plant context is fixed at app creation (defaulting to the
bundled demo context); orders are uploaded per request as CSV.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import JSONResponse

import dataclasses

from .demo import OBJECTIVE_PARAMETRIZATIONS, demo_context
from .generator import GeneratorConfig, generate
from .intervals import decompose
from .lineplan import (
    BatchPlacement,
    NoSolutionError,
    OrderLineSchedule,
    SolveBudget,
    schedule_to_dict,
    solve,
)
from .mdp import REWARD_PARAMETRIZATIONS, IllegalActionError, WorkerAllocationEnv
from .model import Instance, ValidationError, load_instance
from .report import export_timeboxes, kpis
from .strategies import Policy, SolveResult, greedy_solve, mcts_solve, rl_solve, rl_train

STRATEGIES = ("greedy", "rl", "mcts")

_RL_TRAIN_SEEDS = {"preference": 11, "resilience": 23, "experience": 37, "balanced": 53}
_RL_TRAIN_CONFIG = GeneratorConfig(
    n_batches=(3, 5), n_lines=(2, 2), n_workers=(5, 8), quantity=(30, 120),
    required_workers=(1, 3), setup_minutes=(0, 20),
)


def _canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class PolicyCache:
    """Lazily trained policy per reward parametrization, deterministic."""

    def __init__(self, total_steps: int = 1500):
        self.total_steps = total_steps
        self._policies: dict[str, Policy] = {}
        self._lock = threading.Lock()

    def get(self, reward_name: str) -> Policy:
        with self._lock:
            if reward_name not in self._policies:
                self._policies[reward_name] = self._train(reward_name)
            return self._policies[reward_name]

    def _train(self, reward_name: str) -> Policy:
        base = _RL_TRAIN_SEEDS[reward_name]
        config = REWARD_PARAMETRIZATIONS[reward_name]

        def episode(i: int) -> WorkerAllocationEnv:
            instance = generate(dataclasses.replace(_RL_TRAIN_CONFIG, seed=base * 10_000 + i))
            schedule = solve(instance, OBJECTIVE_PARAMETRIZATIONS["balanced"], SolveBudget(2_000))
            grid = instance.calendar.extended(schedule.makespan).shift_grid()
            intervals = decompose(schedule, grid, instance)
            return WorkerAllocationEnv(intervals, instance, config, grid)

        policy, _ = rl_train(episode, total_steps=self.total_steps, seed=base)
        return policy


def run_allocation(
    instance: Instance,
    objective: str,
    reward: str,
    strategy: str,
    seed: int,
    layer1_budget: SolveBudget,
    policies: PolicyCache,
    mcts_rollouts: int = 3,
    layer2_budget_ms: float | None = 5_000,
):
    """Both layers end to end; returns (schedule, intervals, result)."""
    weights = OBJECTIVE_PARAMETRIZATIONS[objective]
    schedule = solve(instance, weights, layer1_budget, seed=seed)
    grid = instance.calendar.extended(schedule.makespan).shift_grid()
    intervals = decompose(schedule, grid, instance)
    env = WorkerAllocationEnv(intervals, instance, REWARD_PARAMETRIZATIONS[reward], grid)
    if strategy == "greedy":
        result = greedy_solve(env)
    elif strategy == "mcts":
        result = mcts_solve(
            env, rollouts_per_step=mcts_rollouts, seed=seed, time_limit_ms=layer2_budget_ms
        )
    elif strategy == "rl":
        result = rl_solve(env, policies.get(reward))
    else:
        raise ValidationError(f"unknown strategy {strategy!r}")
    return schedule, intervals, result


def build_record(
    instance: Instance,
    orders_csv: str,
    objective: str,
    reward: str,
    strategy: str,
    days_to_plan: int,
    seed: int,
    schedule,
    result: SolveResult,
) -> dict:
    """Deterministic record body; volatile fields stay out so replays match."""
    summary = kpis(result).to_dict() if result.env.assignments() else None
    return {
        "request": {
            "objective": objective,
            "reward": reward,
            "strategy": strategy,
            "days_to_plan": days_to_plan,
            "seed": seed,
            "orders_sha256": hashlib.sha256(orders_csv.encode()).hexdigest(),
            "orders_csv": orders_csv,
        },
        "schedule": schedule_to_dict(schedule, instance),
        "allocation": {
            "strategy": result.strategy,
            "total_return": result.total_return,
            "decision_steps": result.decision_steps,
            "pre_assignments": result.pre_assignments,
            "unfilled_slots": result.unfilled_slots,
            "trace": result.trace,
        },
        "kpis": summary,
        "timeboxes": export_timeboxes(schedule, result, instance),
    }


class RecordStore:
    """Append-only JSON documents keyed by content hash."""

    def __init__(self, directory: str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def put(self, record: dict) -> tuple[str, dict]:
        record_id = hashlib.sha256(_canonical_json(record).encode()).hexdigest()[:16]
        path = self.directory / f"{record_id}.json"
        if not path.exists():
            doc = {
                "id": record_id,
                "created_at": datetime.now(timezone.utc).isoformat(),
                "record": record,
            }
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh)
            os.replace(tmp, path)
        return record_id, self.get(record_id)

    def get(self, record_id: str) -> dict:
        path = self.directory / f"{record_id}.json"
        if not path.exists():
            raise KeyError(record_id)
        return json.loads(path.read_text(encoding="utf-8"))

    def index(self) -> list[dict]:
        docs = []
        for path in sorted(self.directory.glob("*.json")):
            doc = json.loads(path.read_text(encoding="utf-8"))
            record = doc["record"]
            docs.append(
                {
                    "id": doc["id"],
                    "created_at": doc["created_at"],
                    "parametrization": {
                        "objective": record["request"]["objective"],
                        "reward": record["request"]["reward"],
                        "strategy": record["request"]["strategy"],
                    },
                    "objective_value": record["schedule"]["objective"],
                    "kpis": record["kpis"],
                }
            )
        docs.sort(key=lambda d: d["created_at"])
        return docs


class EpisodeHandle:
    def __init__(self, episode_id: str, env: WorkerAllocationEnv, solution_id: str):
        self.id = episode_id
        self.env = env
        self.solution_id = solution_id
        self.lock = threading.Lock()


def create_app(
    context: dict | None = None,
    records_dir: str | None = None,
    layer1_budget_ms: int = 10_000,
    layer2_budget_ms: int = 5_000,
    rl_train_steps: int = 1500,
) -> FastAPI:
    app = FastAPI(title="fairplan planning service", version="0.1.0")
    static_context = context if context is not None else demo_context()
    store = RecordStore(records_dir or os.environ.get("FAIRPLAN_RECORDS", "./records"))
    policies = PolicyCache(total_steps=rl_train_steps)
    episodes: dict[str, EpisodeHandle] = {}
    counters = {"episode": 0}
    state_lock = threading.Lock()

    def fail(status: int, detail: str):
        raise HTTPException(status_code=status, detail=detail)

    @app.post("/solve")
    async def solve_endpoint(
        orders: UploadFile = File(...),
        objective: str = Form("balanced"),
        reward: str = Form("balanced"),
        strategy: str = Form("greedy"),
        days_to_plan: int = Form(5),
        seed: int = Form(0),
    ):
        if objective not in OBJECTIVE_PARAMETRIZATIONS:
            fail(400, f"objective must be one of {sorted(OBJECTIVE_PARAMETRIZATIONS)}, got {objective!r}")
        if reward not in REWARD_PARAMETRIZATIONS:
            fail(400, f"reward must be one of {sorted(REWARD_PARAMETRIZATIONS)}, got {reward!r}")
        if strategy not in STRATEGIES:
            fail(400, f"strategy must be one of {sorted(STRATEGIES)}, got {strategy!r}")
        if not (1 <= days_to_plan <= 14):
            fail(400, f"days_to_plan must lie in [1, 14], got {days_to_plan}")
        orders_csv = (await orders.read()).decode("utf-8")
        try:
            instance = load_instance(orders_csv, static_context, horizon_days=days_to_plan)
        except (ValidationError, ValueError) as exc:
            fail(400, f"invalid orders upload: {exc}")
        t0 = time.monotonic()
        try:
            schedule, _, result = run_allocation(
                instance, objective, reward, strategy, seed,
                SolveBudget(time_limit_ms=layer1_budget_ms), policies,
                layer2_budget_ms=layer2_budget_ms,
            )
        except NoSolutionError as exc:
            fail(504, str(exc))
        record = build_record(
            instance, orders_csv, objective, reward, strategy, days_to_plan, seed, schedule, result
        )
        record_id, doc = store.put(record)
        body = {
            "id": record_id,
            "created_at": doc["created_at"],
            "status": schedule.status,
            "wall_ms": (time.monotonic() - t0) * 1000.0,
            "unfilled_slots": result.unfilled_slots,
            "kpis": record["kpis"],
        }
        if result.unfilled_slots > 0:
            return JSONResponse(status_code=422, content=body)
        return body

    @app.get("/solutions")
    def list_solutions():
        return store.index()

    @app.get("/solutions/{record_id}")
    def get_solution(record_id: str):
        try:
            return store.get(record_id)
        except KeyError:
            fail(404, f"unknown solution {record_id!r}")

    @app.post("/episodes")
    def create_episode(body: dict):
        solution_id = body.get("solution_id")
        if not solution_id:
            fail(400, "body must carry solution_id")
        try:
            doc = store.get(solution_id)
        except KeyError:
            fail(404, f"unknown solution {solution_id!r}")
        record = doc["record"]
        instance = load_instance(
            record["request"]["orders_csv"], static_context,
            horizon_days=record["request"]["days_to_plan"],
        )
        placements = tuple(
            BatchPlacement(p["batch_id"], p["line_id"], p["start"], p["end"])
            for p in record["schedule"]["placements"]
        )
        schedule = OrderLineSchedule(
            placements=placements,
            makespan=record["schedule"]["makespan"],
            total_tardiness=record["schedule"]["total_tardiness"],
            objective=record["schedule"]["objective"],
            status=record["schedule"]["status"],
        )
        grid = instance.calendar.extended(schedule.makespan).shift_grid()
        intervals = decompose(schedule, grid, instance)
        env = WorkerAllocationEnv(
            intervals, instance, REWARD_PARAMETRIZATIONS[record["request"]["reward"]], grid
        )
        with state_lock:
            counters["episode"] += 1
            episode_id = f"ep-{counters['episode']:04d}"
            episodes[episode_id] = EpisodeHandle(episode_id, env, solution_id)
        return {
            "id": episode_id,
            "solution_id": solution_id,
            "n_rows": env.n_rows,
            "n_workers": env.n_workers,
            "n_actions": env.n_actions,
            "n_slots": env.n_slots,
            "terminal": env.terminal,
        }

    def _episode(episode_id: str) -> EpisodeHandle:
        handle = episodes.get(episode_id)
        if handle is None:
            fail(404, f"unknown episode {episode_id!r}")
        return handle

    def _rows_payload(env: WorkerAllocationEnv) -> list[dict]:
        return [
            {
                "r_idx": r,
                "interval": env.row_interval(r).index,
                "start": env.row_interval(r).start,
                "end": env.row_interval(r).end,
                "line_id": row.line_id,
                "geometry_id": row.geometry_id,
                "order_id": row.order_id,
                "required": int(env.req[r]),
                "allocated": int(env.alloc[r]),
                "done": bool(env.done[r]),
                "workers": [env.worker_ids[w] for w in range(env.n_workers) if env.sigma[r, w]],
            }
            for r, row in enumerate(env.rows)
        ]

    @app.get("/episodes/{episode_id}/mask")
    def episode_mask(episode_id: str):
        handle = _episode(episode_id)
        with handle.lock:
            env = handle.env
            active = env.active_interval
            return {
                "mask": env.action_mask().tolist(),
                "n_rows": env.n_rows,
                "n_workers": env.n_workers,
                "workers": env.worker_ids,
                "rows": _rows_payload(env),
                "active_interval": active.index if active else None,
                "terminal": env.terminal,
                "decision_steps": env.decision_steps,
            }

    @app.post("/episodes/{episode_id}/step")
    def episode_step(episode_id: str, body: dict):
        handle = _episode(episode_id)
        if "action" not in body:
            fail(400, "body must carry an integer action")
        with handle.lock:
            env = handle.env
            if env.terminal:
                fail(410, "episode is already terminal")
            try:
                outcome = env.step(int(body["action"]))
            except IllegalActionError as exc:
                fail(409, str(exc))
            entry = env.trace[-1]
            active = env.active_interval
            return {
                "reward": outcome.reward,
                "terminal": outcome.terminal,
                "r_idx": entry["r_idx"],
                "w_idx": entry["w_idx"],
                "worker_id": env.worker_ids[entry["w_idx"]],
                "line_id": env.rows[entry["r_idx"]].line_id,
                "continuations": entry["continuations"],
                "active_interval": active.index if active else None,
                "decision_steps": env.decision_steps,
                "total_return": sum(e["reward"] for e in env.trace),
            }

    return app
