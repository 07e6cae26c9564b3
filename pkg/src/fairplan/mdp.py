"""Episodic worker-to-line allocation over decomposed time intervals.

The state is one row per line-interval with a requirement counter, an
allocation counter, a done flag, and per-worker attribute columns:
availability, medical clearance, preference, resilience, experience and
the current allocation flag. Actions pick one (row, worker) pair in the
active interval, flattened to a single integer. Assigning a worker also
carries them into subsequent intervals while the line keeps producing
the same geometry (the continuation rule), each carry filling a slot
without costing a decision step.

Rewards are dense weighted human-factor scores per assignment plus a
terminal fairness score scaled by the total slot count, so the fairness
weight has the same leverage as each per-step weight at discount 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .caltime import ShiftGrid
from .intervals import TimeInterval, slot_count
from .model import Instance


class IllegalActionError(ValueError):
    """Raised by step() for masked-out actions; the state is unchanged."""


class ActionRangeError(ValueError):
    """Raised when a flattened action or index pair is out of range."""


def flatten_action(r_idx: int, w_idx: int, n_rows: int, n_workers: int) -> int:
    """Row-major flattening of a (row, worker) pair."""
    if not (0 <= r_idx < n_rows and 0 <= w_idx < n_workers):
        raise ActionRangeError(f"({r_idx}, {w_idx}) outside {n_rows} rows x {n_workers} workers")
    return r_idx * n_workers + w_idx


def unflatten_action(action: int, n_rows: int, n_workers: int) -> tuple[int, int]:
    """Inverse of :func:`flatten_action`."""
    if not (0 <= action < n_rows * n_workers):
        raise ActionRangeError(f"action {action} outside [0, {n_rows * n_workers})")
    return action // n_workers, action % n_workers


def fairness_score(preference_lists: Sequence[Sequence[float]]) -> float:
    """1 minus four times the variance of per-worker mean preferences.

    Workers with no assignments are excluded. Means live in [0, 1], so
    their variance is at most 1/4 and the score lands in [0, 1]: 1 when
    every worker averaged the same preference, 0 at maximal disparity.
    """
    means = [sum(p) / len(p) for p in preference_lists if len(p) > 0]
    if not means:
        raise ValueError("fairness is undefined without any assignment")
    grand = sum(means) / len(means)
    variance = sum((m - grand) ** 2 for m in means) / len(means)
    return 1.0 - 4.0 * variance


@dataclass(frozen=True)
class RewardConfig:
    """Weights of the allocation reward. The discount is fixed at 1."""

    w_pi: float = 1.0
    w_rho: float = 1.0
    w_xi: float = 1.0
    w_fair: float = 1.0

    discount = 1.0

    def __post_init__(self):
        if min(self.w_pi, self.w_rho, self.w_xi, self.w_fair) < 0:
            raise ValueError("reward weights must be non-negative")


REWARD_PARAMETRIZATIONS = {
    "preference": RewardConfig(1.0, 0.0, 0.0, 1.0),
    "resilience": RewardConfig(0.0, 1.0, 0.0, 1.0),
    "experience": RewardConfig(0.0, 0.0, 1.0, 1.0),
    "balanced": RewardConfig(1.0, 1.0, 1.0, 1.0),
}


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    terminal: bool


class WorkerAllocationEnv:
    """Mutable episode state offering reset/step/action_mask plus cheap
    snapshot-and-restore for tree search.

    ``continuity`` selects what must stay unchanged on a line for a worker
    to be carried into the next interval: ``"line-and-geometry"`` (default)
    or ``"line-only"``.
    """

    def __init__(
        self,
        intervals: list[TimeInterval],
        instance: Instance,
        config: RewardConfig,
        grid: ShiftGrid | None = None,
        continuity: str = "line-and-geometry",
    ):
        if continuity not in ("line-and-geometry", "line-only"):
            raise ValueError(f"unknown continuity mode {continuity!r}")
        if not intervals:
            raise ValueError("cannot build an episode from an empty decomposition")
        self.intervals = list(intervals)
        self.instance = instance
        self.config = config
        self.continuity = continuity
        self.grid = grid if grid is not None else instance.calendar.shift_grid()

        self.rows = [row for iv in self.intervals for row in iv.rows]
        self.n_rows = len(self.rows)
        self.workers = list(instance.workers)
        self.worker_ids = [w.id for w in self.workers]
        self.n_workers = len(self.workers)
        self.n_actions = self.n_rows * self.n_workers
        self.n_slots = slot_count(self.intervals)
        self.w_fair_star = self.n_slots * config.w_fair

        self._interval_of_row = np.empty(self.n_rows, dtype=np.int64)
        self._rows_of_interval: list[list[int]] = [[] for _ in self.intervals]
        pos = {iv.index: k for k, iv in enumerate(self.intervals)}
        for r, row in enumerate(self.rows):
            k = pos[row.interval_index]
            self._interval_of_row[r] = k
            self._rows_of_interval[k].append(r)

        self.req = np.array([row.required for row in self.rows], dtype=np.int64)
        self._line_order = sorted({row.line_id for row in self.rows})

        factors = instance.factors
        self.alpha = np.zeros((self.n_rows, self.n_workers), dtype=bool)
        self.mu = np.zeros((self.n_rows, self.n_workers), dtype=bool)
        self.pref = np.zeros((self.n_rows, self.n_workers), dtype=np.float64)
        self.resil = np.zeros((self.n_rows, self.n_workers), dtype=np.float64)
        self.exper = np.zeros((self.n_rows, self.n_workers), dtype=np.float64)
        for r, row in enumerate(self.rows):
            iv = self.intervals[self._interval_of_row[r]]
            shift = self.grid.containing(iv.start, iv.end)
            for w, worker in enumerate(self.workers):
                self.alpha[r, w] = shift is not None and shift.label in worker.shifts
                cleared = factors.mu(worker.id, row.line_id, row.geometry_id)
                self.mu[r, w] = bool(cleared)
                if cleared:
                    self.pref[r, w] = factors.pi(worker.id, row.line_id, row.geometry_id)
                    self.resil[r, w] = factors.rho(worker.id, row.line_id, row.geometry_id)
                    self.exper[r, w] = factors.xi(worker.id, row.line_id, row.geometry_id)

        self.reset()

    # -- episode lifecycle -------------------------------------------------

    def reset(self) -> "WorkerAllocationEnv":
        self.sigma = np.zeros((self.n_rows, self.n_workers), dtype=np.int8)
        self.alloc = np.zeros(self.n_rows, dtype=np.int64)
        self.done = np.zeros(self.n_rows, dtype=bool)
        self.active_pos = 0
        self.decision_steps = 0
        self.pre_assignments = 0
        self.trace: list[dict] = []
        for k in range(len(self.intervals)):
            self._refresh_done(k)
        self._advance()
        return self

    @property
    def terminal(self) -> bool:
        return bool(self.done.all())

    @property
    def active_interval(self) -> TimeInterval | None:
        if self.active_pos >= len(self.intervals):
            return None
        return self.intervals[self.active_pos]

    def row_interval(self, r: int) -> TimeInterval:
        """The interval owning row ``r``."""
        return self.intervals[int(self._interval_of_row[r])]

    def _assigned_in_interval(self, k: int) -> np.ndarray:
        rows = self._rows_of_interval[k]
        return self.sigma[rows].any(axis=0)

    def _refresh_done(self, k: int):
        taken = self._assigned_in_interval(k)
        for r in self._rows_of_interval[k]:
            if self.alloc[r] >= self.req[r]:
                self.done[r] = True
            else:
                feasible = self.alpha[r] & self.mu[r] & ~taken
                self.done[r] = not feasible.any()

    def _advance(self):
        while self.active_pos < len(self.intervals) and all(
            self.done[r] for r in self._rows_of_interval[self.active_pos]
        ):
            self.active_pos += 1

    # -- actions -----------------------------------------------------------

    def flatten(self, r_idx: int, w_idx: int) -> int:
        return flatten_action(r_idx, w_idx, self.n_rows, self.n_workers)

    def unflatten(self, action: int) -> tuple[int, int]:
        return unflatten_action(action, self.n_rows, self.n_workers)

    def action_mask(self) -> np.ndarray:
        """Boolean vector over the flattened action space."""
        mask = np.zeros(self.n_actions, dtype=bool)
        if self.terminal or self.active_pos >= len(self.intervals):
            return mask
        k = self.active_pos
        taken = self._assigned_in_interval(k)
        for r in self._rows_of_interval[k]:
            if self.done[r]:
                continue
            legal = self.alpha[r] & self.mu[r] & ~taken
            mask[r * self.n_workers : (r + 1) * self.n_workers] = legal
        return mask

    def legal_actions(self) -> np.ndarray:
        return np.flatnonzero(self.action_mask())

    def _dense_reward(self, r: int, w: int) -> float:
        c = self.config
        return c.w_pi * self.pref[r, w] + c.w_rho * self.resil[r, w] + c.w_xi * self.exper[r, w]

    def _continuation_row(self, r: int) -> int | None:
        k = int(self._interval_of_row[r]) + 1
        if k >= len(self.intervals):
            return None
        row = self.rows[r]
        for r2 in self._rows_of_interval[k]:
            cand = self.rows[r2]
            if cand.line_id != row.line_id:
                continue
            if self.continuity == "line-and-geometry" and cand.geometry_id != row.geometry_id:
                continue
            return r2
        return None

    def step(self, action: int) -> StepOutcome:
        """Apply one flattened assignment.

        Exclusivity within the interval, the continuation cascade, done
        recomputation and the interval advance all happen here. The reward
        bundles the dense terms of the assignment and of every cascade
        carry, plus the scaled fairness score when the episode ends.
        """
        r, w = self.unflatten(action)
        k = int(self._interval_of_row[r])
        if (
            self.terminal
            or k != self.active_pos
            or self.done[r]
            or not self.alpha[r, w]
            or not self.mu[r, w]
            or self._assigned_in_interval(k)[w]
        ):
            raise IllegalActionError(f"action {action} = (row {r}, worker {w}) is masked out")

        for other in self._rows_of_interval[k]:
            self.sigma[other, w] = 0
        self.sigma[r, w] = 1
        self.alloc[r] += 1
        reward = self._dense_reward(r, w)
        touched = {k}

        continuations: list[tuple[int, int]] = []
        cur = r
        while True:
            nxt = self._continuation_row(cur)
            if nxt is None:
                break
            k2 = int(self._interval_of_row[nxt])
            if self.done[nxt] or self.alloc[nxt] >= self.req[nxt]:
                break
            if not (self.alpha[nxt, w] and self.mu[nxt, w]) or self._assigned_in_interval(k2)[w]:
                break
            self.sigma[nxt, w] = 1
            self.alloc[nxt] += 1
            reward += self._dense_reward(nxt, w)
            self.pre_assignments += 1
            continuations.append((nxt, w))
            touched.add(k2)
            cur = nxt

        for k2 in sorted(touched):
            self._refresh_done(k2)
        self._advance()

        terminal = self.terminal
        if terminal:
            reward += self.w_fair_star * self._terminal_fairness()

        reward = float(reward)
        self.decision_steps += 1
        self.trace.append(
            {
                "step": self.decision_steps,
                "action": int(action),
                "r_idx": int(r),
                "w_idx": int(w),
                "reward": reward,
                "continuations": [
                    {"r_idx": int(cr), "w_idx": int(cw)} for cr, cw in continuations
                ],
            }
        )
        return StepOutcome(reward=reward, terminal=terminal)

    def _terminal_fairness(self) -> float:
        lists = self.preference_lists()
        if not any(lists):
            return 0.0  # nothing was ever assigned; no fairness signal
        return fairness_score(lists)

    # -- inspection ---------------------------------------------------------

    def preference_lists(self) -> list[list[float]]:
        """Per-worker preference values of their assignments, worker order."""
        out: list[list[float]] = [[] for _ in range(self.n_workers)]
        for r, w in zip(*np.nonzero(self.sigma)):
            out[int(w)].append(float(self.pref[r, w]))
        return out

    def unfilled_slots(self) -> int:
        return int(np.maximum(self.req - self.alloc, 0).sum())

    def assignments(self) -> list[tuple[int, int]]:
        """(row, worker) pairs with an allocation flag set."""
        return [(int(r), int(w)) for r, w in zip(*np.nonzero(self.sigma))]

    def state_view(self) -> np.ndarray:
        """Numeric matrix of the tabular state, one row per line-interval.

        Columns: interval index, start, end, line position, required,
        allocated, done, then six columns per worker (availability,
        clearance, preference, resilience, experience, allocation flag).
        Column order is part of the contract for learned policies.
        """
        view = np.zeros((self.n_rows, 7 + 6 * self.n_workers), dtype=np.float64)
        line_pos = {lid: i for i, lid in enumerate(self._line_order)}
        for r, row in enumerate(self.rows):
            iv = self.intervals[self._interval_of_row[r]]
            view[r, 0] = iv.index
            view[r, 1] = iv.start
            view[r, 2] = iv.end
            view[r, 3] = line_pos[row.line_id]
            view[r, 4] = self.req[r]
            view[r, 5] = self.alloc[r]
            view[r, 6] = float(self.done[r])
        base = 7
        view[:, base + 0 :: 6] = self.alpha
        view[:, base + 1 :: 6] = self.mu
        view[:, base + 2 :: 6] = self.pref
        view[:, base + 3 :: 6] = self.resil
        view[:, base + 4 :: 6] = self.exper
        view[:, base + 5 :: 6] = self.sigma
        return view

    # -- search support ------------------------------------------------------

    def snapshot(self) -> tuple:
        return (
            self.sigma.copy(),
            self.alloc.copy(),
            self.done.copy(),
            self.active_pos,
            self.decision_steps,
            self.pre_assignments,
            len(self.trace),
        )

    def restore(self, snap: tuple):
        sigma, alloc, done, active_pos, steps, pre, trace_len = snap
        self.sigma = sigma.copy()
        self.alloc = alloc.copy()
        self.done = done.copy()
        self.active_pos = active_pos
        self.decision_steps = steps
        self.pre_assignments = pre
        del self.trace[trace_len:]
