"""Solution strategies over the allocation episode.

All strategies emit only mask-legal actions and drive the episode to its
terminal state. Results carry the episode trace so returns can be
recomputed independently.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from .mdp import WorkerAllocationEnv

UCT_EXPLORATION = math.sqrt(2)

POLICY_FEATURES = (
    "bias",
    "preference",
    "resilience",
    "experience",
    "slot_need",
    "worker_load",
    "fairness_pull",
)


class TrainingError(RuntimeError):
    """Policy parameters became non-finite during training."""

    def __init__(self, step: int):
        super().__init__(f"training diverged at step {step}")
        self.step = step


@dataclass
class SolveResult:
    strategy: str
    total_return: float
    decision_steps: int
    pre_assignments: int
    unfilled_slots: int
    wall_ms: float
    trace: list[dict]
    env: WorkerAllocationEnv

    def recomputed_return(self) -> float:
        return sum(entry["reward"] for entry in self.trace)


def _finish(env: WorkerAllocationEnv, strategy: str, total: float, t0: float) -> SolveResult:
    return SolveResult(
        strategy=strategy,
        total_return=total,
        decision_steps=env.decision_steps,
        pre_assignments=env.pre_assignments,
        unfilled_slots=env.unfilled_slots(),
        wall_ms=(time.monotonic() - t0) * 1000.0,
        trace=list(env.trace),
        env=env,
    )


def immediate_rewards(env: WorkerAllocationEnv, actions: Iterable[int]) -> dict[int, float]:
    """Reward each action would yield right now, via trial steps."""
    out: dict[int, float] = {}
    snap = env.snapshot()
    for action in actions:
        outcome = env.step(int(action))
        out[int(action)] = outcome.reward
        env.restore(snap)
    return out


def greedy_solve(env: WorkerAllocationEnv) -> SolveResult:
    """Always take the action with the highest immediate reward.

    Ties break toward the lowest flattened action index.
    """
    t0 = time.monotonic()
    env.reset()
    total = 0.0
    while not env.terminal:
        legal = env.legal_actions()
        rewards = immediate_rewards(env, legal)
        best_action = None
        best_reward = -math.inf
        for action in legal:  # ascending, so the first best wins ties
            if rewards[int(action)] > best_reward:
                best_reward = rewards[int(action)]
                best_action = int(action)
        total += env.step(best_action).reward
    return _finish(env, "greedy", total, t0)


def random_solve(env: WorkerAllocationEnv, seed: int = 0) -> SolveResult:
    """Uniform choice among legal actions; the baseline strategy."""
    t0 = time.monotonic()
    env.reset()
    rng = np.random.default_rng(seed)
    total = 0.0
    while not env.terminal:
        legal = env.legal_actions()
        action = int(legal[rng.integers(len(legal))])
        total += env.step(action).reward
    return _finish(env, "random", total, t0)


class _Node:
    __slots__ = ("children", "untried", "visits", "value_sum")

    def __init__(self, legal: list[int]):
        self.children: dict[int, _Node] = {}
        self.untried = list(legal)
        self.visits = 0
        self.value_sum = 0.0

    def mean(self) -> float:
        return self.value_sum / self.visits if self.visits else 0.0


def _uct_pick(node: _Node, exploration: float) -> int:
    log_n = math.log(node.visits)
    best_action, best_score = None, -math.inf
    for action in sorted(node.children):
        child = node.children[action]
        score = child.mean() + exploration * math.sqrt(log_n / child.visits)
        if score > best_score:
            best_score, best_action = score, action
    return best_action


def mcts_solve(
    env: WorkerAllocationEnv,
    rollouts_per_step: int = 3,
    seed: int = 0,
    exploration: float = UCT_EXPLORATION,
    time_limit_ms: float | None = None,
) -> SolveResult:
    """Monte-Carlo tree search: before committing each action, run the
    configured number of random rollouts through a UCT tree, then commit
    the most visited root child (ties: higher mean value, lower index).

    When ``time_limit_ms`` is set, extra rollouts are skipped once the
    budget is spent; each decision still runs at least one rollout and the
    episode always completes.
    """
    if rollouts_per_step < 1:
        raise ValueError("rollouts_per_step must be >= 1")
    t0 = time.monotonic()
    deadline = None if time_limit_ms is None else t0 + time_limit_ms / 1000.0
    env.reset()
    rng = np.random.default_rng(seed)
    total = 0.0

    while not env.terminal:
        legal = [int(a) for a in env.legal_actions()]
        if len(legal) == 1:
            total += env.step(legal[0]).reward
            continue
        root_snap = env.snapshot()
        root = _Node(legal)

        for sim in range(rollouts_per_step):
            if sim > 0 and deadline is not None and time.monotonic() > deadline:
                break
            node = root
            path = [root]
            gained = 0.0
            # selection
            while not node.untried and node.children:
                action = _uct_pick(node, exploration)
                gained += env.step(action).reward
                node = node.children[action]
                path.append(node)
            # expansion
            if node.untried and not env.terminal:
                action = int(node.untried.pop(rng.integers(len(node.untried))))
                gained += env.step(action).reward
                child = _Node([int(a) for a in env.legal_actions()])
                node.children[action] = child
                node = child
                path.append(node)
            # rollout
            while not env.terminal:
                options = env.legal_actions()
                gained += env.step(int(options[rng.integers(len(options))])).reward
            for visited in path:
                visited.visits += 1
                visited.value_sum += gained
            env.restore(root_snap)

        best = max(
            root.children.items(),
            key=lambda item: (item[1].visits, item[1].mean(), -item[0]),
        )[0]
        total += env.step(best).reward
    return _finish(env, "mcts", total, t0)


# -- learned policy ----------------------------------------------------------


@dataclass(frozen=True)
class Policy:
    """Masked softmax policy, linear in per-action features of the state."""

    theta: np.ndarray
    version: int = 1

    def action_scores(self, env: WorkerAllocationEnv) -> np.ndarray:
        """Score per action; masked-out actions score -inf."""
        scores = np.full(env.n_actions, -np.inf)
        legal = env.legal_actions()
        if len(legal):
            feats = _action_features(env, legal)
            scores[legal] = feats @ self.theta
        return scores

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "features": list(POLICY_FEATURES),
            "theta": [float(x) for x in self.theta],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Policy":
        if doc.get("version") != 1 or doc.get("features") != list(POLICY_FEATURES):
            raise ValueError("unsupported policy document")
        return cls(theta=np.asarray(doc["theta"], dtype=np.float64), version=1)

    @classmethod
    def uniform(cls) -> "Policy":
        return cls(theta=np.zeros(len(POLICY_FEATURES)))


def _action_features(env: WorkerAllocationEnv, actions: np.ndarray) -> np.ndarray:
    """Feature rows for each flattened action, independent of instance size."""
    n_assign = env.sigma.sum(axis=0).astype(np.float64)
    pref_sums = (env.sigma * env.pref).sum(axis=0)
    with np.errstate(invalid="ignore"):
        worker_means = np.where(n_assign > 0, pref_sums / np.maximum(n_assign, 1), 0.0)
    active_means = worker_means[n_assign > 0]
    grand = float(active_means.mean()) if len(active_means) else 0.0

    feats = np.zeros((len(actions), len(POLICY_FEATURES)))
    for i, action in enumerate(actions):
        r, w = env.unflatten(int(action))
        need = (env.req[r] - env.alloc[r]) / env.req[r]
        load = n_assign[w] / max(1, len(env.intervals))
        pull = (worker_means[w] - grand) if n_assign[w] > 0 else 0.0
        feats[i] = (
            1.0,
            env.pref[r, w],
            env.resil[r, w],
            env.exper[r, w],
            need,
            load,
            pull,
        )
    return feats


def rl_solve(env: WorkerAllocationEnv, policy: Policy) -> SolveResult:
    """Greedy-argmax execution of a (trained or uniform) policy."""
    t0 = time.monotonic()
    env.reset()
    total = 0.0
    while not env.terminal:
        scores = policy.action_scores(env)
        action = int(np.argmax(scores))  # -inf on masked actions; ties -> lowest
        total += env.step(action).reward
    return _finish(env, "rl", total, t0)


def rl_train(
    episodes: Iterator[WorkerAllocationEnv] | Callable[[int], WorkerAllocationEnv],
    total_steps: int,
    seed: int = 0,
    learning_rate: float = 0.05,
) -> tuple[Policy, list[tuple[int, float]]]:
    """Train the linear policy by undiscounted policy gradient.

    ``episodes`` is either an iterator of fresh episode environments or a
    callable mapping the episode number to one. Training consumes decision
    steps until ``total_steps`` is reached; ``total_steps=0`` returns the
    uniform policy. Also returns the training curve as (steps, return).
    """
    rng = np.random.default_rng(seed)
    theta = np.zeros(len(POLICY_FEATURES))
    curve: list[tuple[int, float]] = []
    steps_done = 0
    episode_no = 0
    baseline = 0.0
    baseline_ready = False

    def next_env() -> WorkerAllocationEnv:
        nonlocal episode_no
        env = episodes(episode_no) if callable(episodes) else next(episodes)
        episode_no += 1
        return env

    while steps_done < total_steps:
        env = next_env()
        env.reset()
        grads = []
        episode_return = 0.0
        while not env.terminal:
            legal = env.legal_actions()
            feats = _action_features(env, legal)
            logits = feats @ theta
            logits -= logits.max()
            probs = np.exp(logits)
            probs /= probs.sum()
            choice = rng.choice(len(legal), p=probs)
            grads.append(feats[choice] - probs @ feats)
            episode_return += env.step(int(legal[choice])).reward
            steps_done += 1

        if not baseline_ready:
            baseline, baseline_ready = episode_return, True
        advantage = (episode_return - baseline) / max(1, env.decision_steps)
        baseline = 0.9 * baseline + 0.1 * episode_return
        theta = theta + learning_rate * advantage * np.sum(grads, axis=0)
        if not np.isfinite(theta).all():
            raise TrainingError(steps_done)
        curve.append((steps_done, episode_return))

    return Policy(theta=theta), curve
