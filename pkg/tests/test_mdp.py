import dataclasses
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairplan.caltime import SolverCalendar
from fairplan.generator import GeneratorConfig, generate
from fairplan.intervals import decompose, slot_count
from fairplan.lineplan import BatchPlacement, ObjectiveWeights, OrderLineSchedule, solve
from fairplan.mdp import (
    ActionRangeError,
    IllegalActionError,
    RewardConfig,
    WorkerAllocationEnv,
    fairness_score,
    flatten_action,
    unflatten_action,
)
from fairplan.model import GeometryBatch, HumanFactorTable, Instance, LineOption, Worker
from fairplan.strategies import random_solve

from oracles import fairness_reference

MON = datetime(2023, 9, 11, 6, 0)


def tiny_instance(n_workers=3, req=2, mu=1, shifts=("early",), n_batches=1, dur=480):
    batches = []
    for i in range(n_batches):
        batches.append(
            GeometryBatch(
                id=f"b{i+1}",
                geometry_id=f"G{i+1}",
                order_id=f"O{i+1}",
                quantity=dur,
                due_date=5000,
                priority=False,
                options={"l1": LineOption(0, 1.0, req)},
            )
        )
    workers = tuple(Worker(f"w{i+1}", frozenset(shifts)) for i in range(n_workers))
    triples = {
        (w.id, "l1", b.geometry_id): (mu, 0.1 * (i + 1) % 1.0, 0.5)
        for i, w in enumerate(workers)
        for b in batches
    }
    factors = HumanFactorTable(triples, {w.id: 0.4 for w in workers})
    return Instance(
        batches=tuple(batches),
        lines=("l1",),
        workers=workers,
        factors=factors,
        calendar=SolverCalendar(MON, 5),
    )


def env_for(instance, config=None, **kwargs):
    sched = solve(instance, ObjectiveWeights(1, 1))
    ivs = decompose(sched, instance.calendar.shift_grid(), instance)
    return WorkerAllocationEnv(ivs, instance, config or RewardConfig(1, 1, 1, 1), **kwargs)


# -- flattening ---------------------------------------------------------------


def test_flatten_paper_pairs():
    assert flatten_action(1, 0, 18, 43) == 43
    assert unflatten_action(43, 18, 43) == (1, 0)
    assert unflatten_action(171, 18, 43) == (3, 42)
    assert flatten_action(0, 0, 18, 43) == 0


def test_flatten_roundtrip_full_demo_space():
    for action in range(18 * 43):
        r, w = unflatten_action(action, 18, 43)
        assert flatten_action(r, w, 18, 43) == action


def test_flatten_range_errors():
    with pytest.raises(ActionRangeError):
        flatten_action(18, 0, 18, 43)
    with pytest.raises(ActionRangeError):
        unflatten_action(774, 18, 43)
    with pytest.raises(ActionRangeError):
        unflatten_action(-1, 18, 43)


# -- reset --------------------------------------------------------------------


def test_demo_reset_shape(demo_env):
    assert demo_env.n_rows == 18
    assert demo_env.n_workers == 43
    assert demo_env.n_actions == 774
    assert demo_env.n_slots == 83
    assert not demo_env.terminal
    assert demo_env.sigma.sum() == 0
    assert demo_env.alloc.sum() == 0
    assert demo_env.active_interval.index == 1


def test_no_clearance_terminal_at_reset():
    env = env_for(tiny_instance(mu=0))
    assert env.terminal
    assert not env.action_mask().any()


def test_single_row_three_eligible():
    env = env_for(tiny_instance(n_workers=3, req=2))
    assert not env.done.any()
    assert env.action_mask().sum() == 3


# -- masking ------------------------------------------------------------------


def test_mask_only_active_interval(demo_env):
    mask = demo_env.action_mask()
    rows_with_actions = {r for r in range(demo_env.n_rows) if mask[r * 43 : (r + 1) * 43].any()}
    assert rows_with_actions == {0, 1, 2}  # the three rows of the first interval


def test_mask_excludes_offshift_and_placed_workers(demo_env):
    mask = demo_env.action_mask()
    # w16 (index 15) works the late shift; the first interval is early
    assert not mask[0 * 43 + 15] and not mask[1 * 43 + 15]
    demo_env.step(demo_env.flatten(1, 0))  # place w01 on row 1
    mask = demo_env.action_mask()
    assert not mask[0 * 43 + 0] and not mask[1 * 43 + 0] and not mask[2 * 43 + 0]


def test_mask_matches_step_legality(demo_env):
    mask = demo_env.action_mask()
    legal = int(np.flatnonzero(mask)[0])
    illegal = int(np.flatnonzero(~mask)[0])
    before = demo_env.snapshot()
    with pytest.raises(IllegalActionError):
        demo_env.step(illegal)
    after = demo_env.snapshot()
    assert (before[0] == after[0]).all() and before[3] == after[3]  # state unchanged
    demo_env.step(legal)  # succeeds


# -- stepping and continuation -------------------------------------------------


def test_step_a43_assigns_w01_to_row1(demo_env):
    outcome = demo_env.step(43)
    assert demo_env.sigma[1, 0] == 1
    assert demo_env.rows[1].line_id == "l2"
    assert demo_env.rows[1].geometry_id == "GEO-05"
    assert demo_env.alloc[1] == 1
    assert outcome.reward == pytest.approx(0.84 + 0.79 + 0.83, abs=1e-9)
    assert not outcome.terminal


def test_step_a171_after_interval_one(demo_env):
    for _ in range(15):
        demo_env.step(int(demo_env.legal_actions()[0]))
    assert demo_env.active_interval.index == 2
    assert demo_env.decision_steps == 15
    demo_env.step(171)
    assert demo_env.sigma[3, 42] == 1  # w43 on the fourth row


def test_exclusivity_within_interval(demo_env):
    demo_env.step(demo_env.flatten(0, 0))
    for r in demo_env._rows_of_interval[0]:
        total = sum(demo_env.sigma[r2, 0] for r2 in demo_env._rows_of_interval[0])
        assert total == 1


def test_continuation_cascades_across_night_boundary(demo_env):
    # fill intervals 1..3; the night-shift rows of interval 3 carry into interval 4
    while demo_env.active_interval.index <= 2:
        demo_env.step(int(demo_env.legal_actions()[0]))
    assert demo_env.pre_assignments == 0
    start_steps = demo_env.decision_steps
    while demo_env.active_interval is not None and demo_env.active_interval.index == 3:
        demo_env.step(int(demo_env.legal_actions()[0]))
    assert demo_env.pre_assignments == 11  # 6 slots of GEO-08 plus 5 of GEO-04
    # interval 4 rows for those lines are pre-filled
    rows4 = demo_env._rows_of_interval[3]
    for r in rows4:
        row = demo_env.rows[r]
        if row.geometry_id in ("GEO-08", "GEO-04"):
            assert demo_env.alloc[r] == demo_env.req[r]
            assert demo_env.done[r]
    assert demo_env.decision_steps == start_steps + 14


def test_continuation_blocked_by_shift_change(demo_env):
    # interval 1 assignments never carry into interval 2 (early -> late shift)
    for _ in range(15):
        demo_env.step(int(demo_env.legal_actions()[0]))
    assert demo_env.pre_assignments == 0
    rows2 = demo_env._rows_of_interval[1]
    assert all(demo_env.alloc[r] == 0 for r in rows2)


def test_continuation_carries_reward_of_carried_slots():
    # two back-to-back intervals of one batch inside one shift
    inst = tiny_instance(n_workers=2, req=1, dur=480)
    sched = OrderLineSchedule(
        placements=(BatchPlacement("b1", "l1", 0, 480),),
        makespan=480,
        total_tardiness=0,
        objective=480.0,
    )
    # split the placement at minute 240 by a second batch on another line
    inst2 = tiny_instance(n_workers=2, req=1, n_batches=2, dur=480)
    sched2 = OrderLineSchedule(
        placements=(
            BatchPlacement("b1", "l1", 0, 480),
            BatchPlacement("b2", "l2", 0, 240),
        ),
        makespan=480,
        total_tardiness=0,
        objective=480.0,
    )
    batches = list(inst2.batches)
    batches[1] = dataclasses.replace(batches[1], options={"l2": LineOption(0, 1.0, 1)})
    inst2 = dataclasses.replace(inst2, batches=tuple(batches), lines=("l1", "l2"))
    triples = {
        (w.id, lid, g): (1, 0.5, 0.5)
        for w in inst2.workers
        for lid in ("l1", "l2")
        for g in ("G1", "G2")
    }
    inst2 = dataclasses.replace(
        inst2, factors=HumanFactorTable(triples, {w.id: 0.4 for w in inst2.workers})
    )
    ivs = decompose(sched2, inst2.calendar.shift_grid(), inst2)
    assert [(iv.start, iv.end) for iv in ivs] == [(0, 240), (240, 480)]
    env = WorkerAllocationEnv(ivs, inst2, RewardConfig(1, 0, 0, 0))
    # assigning a worker to b1 in the first interval carries into the second
    action = env.flatten(0, 0) if env.rows[0].batch_id == "b1" else env.flatten(1, 0)
    outcome = env.step(action)
    assert env.pre_assignments == 1
    assert outcome.reward == pytest.approx(0.5 + 0.5)


def test_line_only_continuity_mode():
    # same line, geometry changes mid-shift: carried only in line-only mode
    inst = tiny_instance(n_workers=2, req=1, n_batches=2, dur=240)
    sched = OrderLineSchedule(
        placements=(
            BatchPlacement("b1", "l1", 0, 240),
            BatchPlacement("b2", "l1", 240, 480),
        ),
        makespan=480,
        total_tardiness=0,
        objective=480.0,
    )
    ivs = decompose(sched, inst.calendar.shift_grid(), inst)
    faithful = WorkerAllocationEnv(ivs, inst, RewardConfig(1, 1, 1, 1))
    faithful.step(faithful.legal_actions()[0])
    assert faithful.pre_assignments == 0
    relaxed = WorkerAllocationEnv(ivs, inst, RewardConfig(1, 1, 1, 1), continuity="line-only")
    relaxed.step(relaxed.legal_actions()[0])
    assert relaxed.pre_assignments == 1


# -- rewards -------------------------------------------------------------------


def test_degenerate_weights_zero_dense(demo, demo_intervals):
    env = WorkerAllocationEnv(demo_intervals, demo, RewardConfig(0, 0, 0, 1))
    total = 0.0
    while not env.terminal:
        out = env.step(int(env.legal_actions()[0]))
        if not out.terminal:
            assert out.reward == 0.0
        total += out.reward
    # everything accrued is the terminal fairness payout
    assert total == pytest.approx(env.w_fair_star * fairness_score(env.preference_lists()))


def test_identical_means_terminal_fairness_is_full():
    inst = tiny_instance(n_workers=2, req=2)
    triples = {(w.id, "l1", "G1"): (1, 0.6, 0.5) for w in inst.workers}
    inst = dataclasses.replace(
        inst, factors=HumanFactorTable(triples, {w.id: 0.4 for w in inst.workers})
    )
    env = env_for(inst, RewardConfig(0, 0, 0, 2.0))
    rewards = []
    while not env.terminal:
        rewards.append(env.step(int(env.legal_actions()[0])).reward)
    assert rewards[-1] == pytest.approx(env.n_slots * 2.0 * 1.0)


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(-1, 0, 0, 0)
    assert RewardConfig().discount == 1.0


# -- fairness ------------------------------------------------------------------


def test_fairness_examples():
    assert fairness_score([[0.3, 0.5], [0.4]]) == pytest.approx(1.0)
    assert fairness_score([[0.0], [1.0]]) == pytest.approx(0.0)
    assert fairness_score([[0.5], [0.5], [0.8]]) == pytest.approx(0.92, abs=1e-12)
    assert fairness_score([[0.5], [0.5], [0.8]]) == pytest.approx(
        fairness_reference([0.5, 0.5, 0.8]), abs=1e-12
    )


def test_fairness_excludes_empty_workers():
    assert fairness_score([[0.7], [], [0.7]]) == pytest.approx(1.0)


def test_fairness_empty_domain_error():
    with pytest.raises(ValueError):
        fairness_score([[], []])


@given(
    st.lists(
        st.lists(st.floats(0, 1, allow_nan=False), min_size=0, max_size=5),
        min_size=1,
        max_size=8,
    ).filter(lambda lists: any(lists))
)
@settings(max_examples=200, deadline=None)
def test_fairness_bounded(lists):
    assert 0.0 <= fairness_score(lists) <= 1.0 + 1e-12


# -- episode accounting ----------------------------------------------------------


def episode_identity(instance, seed):
    sched = solve(instance, ObjectiveWeights(1, 1))
    grid = instance.calendar.extended(sched.makespan).shift_grid()
    ivs = decompose(sched, grid, instance)
    if not ivs:
        return None
    env = WorkerAllocationEnv(ivs, instance, RewardConfig(1, 1, 1, 1), grid)
    result = random_solve(env, seed=seed)
    assert result.decision_steps + result.pre_assignments + result.unfilled_slots == env.n_slots
    # undiscounted return decomposes into dense terms plus the fairness payout
    dense = sum(
        env.pref[r, w] + env.resil[r, w] + env.exper[r, w] for r, w in env.assignments()
    )
    fairness = fairness_score(env.preference_lists()) if env.assignments() else 0.0
    expected = dense + env.n_slots * 1.0 * fairness
    assert result.total_return == pytest.approx(expected, abs=1e-9)
    return result


@pytest.mark.parametrize("seed", range(25))
def test_episode_accounting_random_instances(seed):
    instance = generate(GeneratorConfig(seed=seed))
    episode_identity(instance, seed)


def test_episode_accounting_demo(demo, demo_intervals):
    # lowest-action walk: every slot fills, the night handover carries 11 slots
    env = WorkerAllocationEnv(demo_intervals, demo, RewardConfig(1, 1, 1, 1))
    while not env.terminal:
        env.step(int(env.legal_actions()[0]))
    assert env.decision_steps == 72
    assert env.pre_assignments == 11
    assert env.unfilled_slots() == 0

    env2 = WorkerAllocationEnv(demo_intervals, demo, RewardConfig(1, 1, 1, 1))
    result = random_solve(env2, seed=5)
    assert result.decision_steps + result.pre_assignments + result.unfilled_slots == 83
    assert result.unfilled_slots == 0


def test_per_interval_exclusivity_always(demo_env):
    rng = np.random.default_rng(0)
    while not demo_env.terminal:
        legal = demo_env.legal_actions()
        demo_env.step(int(legal[rng.integers(len(legal))]))
        for k, rows in enumerate(demo_env._rows_of_interval):
            per_worker = demo_env.sigma[rows].sum(axis=0)
            assert per_worker.max() <= 1


# -- state view and snapshots ------------------------------------------------------


def test_state_view_layout(demo_env):
    view = demo_env.state_view()
    assert view.shape == (18, 7 + 6 * 43)
    assert view[0, 0] == 1 and view[0, 1] == 0 and view[0, 2] == 480
    assert list(view[:3, 4]) == [6.0, 5.0, 4.0]  # required workers of interval 1
    demo_env.step(43)
    view = demo_env.state_view()
    assert view[1, 5] == 1.0  # allocation counter
    assert view[1, 7 + 0 * 6 + 5] == 1.0  # sigma flag of worker 0 on row 1


def test_state_view_zeroes_uncleared():
    env = env_for(tiny_instance(mu=0))
    view = env.state_view()
    base = 7
    assert view[:, base + 2 :: 6].sum() == 0  # preferences read zero
    assert view[:, base + 1 :: 6].sum() == 0  # clearance column itself


def test_snapshot_restore_roundtrip(demo_env):
    snap = demo_env.snapshot()
    demo_env.step(43)
    demo_env.step(int(demo_env.legal_actions()[0]))
    demo_env.restore(snap)
    assert demo_env.sigma.sum() == 0
    assert demo_env.decision_steps == 0
    assert demo_env.trace == []
    out1 = demo_env.step(43)
    assert out1.reward == pytest.approx(2.46, abs=1e-9)


def test_step_determinism(demo, demo_intervals):
    returns = []
    for _ in range(2):
        env = WorkerAllocationEnv(demo_intervals, demo, RewardConfig(1, 1, 1, 1))
        total = 0.0
        while not env.terminal:
            total += env.step(int(env.legal_actions()[0])).reward
        returns.append(total)
    assert returns[0] == returns[1]
