import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fairplan.demo import demo_instance, demo_schedule
from fairplan.intervals import decompose
from fairplan.mdp import RewardConfig, WorkerAllocationEnv


@pytest.fixture(scope="session")
def demo():
    return demo_instance()


@pytest.fixture(scope="session")
def demo_sched(demo):
    return demo_schedule(demo)


@pytest.fixture(scope="session")
def demo_intervals(demo, demo_sched):
    return decompose(demo_sched, demo.calendar.shift_grid(), demo)


@pytest.fixture()
def demo_env(demo, demo_intervals):
    return WorkerAllocationEnv(demo_intervals, demo, RewardConfig(1, 1, 1, 1))
