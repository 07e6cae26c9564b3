"""Two-layer production planning with fairness-aware worker allocation."""

from .caltime import ShiftGrid, SolverCalendar, TimeDomainError
from .generator import GeneratorConfig, generate
from .intervals import SlotRow, TimeInterval, decompose, slot_count
from .lineplan import (
    BatchPlacement,
    NoSolutionError,
    ObjectiveWeights,
    OrderLineSchedule,
    SolveBudget,
    objective_components,
    solve,
    verify,
)
from .mdp import (
    REWARD_PARAMETRIZATIONS,
    IllegalActionError,
    RewardConfig,
    StepOutcome,
    WorkerAllocationEnv,
    fairness_score,
    flatten_action,
    unflatten_action,
)
from .model import (
    GeometryBatch,
    HumanFactorTable,
    Instance,
    LineOption,
    ValidationError,
    Worker,
    duration,
    load_instance,
)
from .report import KpiSummary, Timebox, export_timeboxes, kpis, radar_data
from .strategies import (
    Policy,
    SolveResult,
    TrainingError,
    greedy_solve,
    mcts_solve,
    random_solve,
    rl_solve,
    rl_train,
)

__version__ = "0.1.0"
