"""Gap-based best-action identification for real-valued combinatorial bandits."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ActionClass,
    ArmHistory,
    BanditInstance,
    DegenerateInstance,
    GapBound,
    PreconditionError,
    confidence_radius,
    estimated_gap,
    gap_bound,
    update_history,
)
from .algorithm import (  # noqa: E402
    AmbiguousPair,
    RunRecord,
    StrategyKind,
    Termination,
    run,
    select_ambiguous_action,
    select_arm_gap_weighted,
    select_arm_naive,
)
from .environments import NoiseSpec, audit_event_E, best_action, sample_reward  # noqa: E402

__all__ = [
    "ActionClass",
    "AmbiguousPair",
    "ArmHistory",
    "BanditInstance",
    "DegenerateInstance",
    "GapBound",
    "NoiseSpec",
    "PreconditionError",
    "RunRecord",
    "StrategyKind",
    "Termination",
    "audit_event_E",
    "best_action",
    "confidence_radius",
    "estimated_gap",
    "gap_bound",
    "run",
    "sample_reward",
    "select_ambiguous_action",
    "select_arm_gap_weighted",
    "select_arm_naive",
    "update_history",
]
