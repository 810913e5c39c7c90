"""agentgauge: a black-box agent evaluation harness.

Measures agents on a symbolic ground-truth world via six components: quality
of knowledge, quality and cost of planning, and the per-episode learning
derivatives of all three. Agents are evaluated purely through their inputs and
outputs, either in-process or over a newline-delimited JSON protocol.
"""

from .worldmodel import (
    NormWeights,
    WorldDelta,
    WorldModel,
    diff_worlds,
    load_world,
    save_world,
    world_norm,
)
from .simulator import (
    ActionInvocation,
    DivergentCascade,
    GroundTruthWorld,
    Transition,
    apply_action,
    apply_plan,
    enumerate_invocations,
)
from .agents import CapacityBudget, Plan
from .metrics import (
    DataBatch,
    MetricParams,
    ScoreComponents,
    SkillTask,
    intelligence_score,
    knowledge_score,
    measure_learning,
    skill_score,
)

__version__ = "0.1.0"

__all__ = [
    "ActionInvocation",
    "CapacityBudget",
    "DataBatch",
    "DivergentCascade",
    "GroundTruthWorld",
    "MetricParams",
    "NormWeights",
    "Plan",
    "ScoreComponents",
    "SkillTask",
    "Transition",
    "WorldDelta",
    "WorldModel",
    "apply_action",
    "apply_plan",
    "diff_worlds",
    "enumerate_invocations",
    "intelligence_score",
    "knowledge_score",
    "load_world",
    "measure_learning",
    "save_world",
    "skill_score",
    "world_norm",
]
