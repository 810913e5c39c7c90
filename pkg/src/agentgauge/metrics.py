"""Scoring engine: the six intelligence-score components and their aggregate.

The aggregate is
    I = alpha * knowledge
      + (beta * plan_quality) / (gamma * plan_cost)
      + delta * d_knowledge + epsilon * d_planning - zeta * d_cost
with knowledge and plan_quality measured by the world-norm, plan_cost in
deterministic work units, and the learning derivatives taken as forward
finite differences per episode of data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .simulator import (
    ActionInvocation,
    DivergentCascade,
    GroundTruthWorld,
    Transition,
    apply_action,
    enumerate_invocations,
    run_plan,
)
from .worldmodel import NormWeights, WorldModel, world_digest, world_norm


class TaskBoundExceeded(ValueError):
    """The task's state space exceeds the enumerability bound."""


@dataclass(frozen=True)
class MetricParams:
    """Weights of the intelligence score plus the world-norm weights.

    gamma is a denominator and must be positive; the remaining weights select
    which components count (zero disables a component outright).
    """

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0
    epsilon: float = 1.0
    zeta: float = 1.0
    norm_weights: NormWeights = field(default_factory=NormWeights)

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta", "epsilon", "zeta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.gamma == 0:
            raise ValueError("gamma must be positive (it scales the cost denominator)")


@dataclass(frozen=True)
class ScoreComponents:
    """The six measured terms, before weighting."""

    knowledge: float
    plan_quality: float
    plan_cost: int
    d_knowledge: float = 0.0
    d_planning: float = 0.0
    d_cost: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.knowledge <= 1.0:
            raise ValueError("knowledge must lie in (0, 1]")
        if not 0.0 < self.plan_quality <= 1.0:
            raise ValueError("plan_quality must lie in (0, 1]")
        if self.plan_cost < 1:
            raise ValueError("plan_cost must be >= 1")
        for name in ("d_knowledge", "d_planning", "d_cost"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class DataBatch:
    """Ordered observation episodes; |D| is the episode count."""

    episodes: tuple[tuple[Transition, ...], ...]

    def __post_init__(self):
        if len(self.episodes) < 1:
            raise ValueError("a data batch holds at least one episode")

    @property
    def size(self) -> int:
        return len(self.episodes)


@dataclass(frozen=True)
class SkillTask:
    """An enumerable single-step task: inputs, a goal, and the true world.

    For each input state the output set is every well-typed invocation,
    ranked by the goal-norm of its simulated outcome (descending, ties
    lexicographic). The ranking is exhaustive, so it is the task's oracle.
    """

    truth: GroundTruthWorld
    inputs: tuple[WorldModel, ...]
    goal: WorldModel
    weights: NormWeights = field(default_factory=NormWeights)
    max_states: int = 10 ** 6


@dataclass(frozen=True)
class LearningScenario:
    """Held-out evaluation fixture for learning measurement: a fixed start
    state, goal, and scoring parameters, never drawn from the data batch."""

    truth: GroundTruthWorld
    goal: WorldModel
    params: MetricParams = field(default_factory=MetricParams)
    eval_state: WorldModel | None = None
    mode: str = "internal"

    def start_state(self) -> WorldModel:
        return self.eval_state if self.eval_state is not None else self.truth.world


@dataclass(frozen=True)
class PlanningScore:
    quality: float
    cost: int
    diverged: bool = False


def knowledge_score(elicited: WorldModel, truth: GroundTruthWorld,
                    w: NormWeights = NormWeights()) -> float:
    """World-norm of the elicited internal model against the real world."""
    return world_norm(elicited, truth.world, w)


def planning_score(plan, internal: WorldModel, goal: WorldModel, params: MetricParams,
                   mode: str = "internal", truth: GroundTruthWorld | None = None) -> PlanningScore:
    """Goal-norm of a plan's simulated end state, plus its selection cost.

    `internal` mode simulates on the agent's own model; `grounded` mode
    simulates on the real world. A divergent cascade mid-plan scores the last
    valid state and is flagged rather than raised.
    """
    if mode == "grounded":
        if truth is None:
            raise ValueError("grounded mode needs the ground-truth world")
        world, depth = truth.world, truth.max_trigger_depth
    elif mode == "internal":
        world = internal
        depth = truth.max_trigger_depth if truth is not None else 100
    else:
        raise ValueError(f"unknown planning mode {mode!r}")
    run = run_plan(world, plan.steps, depth, on_divergence="stop")
    quality = world_norm(goal, run.world, params.norm_weights)
    return PlanningScore(quality, max(int(plan.cost_units), 1), diverged=run.diverged)


def rank_outputs(truth: GroundTruthWorld, state: WorldModel, goal: WorldModel,
                 weights: NormWeights = NormWeights()) -> list[ActionInvocation]:
    """Exhaustively rank every invocation of `state` by outcome goal-norm."""
    scored = []
    for inv in enumerate_invocations(state):
        try:
            outcome = apply_action(state, inv, truth.max_trigger_depth).after
            norm = world_norm(goal, outcome, weights)
        except DivergentCascade:
            norm = 0.0  # divergent outcomes rank last
        scored.append((norm, inv))
    scored.sort(key=lambda pair: (-pair[0], pair[1].sort_key()))
    return [inv for _, inv in scored]


def check_task_bound(task: SkillTask) -> dict[str, tuple[WorldModel, list[ActionInvocation]]]:
    """Verify enumerability; return distinct states and their output sets."""
    distinct: dict[str, WorldModel] = {}
    for state in task.inputs:
        distinct.setdefault(world_digest(state), state)
    if len(task.inputs) > task.max_states or len(distinct) > task.max_states:
        raise TaskBoundExceeded(f"state-space bound exceeded ({task.max_states})")
    outputs = {d: (s, enumerate_invocations(s)) for d, s in distinct.items()}
    if sum(len(invs) for _, invs in outputs.values()) > task.max_states:
        raise TaskBoundExceeded(f"state-space bound exceeded ({task.max_states})")
    return outputs


def skill_score(agent, task: SkillTask, top_k: int) -> float:
    """Fraction of inputs where the agent's chosen output ranks in the top k.

    The agent's choice is the first step of its plan; an empty plan never
    ranks. Rankings are cached per distinct state digest.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    check_task_bound(task)
    rankings: dict[str, list[ActionInvocation]] = {}
    hits = 0
    for state in task.inputs:
        digest = world_digest(state)
        ranked = rankings.get(digest)
        if ranked is None:
            ranked = rank_outputs(task.truth, state, task.goal, task.weights)
            rankings[digest] = ranked
        plan = agent.plan_for(state, task.goal)
        choice = plan.steps[0] if plan.steps else None
        if choice is not None and choice in ranked[:top_k]:
            hits += 1
    return hits / len(task.inputs)


def _value_changes(before: WorldModel, after: WorldModel) -> dict[tuple[str, str], object]:
    """Property-level changes between two states sharing object ids."""
    before_objects = before.object_map()
    changes: dict[tuple[str, str], object] = {}
    for obj in after.objects:
        base = before_objects.get(obj.id)
        if base is None:
            continue
        for prop, value in obj.values.items():
            if prop in base.values and base.values[prop] != value:
                changes[(obj.id, prop)] = value
    return changes


def causal_reasoning_score(agent, probes: Sequence[tuple[WorldModel, ActionInvocation]],
                           truth: GroundTruthWorld) -> int:
    """Correct predicted property-changes minus spurious ones.

    A predicted change counts when the simulator's transition exhibits the
    same (object, property, new value); predictions that do not occur count
    against; real changes the agent never predicted count zero.
    """
    score = 0
    for state, invocation in probes:
        actual = apply_action(state, invocation, truth.max_trigger_depth)
        true_changes = _value_changes(state, actual.after)
        predicted_world = agent.predict(state, invocation)
        predicted = _value_changes(state, predicted_world)
        correct = sum(
            1 for key, value in predicted.items()
            if key in true_changes and true_changes[key] == value
        )
        score += correct - (len(predicted) - correct)
    return score


def _evaluate_snapshot(agent, scenario: LearningScenario) -> tuple[float, float, int]:
    elicited = agent.describe()
    knowledge = knowledge_score(elicited, scenario.truth, scenario.params.norm_weights)
    plan = agent.plan_for(scenario.start_state(), scenario.goal)
    internal = elicited if scenario.mode == "internal" else scenario.truth.world
    planning = planning_score(plan, internal, scenario.goal, scenario.params,
                              mode=scenario.mode, truth=scenario.truth)
    return knowledge, planning.quality, planning.cost


def measure_learning(agent, batch: DataBatch,
                     scenario: LearningScenario) -> tuple[float, float, float]:
    """Forward finite differences per episode: evaluate, expose the batch
    through observe(), re-evaluate. Returns (d_knowledge, d_planning, d_cost)."""
    k0, q0, t0 = _evaluate_snapshot(agent, scenario)
    for episode in batch.episodes:
        agent.observe(episode)
    k1, q1, t1 = _evaluate_snapshot(agent, scenario)
    n = batch.size
    return ((k1 - k0) / n, (q1 - q0) / n, (t1 - t0) / n)


def intelligence_score(c: ScoreComponents, p: MetricParams) -> float:
    """The weighted aggregate of all six components."""
    return (
        p.alpha * c.knowledge
        + (p.beta * c.plan_quality) / (p.gamma * c.plan_cost)
        + p.delta * c.d_knowledge
        + p.epsilon * c.d_planning
        - p.zeta * c.d_cost
    )
