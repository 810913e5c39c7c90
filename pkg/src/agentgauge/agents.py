"""Reference black-box agents: chance baseline, lookup table, brute-force and
greedy planners, and a bounded-capacity rule learner.

Agents never see the ground-truth world object; they receive observations
(transitions), goals, and probe questions, and everything they report flows
through the same interface an external process would use.
"""

from __future__ import annotations

import abc
import itertools
import random
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

from .metrics import SkillTask, check_task_bound, rank_outputs
from .simulator import (
    ActionInvocation,
    DivergentCascade,
    Transition,
    apply_action,
    enumerate_invocations,
)
from .worldmodel import (
    ActionSchema,
    Effect,
    ModelSchema,
    NormWeights,
    ObjectInstance,
    PropertySchema,
    Slot,
    Value,
    WorldModel,
    canonical_world,
    empty_world,
    ensure_valid,
    value_fits,
    value_kind,
    with_object_values,
    world_digest,
    world_norm,
)


@dataclass(frozen=True)
class Plan:
    """An ordered action sequence plus its selection cost in work units
    (one unit per candidate state expanded; minimum one)."""

    steps: tuple[ActionInvocation, ...] = ()
    cost_units: int = 1

    def __post_init__(self):
        if self.cost_units < 1:
            raise ValueError("cost_units must be >= 1")


@dataclass(frozen=True)
class CapacityBudget:
    """Bound on how many effect-rules a learner may retain."""

    max_rules: int

    def __post_init__(self):
        if self.max_rules < 1:
            raise ValueError("max_rules must be >= 1")


class Agent(abc.ABC):
    """Black-box behavior contract: observe, plan, predict, describe."""

    def observe(self, episode: Sequence[Transition]) -> None:
        """Ingest one observation episode. Default: learn nothing."""

    @abc.abstractmethod
    def plan_for(self, state: WorldModel, goal: WorldModel) -> Plan:
        """Select an action sequence moving `state` toward `goal`."""

    def predict(self, state: WorldModel, invocation: ActionInvocation) -> WorldModel:
        """Predict the next state. Default: no change expected."""
        return canonical_world(state)

    def describe(self) -> WorldModel:
        """Report the agent's internal world-model. Default: knows nothing."""
        return empty_world()


class RandomAgent(Agent):
    """Chance baseline: uniform draws over the invocation space, no memory."""

    def __init__(self, seed: int, horizon: int = 1):
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        self._rng = random.Random(seed)
        self.horizon = horizon

    def plan_for(self, state: WorldModel, goal: WorldModel) -> Plan:
        invocations = enumerate_invocations(state)
        if not invocations or self.horizon == 0:
            return Plan((), 1)
        steps = tuple(
            invocations[self._rng.randrange(len(invocations))] for _ in range(self.horizon)
        )
        return Plan(steps, 1)


class LookupAgent(Agent):
    """Exhaustive lookup table over an enumerable task: maximal skill, and by
    construction no learning (observe is a no-op)."""

    def __init__(self, task: SkillTask):
        self.fallback_count = 0
        self._table: dict[str, ActionInvocation] = {}
        for digest, (state, _) in sorted(check_task_bound(task).items()):
            ranked = rank_outputs(task.truth, state, task.goal, task.weights)
            if ranked:
                self._table[digest] = ranked[0]

    def plan_for(self, state: WorldModel, goal: WorldModel) -> Plan:
        choice = self._table.get(world_digest(state))
        if choice is None:
            # input outside the table: fall back to the first enumerated invocation
            invocations = enumerate_invocations(state)
            if not invocations:
                return Plan((), 1)
            self.fallback_count += 1
            choice = invocations[0]
        return Plan((choice,), 1)


class _SearchPlanner(Agent):
    """Shared machinery for model-free planners that search the given state."""

    def __init__(self, horizon: int = 3, weights: NormWeights = NormWeights(),
                 max_depth: int = 100):
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        self.horizon = horizon
        self.weights = weights
        self.max_depth = max_depth

    def predict(self, state: WorldModel, invocation: ActionInvocation) -> WorldModel:
        try:
            return apply_action(state, invocation, self.max_depth).after
        except DivergentCascade:
            return canonical_world(state)

    def _successor(self, world: WorldModel, invocation: ActionInvocation) -> WorldModel | None:
        try:
            return apply_action(world, invocation, self.max_depth).after
        except DivergentCascade:
            return None


class BfsPlannerAgent(_SearchPlanner):
    """Breadth-first search to the horizon; optimal within it.

    Returns the plan whose predicted end state maximizes the goal-norm, ties
    broken by search order (shortest plan first, then lexicographic). Cost is
    one unit per candidate state evaluated, including the start state.
    """

    def plan_for(self, state: WorldModel, goal: WorldModel) -> Plan:
        state = canonical_world(ensure_valid(state))
        best_norm = world_norm(goal, state, self.weights)
        best_steps: tuple[ActionInvocation, ...] = ()
        cost = 1
        if best_norm == 1.0:
            return Plan((), cost)
        invocations = enumerate_invocations(state)
        frontier: list[tuple[WorldModel, tuple[ActionInvocation, ...]]] = [(state, ())]
        for _ in range(self.horizon):
            next_frontier: list[tuple[WorldModel, tuple[ActionInvocation, ...]]] = []
            for world, steps in frontier:
                for invocation in invocations:
                    cost += 1
                    successor = self._successor(world, invocation)
                    if successor is None:
                        continue
                    candidate = steps + (invocation,)
                    norm = world_norm(goal, successor, self.weights)
                    if norm > best_norm:
                        best_norm, best_steps = norm, candidate
                    next_frontier.append((successor, candidate))
            frontier = next_frontier
            if best_norm == 1.0:
                break
        return Plan(best_steps, cost)


class GreedyPlannerAgent(_SearchPlanner):
    """Hill climber: repeatedly takes the single best one-step improvement,
    stopping at a local maximum or the horizon."""

    def plan_for(self, state: WorldModel, goal: WorldModel) -> Plan:
        current = canonical_world(ensure_valid(state))
        current_norm = world_norm(goal, current, self.weights)
        steps: list[ActionInvocation] = []
        cost = 1
        if current_norm == 1.0:
            return Plan((), cost)
        invocations = enumerate_invocations(current)
        for _ in range(self.horizon):
            best: tuple[float, ActionInvocation, WorldModel] | None = None
            for invocation in invocations:
                cost += 1
                successor = self._successor(current, invocation)
                if successor is None:
                    continue
                norm = world_norm(goal, successor, self.weights)
                if best is None or norm > best[0]:
                    best = (norm, invocation, successor)
            if best is None or best[0] <= current_norm:
                break  # local maximum
            current_norm, chosen, current = best
            steps.append(chosen)
            if current_norm == 1.0:
                break
        return Plan(tuple(steps), cost)


@dataclass
class _EffectRule:
    """Observed input-output mapping for one (action, slot, property)."""

    mapping: dict[Value, Value] = field(default_factory=dict)
    last_new: Value | None = None


class _PropertyMeta:
    """Induced property schema: kind plus the observed value range."""

    def __init__(self):
        self.kind: str | None = None
        self.lower: float | None = None
        self.upper: float | None = None
        self.choices: set[str] = set()

    def record(self, value: Value) -> None:
        kind = value_kind(value)
        if self.kind is None:
            self.kind = kind
        elif {self.kind, kind} == {"integer", "real"}:
            self.kind = "real"
        if kind in ("integer", "real") and self.kind in ("integer", "real"):
            v = float(value)
            self.lower = v if self.lower is None else min(self.lower, v)
            self.upper = v if self.upper is None else max(self.upper, v)
        elif kind == "enum":
            self.choices.add(value)

    def schema(self, name: str) -> PropertySchema:
        if self.kind == "integer":
            return PropertySchema(name, "integer", int(self.lower), int(self.upper))
        if self.kind == "real":
            return PropertySchema(name, "real", self.lower, self.upper)
        if self.kind == "enum":
            return PropertySchema(name, "enum", choices=tuple(sorted(self.choices)))
        return PropertySchema(name, "boolean")


class LearningAgent(Agent):
    """Bounded-capacity learner: records objects and properties from observed
    transitions and induces effect-rules by diffing before/after states.

    Rules are keyed by (action, slot, property); when the store exceeds the
    budget, the least-recently-confirmed rule is evicted. Changes are
    attributed causally: first to the primary invocation, then to each fired
    trigger, in order. Planning is greedy search over the induced model.
    """

    def __init__(self, budget: CapacityBudget, seed: int, horizon: int = 3,
                 weights: NormWeights = NormWeights()):
        self.budget = budget
        self.seed = seed
        self.horizon = horizon
        self.weights = weights
        self._objects: dict[str, tuple[str, dict[str, Value]]] = {}
        self._prop_meta: dict[str, dict[str, _PropertyMeta]] = {}
        self._action_params: dict[str, tuple[Slot, ...]] = {}
        self._rules: OrderedDict[tuple[str, str, str], _EffectRule] = OrderedDict()

    # -- learning ----------------------------------------------------------

    def _record_state(self, world: WorldModel) -> None:
        for obj in world.objects:
            # first sighting wins: existence is what gets recorded, and keeping
            # it fixed makes the elicited norm monotone in observation count
            self._objects.setdefault(obj.id, (obj.model, dict(obj.values)))
            meta = self._prop_meta.setdefault(obj.model, {})
            for prop, value in obj.values.items():
                meta.setdefault(prop, _PropertyMeta()).record(value)

    def _record_params(self, world: WorldModel, invocation: ActionInvocation) -> None:
        objects = world.object_map()
        slots = []
        for name in sorted(invocation.bindings):
            obj = objects.get(invocation.bindings[name])
            if obj is None:
                return
            slots.append(Slot(name, obj.model))
        self._action_params.setdefault(invocation.action, tuple(slots))

    def _confirm_rule(self, key: tuple[str, str, str], old: Value, new: Value) -> None:
        rule = self._rules.get(key)
        if rule is None:
            rule = _EffectRule()
            self._rules[key] = rule
        else:
            self._rules.move_to_end(key)
        rule.mapping[old] = new
        rule.last_new = new
        while len(self._rules) > self.budget.max_rules:
            self._rules.popitem(last=False)  # evict least-recently-confirmed

    def observe(self, episode: Sequence[Transition]) -> None:
        for t in episode:
            self._record_state(t.before)
            self._record_state(t.after)
            invocations = [t.invocation, *t.fired_triggers]
            for invocation in invocations:
                self._record_params(t.before, invocation)
            before = t.before.object_map()
            changes = []
            for obj in t.after.objects:
                base = before.get(obj.id)
                if base is None:
                    continue
                for prop in sorted(obj.values):
                    if prop in base.values and base.values[prop] != obj.values[prop]:
                        changes.append((obj.id, prop, base.values[prop], obj.values[prop]))
            changes.sort()
            # causal attribution: primary invocation first, then fired triggers
            unclaimed = list(changes)
            for invocation in invocations:
                bound: dict[str, str] = {}
                for slot in sorted(invocation.bindings):
                    bound.setdefault(invocation.bindings[slot], slot)
                remaining = []
                for oid, prop, old, new in unclaimed:
                    slot = bound.get(oid)
                    if slot is None:
                        remaining.append((oid, prop, old, new))
                        continue
                    self._confirm_rule((invocation.action, slot, prop), old, new)
                unclaimed = remaining

    # -- reporting ---------------------------------------------------------

    def _induced_effect(self, key: tuple[str, str, str], rule: _EffectRule) -> Effect:
        _, slot, prop = key
        news = set(rule.mapping.values())
        if rule.mapping == {False: True, True: False}:
            return Effect(slot, prop, "toggle")
        if len(news) == 1:
            return Effect(slot, prop, "set", value=next(iter(news)))
        numeric = all(
            value_kind(old) in ("integer", "real") and value_kind(new) in ("integer", "real")
            for old, new in rule.mapping.items()
        )
        if numeric:
            deltas = {new - old for old, new in rule.mapping.items()}
            if len(deltas) == 1:
                return Effect(slot, prop, "add", value=deltas.pop())
        return Effect(slot, prop, "set", value=rule.last_new)

    def describe(self) -> WorldModel:
        models = tuple(
            ModelSchema(
                name,
                tuple(meta[prop].schema(prop) for prop in sorted(meta)),
            )
            for name, meta in sorted(self._prop_meta.items())
        )
        objects = tuple(
            ObjectInstance(oid, model, dict(values))
            for oid, (model, values) in sorted(self._objects.items())
        )
        actions = []
        for name, params in sorted(self._action_params.items()):
            effects = tuple(
                self._induced_effect(key, rule)
                for key, rule in sorted(self._rules.items())
                if key[0] == name
            )
            actions.append(ActionSchema(name, params, (), effects, ()))
        return canonical_world(WorldModel(models, tuple(actions), objects, ()))

    # -- reasoning over the induced model -----------------------------------

    def predict(self, state: WorldModel, invocation: ActionInvocation) -> WorldModel:
        state = canonical_world(state)
        models = state.model_map()
        objects = state.object_map()
        updates: dict[str, dict[str, Value]] = {}
        for (action, slot, prop), rule in sorted(self._rules.items()):
            if action != invocation.action:
                continue
            oid = invocation.bindings.get(slot)
            obj = objects.get(oid) if oid else None
            if obj is None or prop not in obj.values:
                continue
            new = rule.mapping.get(obj.values[prop])
            if new is None:
                continue
            schema_model = models.get(obj.model)
            schema = schema_model.property_map().get(prop) if schema_model else None
            if schema is not None and not value_fits(new, schema):
                continue  # never predict outside the visible domain
            updates.setdefault(oid, {})[prop] = new
        if not updates:
            return state
        return canonical_world(with_object_values(state, updates))

    def _known_invocations(self, state: WorldModel) -> list[ActionInvocation]:
        by_model: dict[str, list[str]] = {}
        for obj in state.objects:
            by_model.setdefault(obj.model, []).append(obj.id)
        for ids in by_model.values():
            ids.sort()
        out: list[ActionInvocation] = []
        for action in sorted(self._action_params):
            pools = [by_model.get(slot.model, []) for slot in self._action_params[action]]
            names = [slot.name for slot in self._action_params[action]]
            for combo in itertools.product(*pools):
                out.append(ActionInvocation(action, dict(zip(names, combo))))
        return out

    def plan_for(self, state: WorldModel, goal: WorldModel) -> Plan:
        current = canonical_world(state)
        current_norm = world_norm(goal, current, self.weights)
        steps: list[ActionInvocation] = []
        cost = 1
        if current_norm == 1.0:
            return Plan((), cost)
        invocations = self._known_invocations(current)
        for _ in range(self.horizon):
            best: tuple[float, ActionInvocation, WorldModel] | None = None
            for invocation in invocations:
                cost += 1
                successor = self.predict(current, invocation)
                norm = world_norm(goal, successor, self.weights)
                if best is None or norm > best[0]:
                    best = (norm, invocation, successor)
            if best is None or best[0] <= current_norm:
                break
            current_norm, chosen, current = best
            steps.append(chosen)
            if current_norm == 1.0:
                break
        return Plan(tuple(steps), cost)


# ---------------------------------------------------------------------------
# constructor aliases matching the reference-agent catalog


def random_agent(seed: int, horizon: int = 1) -> RandomAgent:
    return RandomAgent(seed, horizon)


def lookup_agent(task: SkillTask) -> LookupAgent:
    return LookupAgent(task)


def bfs_planner_agent(horizon: int, weights: NormWeights = NormWeights(),
                      max_depth: int = 100) -> BfsPlannerAgent:
    return BfsPlannerAgent(horizon, weights, max_depth)


def greedy_planner_agent(horizon: int, weights: NormWeights = NormWeights(),
                         max_depth: int = 100) -> GreedyPlannerAgent:
    return GreedyPlannerAgent(horizon, weights, max_depth)


def learning_agent(budget: CapacityBudget, seed: int, horizon: int = 3,
                   weights: NormWeights = NormWeights()) -> LearningAgent:
    return LearningAgent(budget, seed, horizon, weights)
