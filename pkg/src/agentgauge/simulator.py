"""Ground-truth world simulation: action application with causal trigger cascades.

Transitions are pure (state in, state out) and deterministic: effects apply in
declared order, trigger rules fire on actual value changes in canonical order
(object id, then property name), recursing until fixpoint or the depth bound.
"""

from __future__ import annotations

import hashlib
import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .worldmodel import (
    ActionSchema,
    NUMERIC_KINDS,
    Value,
    WorldModel,
    canonical_world,
    ensure_valid,
    world_to_doc,
    world_from_doc,
)


class DivergentCascade(RuntimeError):
    """Trigger recursion exceeded the depth bound: a cyclic causal chain."""


@dataclass(frozen=True)
class GroundTruthWorld:
    """The simulator-owned real world, with the seed and cascade settings."""

    world: WorldModel
    seed: int
    max_trigger_depth: int = 100

    def __post_init__(self):
        ensure_valid(self.world)
        if self.max_trigger_depth < 1:
            raise ValueError("max_trigger_depth must be >= 1")


@dataclass(frozen=True)
class ActionInvocation:
    action: str
    bindings: dict[str, str] = field(default_factory=dict)

    def sort_key(self) -> tuple:
        return (self.action, tuple(sorted(self.bindings.items())))


@dataclass(frozen=True)
class Transition:
    before: WorldModel
    invocation: ActionInvocation
    after: WorldModel
    fired_triggers: tuple[ActionInvocation, ...] = ()
    preconditions_failed: bool = False
    clipped: tuple[str, ...] = ()  # "oid.prop" entries forced back into domain


@dataclass(frozen=True)
class PlanRun:
    """Outcome of folding a plan: final state plus per-step records."""

    world: WorldModel
    transitions: tuple[Transition, ...]
    step_failures: tuple[int, ...]
    diverged: bool = False


def derive_seed(seed: int, *labels: object) -> int:
    """Stable 63-bit child seed for a labeled purpose."""
    digest = hashlib.sha256(repr((seed, labels)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


# ---------------------------------------------------------------------------
# invocation typing and predicate evaluation

State = dict[str, dict[str, Value]]


def _state_of(world: WorldModel) -> State:
    return {o.id: dict(o.values) for o in world.objects}


def _world_with_state(world: WorldModel, state: State) -> WorldModel:
    from dataclasses import replace

    objects = tuple(replace(o, values=dict(state[o.id])) for o in world.objects)
    return replace(world, objects=objects)


def well_typed(world: WorldModel, inv: ActionInvocation) -> bool:
    """Bindings cover every slot with an existing object of the slot's model."""
    action = world.action_map().get(inv.action)
    if action is None:
        return False
    slots = action.slot_map()
    if set(inv.bindings) != set(slots):
        return False
    objects = world.object_map()
    for slot_name, oid in inv.bindings.items():
        obj = objects.get(oid)
        if obj is None or obj.model != slots[slot_name].model:
            return False
    return True


def _compare(left: Value, op: str, right: Value) -> bool:
    if op == "eq":
        return left == right
    if op == "ne":
        return left != right
    try:
        if op == "lt":
            return left < right
        if op == "le":
            return left <= right
        if op == "gt":
            return left > right
        if op == "ge":
            return left >= right
    except TypeError:
        return False
    raise ValueError(f"unknown comparison op {op!r}")


def _preconditions_hold(state: State, action: ActionSchema, inv: ActionInvocation) -> bool:
    for pre in action.preconditions:
        left = state[inv.bindings[pre.slot]][pre.prop]
        if pre.ref_slot is not None:
            right = state[inv.bindings[pre.ref_slot]][pre.ref_prop]
        else:
            right = pre.value
        if not _compare(left, pre.op, right):
            return False
    return True


def _apply_effects(world: WorldModel, state: State, action: ActionSchema,
                   inv: ActionInvocation, clipped: list[str]) -> list[tuple[str, str, Value]]:
    """Apply the action's effects in declared order; return net value changes
    as (oid, prop, new_value), sorted by (oid, prop)."""
    models = world.model_map()
    objects = world.object_map()
    touched = {inv.bindings[e.slot] for e in action.effects}
    snapshot = {oid: dict(state[oid]) for oid in touched}

    for eff in action.effects:
        oid = inv.bindings[eff.slot]
        schema = models[objects[oid].model].property_map()[eff.prop]
        old = state[oid][eff.prop]
        if eff.op == "set":
            new = eff.value
        elif eff.op == "add":
            new = old + eff.value
        elif eff.op == "toggle":
            new = not old
        else:  # copy
            new = state[inv.bindings[eff.source_slot]][eff.source_prop]

        if schema.kind in NUMERIC_KINDS:
            if schema.kind == "real":
                new = float(new)
            bounded = min(max(new, schema.lower), schema.upper)
            if bounded != new:
                clipped.append(f"{oid}.{eff.prop}")
                new = bounded
            if schema.kind == "integer":
                new = int(new)
        elif schema.kind == "boolean":
            if not isinstance(new, bool):
                clipped.append(f"{oid}.{eff.prop}")
                continue  # unrepresentable: leave unchanged
        elif schema.kind == "enum":
            if new not in schema.choices:
                clipped.append(f"{oid}.{eff.prop}")
                continue
        state[oid][eff.prop] = new

    changes = [
        (oid, prop, state[oid][prop])
        for oid in sorted(touched)
        for prop in sorted(state[oid])
        if state[oid][prop] != snapshot[oid][prop]
    ]
    return changes


def _candidate_bindings(world: WorldModel, action: ActionSchema,
                        pinned: dict[str, str]) -> Iterable[dict[str, str]]:
    by_model: dict[str, list[str]] = {}
    for o in world.objects:
        by_model.setdefault(o.model, []).append(o.id)
    for ids in by_model.values():
        ids.sort()
    pools = []
    for slot in action.parameters:
        if slot.name in pinned:
            pools.append([pinned[slot.name]])
        else:
            pools.append(by_model.get(slot.model, []))
    names = [s.name for s in action.parameters]
    for combo in itertools.product(*pools):
        yield dict(zip(names, combo))


def _cascade(world: WorldModel, state: State, changes: list[tuple[str, str, Value]],
             depth: int, max_depth: int, fired: list[ActionInvocation],
             clipped: list[str]) -> None:
    objects = world.object_map()
    for oid, prop, new in changes:
        obj_model = objects[oid].model
        for action in world.actions:  # world is canonical: sorted by name
            slots = action.slot_map()
            for rule in action.triggers:
                if rule.prop != prop or slots[rule.slot].model != obj_model:
                    continue
                if rule.op is not None and not _compare(new, rule.op, rule.value):
                    continue
                for bindings in _candidate_bindings(world, action, {rule.slot: oid}):
                    if not _preconditions_hold(state, action, ActionInvocation(action.name, bindings)):
                        continue
                    if depth > max_depth:
                        raise DivergentCascade(
                            f"trigger cascade exceeded depth {max_depth} at {action.name}"
                        )
                    inv = ActionInvocation(action.name, bindings)
                    sub_changes = _apply_effects(world, state, action, inv, clipped)
                    fired.append(inv)
                    if sub_changes:
                        _cascade(world, state, sub_changes, depth + 1, max_depth, fired, clipped)


def apply_action(world: WorldModel, inv: ActionInvocation, max_depth: int = 100) -> Transition:
    """Apply one invocation with full trigger propagation.

    Ill-typed invocations and failing preconditions yield a recorded no-op
    (the evaluation must continue for black-box agents); out-of-domain effect
    values clip to the nearest bound and are flagged.
    """
    world = canonical_world(world)
    if not well_typed(world, inv):
        return Transition(world, inv, world, (), preconditions_failed=True)
    action = world.action_map()[inv.action]
    state = _state_of(world)
    if not _preconditions_hold(state, action, inv):
        return Transition(world, inv, world, (), preconditions_failed=True)

    clipped: list[str] = []
    fired: list[ActionInvocation] = []
    changes = _apply_effects(world, state, action, inv, clipped)
    if changes:
        _cascade(world, state, changes, 1, max_depth, fired, clipped)
    after = canonical_world(_world_with_state(world, state))
    return Transition(world, inv, after, tuple(fired), False, tuple(clipped))


def run_plan(world: WorldModel, steps: Sequence[ActionInvocation],
             max_depth: int = 100, on_divergence: str = "raise") -> PlanRun:
    """Fold invocations left to right, recording failures per step.

    `on_divergence="stop"` truncates at the last valid state instead of
    raising, for metric evaluation that must stay total.
    """
    transitions: list[Transition] = []
    failures: list[int] = []
    current = canonical_world(world)
    for i, inv in enumerate(steps):
        try:
            t = apply_action(current, inv, max_depth)
        except DivergentCascade:
            if on_divergence == "raise":
                raise
            return PlanRun(current, tuple(transitions), tuple(failures), diverged=True)
        transitions.append(t)
        if t.preconditions_failed:
            failures.append(i)
        current = t.after
    return PlanRun(current, tuple(transitions), tuple(failures))


def apply_plan(world: WorldModel, plan, max_depth: int = 100) -> WorldModel:
    """Final state after a plan; accepts a Plan or a bare invocation sequence."""
    steps = getattr(plan, "steps", plan)
    return run_plan(world, steps, max_depth).world


def enumerate_invocations(world: WorldModel) -> list[ActionInvocation]:
    """All well-typed bindings of all actions, in lexicographic order.

    Preconditions are not checked; this is the raw output space used by
    brute-force oracles and skill ranking.
    """
    world = canonical_world(ensure_valid(world))
    out: list[ActionInvocation] = []
    for action in world.actions:
        out.extend(
            ActionInvocation(action.name, bindings)
            for bindings in _candidate_bindings(world, action, {})
        )
    return out


def random_episode(truth: GroundTruthWorld, rng: random.Random, length: int) -> tuple[Transition, ...]:
    """A seeded random walk from the ground-truth initial state."""
    invocations = enumerate_invocations(truth.world)
    world = truth.world
    episode: list[Transition] = []
    for _ in range(length):
        if not invocations:
            break
        inv = invocations[rng.randrange(len(invocations))]
        t = apply_action(world, inv, truth.max_trigger_depth)
        episode.append(t)
        world = t.after
    return tuple(episode)


# ---------------------------------------------------------------------------
# wire codecs


def invocation_to_doc(inv: ActionInvocation) -> dict:
    return {"action": inv.action, "bindings": {k: inv.bindings[k] for k in sorted(inv.bindings)}}


def invocation_from_doc(doc: dict) -> ActionInvocation:
    return ActionInvocation(action=str(doc["action"]),
                            bindings={str(k): str(v) for k, v in doc.get("bindings", {}).items()})


def transition_to_doc(t: Transition) -> dict:
    return {
        "before": world_to_doc(t.before),
        "invocation": invocation_to_doc(t.invocation),
        "after": world_to_doc(t.after),
        "fired_triggers": [invocation_to_doc(f) for f in t.fired_triggers],
        "preconditions_failed": t.preconditions_failed,
        "clipped": list(t.clipped),
    }


def transition_from_doc(doc: dict) -> Transition:
    return Transition(
        before=world_from_doc(doc["before"]),
        invocation=invocation_from_doc(doc["invocation"]),
        after=world_from_doc(doc["after"]),
        fired_triggers=tuple(invocation_from_doc(f) for f in doc.get("fired_triggers", [])),
        preconditions_failed=bool(doc.get("preconditions_failed", False)),
        clipped=tuple(doc.get("clipped", [])),
    )
