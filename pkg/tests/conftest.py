from __future__ import annotations

import random
from importlib import resources

import pytest

from agentgauge.simulator import GroundTruthWorld, apply_action, enumerate_invocations
from agentgauge.worldmodel import (
    ActionSchema,
    Effect,
    ModelSchema,
    NormWeights,
    ObjectInstance,
    Predicate,
    PropertySchema,
    Relationship,
    Slot,
    TriggerRule,
    WorldModel,
    canonical_world,
    ensure_valid,
    load_world,
    with_object_values,
    world_norm,
)


def load_sample(name: str) -> WorldModel:
    raw = resources.files("agentgauge").joinpath(f"worlds/{name}.world").read_bytes()
    return load_world(raw)


@pytest.fixture(scope="session")
def switches_world() -> WorldModel:
    return load_sample("switches")


@pytest.fixture(scope="session")
def grid_world() -> WorldModel:
    return load_sample("grid_transport")


@pytest.fixture(scope="session")
def battery_world() -> WorldModel:
    return load_sample("battery")


@pytest.fixture(scope="session")
def switches_truth(switches_world) -> GroundTruthWorld:
    return GroundTruthWorld(switches_world, seed=7)


@pytest.fixture(scope="session")
def switches_goal(switches_world) -> WorldModel:
    return with_object_values(switches_world, {
        "switch_1": {"on": True}, "switch_2": {"on": True},
        "lamp_1": {"lit": True}, "lamp_2": {"lit": True},
    })


def flag_world(count: int = 1, up: int = 0) -> WorldModel:
    """A tiny world of boolean flags with a raise/lower pair of actions."""
    flags = ModelSchema("flag", (PropertySchema("up", "boolean"),))
    raise_flag = ActionSchema(
        "raise", (Slot("f", "flag"),),
        (Predicate("f", "up", "eq", value=False),),
        (Effect("f", "up", "set", value=True),),
    )
    lower_flag = ActionSchema(
        "lower", (Slot("f", "flag"),),
        (Predicate("f", "up", "eq", value=True),),
        (Effect("f", "up", "set", value=False),),
    )
    objects = tuple(
        ObjectInstance(f"flag_{i}", "flag", {"up": i < up}) for i in range(count)
    )
    return ensure_valid(canonical_world(
        WorldModel((flags,), (raise_flag, lower_flag), objects, ())
    ))


def cyclic_world() -> WorldModel:
    """A self-retriggering action: every ping re-triggers another ping."""
    node = ModelSchema("node", (PropertySchema("bit", "boolean"),))
    ping = ActionSchema(
        "ping", (Slot("n", "node"),),
        effects=(Effect("n", "bit", "toggle"),),
        triggers=(TriggerRule("n", "bit"),),
    )
    return ensure_valid(WorldModel(
        (node,), (ping,), (ObjectInstance("node_1", "node", {"bit": False}),), ()
    ))


# ---------------------------------------------------------------------------
# seeded random worlds (for metric-axiom sweeps)

_KINDS = ("boolean", "integer", "real", "enum")


def _random_property(rng: random.Random, name: str) -> PropertySchema:
    kind = rng.choice(_KINDS)
    if kind == "integer":
        lower = rng.randrange(-5, 5)
        return PropertySchema(name, kind, lower, lower + rng.randrange(1, 10))
    if kind == "real":
        lower = rng.uniform(-5.0, 5.0)
        return PropertySchema(name, kind, lower, lower + rng.uniform(0.5, 10.0))
    if kind == "enum":
        size = rng.randrange(1, 4)
        return PropertySchema(name, kind, choices=tuple(f"c{i}" for i in range(size)))
    return PropertySchema(name, kind)


def _random_value(rng: random.Random, schema: PropertySchema):
    if schema.kind == "boolean":
        return rng.random() < 0.5
    if schema.kind == "integer":
        return rng.randrange(int(schema.lower), int(schema.upper) + 1)
    if schema.kind == "real":
        return rng.uniform(schema.lower, schema.upper)
    return rng.choice(schema.choices)


def random_world(rng: random.Random) -> WorldModel:
    models = []
    for mi in range(rng.randrange(0, 4)):
        props = tuple(
            _random_property(rng, f"p{pi}") for pi in range(rng.randrange(0, 4))
        )
        models.append(ModelSchema(f"m{mi}", props))
    objects = []
    if models:
        for oi in range(rng.randrange(0, 5)):
            model = rng.choice(models)
            values = {p.name: _random_value(rng, p) for p in model.properties}
            objects.append(ObjectInstance(f"o{oi}", model.name, values))
    actions = [ActionSchema(f"a{ai}") for ai in range(rng.randrange(0, 3))]
    names = [m.name for m in models] + [o.id for o in objects]
    relationships = []
    if names:
        for _ in range(rng.randrange(0, 3)):
            rel = Relationship(rng.choice(("is_a", "has", "near")),
                               rng.choice(names), rng.choice(names))
            if rel not in relationships:
                relationships.append(rel)
    return ensure_valid(canonical_world(
        WorldModel(tuple(models), tuple(actions), tuple(objects), tuple(relationships))
    ))


def add_unmatched_object(world: WorldModel, rng: random.Random) -> WorldModel:
    """Return `world` plus one fresh object (and its model if needed)."""
    if world.models:
        model = rng.choice(world.models)
        models = world.models
    else:
        model = ModelSchema("extra_model", (PropertySchema("flag", "boolean"),))
        models = world.models + (model,)
    values = {p.name: _random_value(rng, p) for p in model.properties}
    extra = ObjectInstance("zz_extra", model.name, values)
    return ensure_valid(canonical_world(
        WorldModel(models, world.actions, world.objects + (extra,), world.relationships)
    ))


# ---------------------------------------------------------------------------
# independent planning oracle: plain nested enumeration, no search policy


def best_norm_by_enumeration(world: WorldModel, goal: WorldModel, horizon: int,
                             weights: NormWeights = NormWeights(),
                             max_depth: int = 100) -> float:
    """Best goal-norm reachable by ANY plan within the horizon, by brute force."""
    invocations = enumerate_invocations(world)
    best = world_norm(goal, world, weights)

    def explore(state: WorldModel, depth: int) -> None:
        nonlocal best
        if depth == horizon:
            return
        for invocation in invocations:
            after = apply_action(state, invocation, max_depth).after
            norm = world_norm(goal, after, weights)
            if norm > best:
                best = norm
            explore(after, depth + 1)

    explore(world, 0)
    return best
