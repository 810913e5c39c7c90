from __future__ import annotations

import json
import math
import random
from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentgauge.worldmodel import (
    ActionSchema,
    ModelSchema,
    NormWeights,
    ObjectInstance,
    PropertySchema,
    Relationship,
    WorldModel,
    WorldParseError,
    WorldValidationError,
    canonical_world,
    diff_worlds,
    empty_world,
    load_world,
    save_world,
    validate_world,
    with_object_values,
    world_norm,
)

from .conftest import add_unmatched_object, random_world


def _bool_world(value: bool) -> WorldModel:
    model = ModelSchema("box", (PropertySchema("open", "boolean"),))
    obj = ObjectInstance("box_1", "box", {"open": value})
    return WorldModel((model,), (), (obj,), ())


def test_diff_identical_worlds_is_zero(switches_world):
    delta = diff_worlds(switches_world, switches_world)
    assert (delta.delta_m, delta.delta_a, delta.delta_o, delta.delta_r) == (0, 0, 0, 0)
    assert delta.is_zero()


def test_diff_one_extra_object(switches_world):
    rng = random.Random(0)
    bigger = add_unmatched_object(switches_world, rng)
    delta = diff_worlds(switches_world, bigger)
    assert delta.delta_o == 1.0
    assert delta.delta_m == 0 and delta.delta_a == 0 and delta.delta_r == 0


def test_diff_flipped_boolean_single_property_object():
    # hand trace: one matched object, its only property mismatched -> 1/1
    delta = diff_worlds(_bool_world(False), _bool_world(True))
    assert delta.delta_o == 1.0
    assert delta.delta_m == 0


def test_diff_numeric_mismatch_normalized_by_domain_width():
    model = ModelSchema("dial", (PropertySchema("level", "integer", 0, 10),))
    x = WorldModel((model,), (), (ObjectInstance("d", "dial", {"level": 2}),), ())
    y = WorldModel((model,), (), (ObjectInstance("d", "dial", {"level": 7}),), ())
    assert diff_worlds(x, y).delta_o == pytest.approx(0.5)


def test_diff_name_matched_model_with_different_schema_counts_one():
    x = WorldModel((ModelSchema("m", (PropertySchema("p", "boolean"),)),), (), (), ())
    y = WorldModel((ModelSchema("m", (PropertySchema("p", "integer", 0, 1),)),), (), (), ())
    delta = diff_worlds(x, y)
    assert delta.delta_m == 1.0


def test_diff_relationships_symmetric_difference():
    model = ModelSchema("m", ())
    base = WorldModel((model,), (), (), (Relationship("is_a", "m", "m"),))
    other = WorldModel((model,), (), (), (Relationship("has", "m", "m"),))
    assert diff_worlds(base, other).delta_r == 2.0


def test_norm_identical_is_exactly_one(switches_world):
    assert world_norm(switches_world, switches_world, NormWeights(3, 1, 2, 9)) == 1.0


def test_norm_single_model_delta_is_half():
    x = WorldModel((ModelSchema("only"),), (), (), ())
    assert world_norm(x, empty_world(), NormWeights(1, 1, 1, 1)) == pytest.approx(0.5, abs=1e-12)


def test_norm_three_four_five_triangle():
    # delta_m = 3 and delta_a = 4 under unit weights: 1 / (1 + 5)
    x = WorldModel(
        tuple(ModelSchema(f"m{i}") for i in range(3)),
        tuple(ActionSchema(f"a{i}") for i in range(4)),
        (), (),
    )
    assert world_norm(x, empty_world()) == pytest.approx(1 / 6, abs=1e-12)


def test_norm_weight_isolation(switches_world):
    weights = NormWeights(1, 0, 0, 0)
    rng = random.Random(1)
    perturbed = add_unmatched_object(switches_world, rng)  # changes O only
    assert world_norm(switches_world, perturbed, weights) == 1.0
    flipped = with_object_values(switches_world, {"switch_1": {"on": True}})
    assert world_norm(switches_world, flipped, weights) == 1.0


def test_norm_monotone_under_unmatched_addition(switches_world):
    rng = random.Random(2)
    bigger = add_unmatched_object(switches_world, rng)
    assert world_norm(switches_world, bigger) < world_norm(switches_world, switches_world)


def test_norm_strictly_decreases_for_each_unmatched_component(switches_world):
    w = switches_world
    extra_model = WorldModel(w.models + (ModelSchema("zz_extra"),), w.actions,
                             w.objects, w.relationships)
    extra_action = WorldModel(w.models, w.actions + (ActionSchema("zz_noop"),),
                              w.objects, w.relationships)
    extra_rel = WorldModel(w.models, w.actions, w.objects,
                           w.relationships + (Relationship("near", "lamp_1", "lamp_2"),))
    for bigger, weights in (
        (extra_model, NormWeights(1, 0, 0, 0)),
        (extra_action, NormWeights(0, 1, 0, 0)),
        (extra_rel, NormWeights(0, 0, 0, 1)),
    ):
        assert world_norm(w, bigger, weights) < 1.0
        assert world_norm(w, bigger) < 1.0


def test_norm_weights_reject_bad_values():
    with pytest.raises(ValueError):
        NormWeights(-1, 0, 0, 0)
    with pytest.raises(ValueError):
        NormWeights(0, 0, 0, 0)


def test_roundtrip_is_canonical_and_idempotent():
    for name in ("switches", "grid_transport", "battery"):
        raw = resources.files("agentgauge").joinpath(f"worlds/{name}.world").read_bytes()
        world = load_world(raw)
        canonical = save_world(world)
        assert canonical == raw  # shipped samples are stored canonically
        assert save_world(load_world(canonical)) == canonical


def test_unknown_model_reference_is_a_validation_error():
    doc = {
        "format_version": 1,
        "models": [],
        "objects": [{"id": "x", "model": "ghost", "values": {}}],
    }
    with pytest.raises(WorldValidationError, match="unknown model"):
        load_world(json.dumps(doc))


def test_empty_world_document_is_valid():
    world = load_world(json.dumps({"format_version": 1}))
    assert world == empty_world()
    assert validate_world(world) == []


def test_parse_error_reports_position():
    with pytest.raises(WorldParseError, match="line 1"):
        load_world(b"{not json")


def test_missing_format_version_rejected():
    with pytest.raises(WorldParseError, match="format_version"):
        load_world(b"{}")


def test_validation_lists_all_violations():
    model = ModelSchema("m", (PropertySchema("a", "integer", 5, 1),
                              PropertySchema("b", "enum"),))
    errors = validate_world(WorldModel((model,), (), (), ()))
    assert len(errors) == 2


def test_object_value_outside_domain_rejected():
    model = ModelSchema("m", (PropertySchema("level", "integer", 0, 3),))
    world = WorldModel((model,), (), (ObjectInstance("o", "m", {"level": 9}),), ())
    assert any("outside domain" in e for e in validate_world(world))


# ---------------------------------------------------------------------------
# metric axioms over seeded random worlds


def test_norm_axioms_over_random_pairs():
    rng = random.Random(20240901)
    weights = NormWeights(1, 1, 1, 1)
    for _ in range(300):
        x, y = random_world(rng), random_world(rng)
        forward = world_norm(x, y, weights)
        backward = world_norm(y, x, weights)
        assert 0.0 < forward <= 1.0
        assert forward == backward
        assert (forward == 1.0) == diff_worlds(x, y).is_zero()


def test_delta_integrality_over_random_pairs():
    rng = random.Random(77)
    for _ in range(100):
        x, y = random_world(rng), random_world(rng)
        delta = diff_worlds(x, y)
        assert delta.delta_m == int(delta.delta_m)
        assert delta.delta_a == int(delta.delta_a)
        assert delta.delta_r == int(delta.delta_r)
        assert min(delta.delta_m, delta.delta_a, delta.delta_o, delta.delta_r) >= 0


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_norm_symmetry_property(seed):
    rng = random.Random(seed)
    x, y = random_world(rng), random_world(rng)
    assert world_norm(x, y) == world_norm(y, x)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_unmatched_addition_strictly_decreases_norm(seed):
    rng = random.Random(seed)
    x = random_world(rng)
    bigger = add_unmatched_object(x, rng)
    assert world_norm(x, bigger) < 1.0
    assert world_norm(x, bigger) < world_norm(x, x)


def test_canonical_world_is_order_insensitive(switches_world):
    reversed_world = WorldModel(
        tuple(reversed(switches_world.models)),
        tuple(reversed(switches_world.actions)),
        tuple(reversed(switches_world.objects)),
        tuple(reversed(switches_world.relationships)),
    )
    assert canonical_world(reversed_world) == canonical_world(switches_world)
    assert save_world(reversed_world) == save_world(switches_world)


def test_norm_in_open_unit_interval_even_for_huge_deltas():
    models = tuple(ModelSchema(f"m{i}") for i in range(200))
    big = WorldModel(models, (), (), ())
    norm = world_norm(big, empty_world())
    assert 0.0 < norm < 1.0
    assert math.isfinite(norm)
