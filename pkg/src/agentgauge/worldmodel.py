"""Symbolic world models: schemas, object instances, structural diff, and the world-norm.

A world is the tuple (models, actions, objects, relationships). Worlds are
immutable values; every operation here is a pure function, and canonical
ordering (lexicographic by name/id) makes serialization byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

Value = bool | int | float | str

NUMERIC_KINDS = ("integer", "real")
PROPERTY_KINDS = ("integer", "real", "boolean", "enum")
COMPARE_OPS = ("eq", "ne", "lt", "le", "gt", "ge")
EFFECT_OPS = ("set", "add", "toggle", "copy")

FORMAT_VERSION = 1


class WorldParseError(ValueError):
    """A world document is structurally malformed (bad JSON or bad shape)."""


class WorldValidationError(ValueError):
    """A world violates its invariants. `violations` lists every failure."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class PropertySchema:
    """One typed property of a model. Numeric kinds carry a closed interval,
    enum kinds a value set, booleans neither."""

    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    choices: tuple[str, ...] = ()

    def domain_width(self) -> float:
        if self.kind not in NUMERIC_KINDS or self.lower is None or self.upper is None:
            return 0.0
        return float(self.upper) - float(self.lower)


@dataclass(frozen=True)
class ModelSchema:
    name: str
    properties: tuple[PropertySchema, ...] = ()

    def property_map(self) -> dict[str, PropertySchema]:
        return {p.name: p for p in self.properties}


@dataclass(frozen=True)
class Slot:
    """A typed parameter of an action: the bound object must instantiate `model`."""

    name: str
    model: str


@dataclass(frozen=True)
class Predicate:
    """Comparison over a slot's property, against a constant or another
    slot's property (ref_slot/ref_prop)."""

    slot: str
    prop: str
    op: str
    value: Value | None = None
    ref_slot: str | None = None
    ref_prop: str | None = None


@dataclass(frozen=True)
class Effect:
    """Property update applied to a bound object.

    Ops: `set` assigns a constant, `add` shifts a numeric value, `toggle`
    flips a boolean, `copy` reads another slot's property.
    """

    slot: str
    prop: str
    op: str
    value: Value | None = None
    source_slot: str | None = None
    source_prop: str | None = None


@dataclass(frozen=True)
class TriggerRule:
    """Causal hook: when the watched property changes on an object matching
    `slot`'s model (and the new value satisfies the optional condition), the
    owning action is invoked with that object bound to `slot`."""

    slot: str
    prop: str
    op: str | None = None
    value: Value | None = None


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple[Slot, ...] = ()
    preconditions: tuple[Predicate, ...] = ()
    effects: tuple[Effect, ...] = ()
    triggers: tuple[TriggerRule, ...] = ()

    def slot_map(self) -> dict[str, Slot]:
        return {s.name: s for s in self.parameters}


@dataclass(frozen=True)
class ObjectInstance:
    id: str
    model: str
    values: dict[str, Value] = field(default_factory=dict)


@dataclass(frozen=True)
class Relationship:
    """A (kind, subject, object) triple; endpoints name models or objects."""

    kind: str
    subject: str
    object: str

    def triple(self) -> tuple[str, str, str]:
        return (self.kind, self.subject, self.object)


@dataclass(frozen=True)
class WorldModel:
    models: tuple[ModelSchema, ...] = ()
    actions: tuple[ActionSchema, ...] = ()
    objects: tuple[ObjectInstance, ...] = ()
    relationships: tuple[Relationship, ...] = ()

    def model_map(self) -> dict[str, ModelSchema]:
        return {m.name: m for m in self.models}

    def action_map(self) -> dict[str, ActionSchema]:
        return {a.name: a for a in self.actions}

    def object_map(self) -> dict[str, ObjectInstance]:
        return {o.id: o for o in self.objects}


@dataclass(frozen=True)
class NormWeights:
    """Component weights of the world-norm; all nonnegative, not all zero."""

    m: float = 1.0
    a: float = 1.0
    o: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        parts = (self.m, self.a, self.o, self.r)
        if any(w < 0 for w in parts):
            raise ValueError("norm weights must be nonnegative")
        if all(w == 0 for w in parts):
            raise ValueError("norm weights must not all be zero")


@dataclass(frozen=True)
class WorldDelta:
    """Component-difference magnitudes between two worlds. All zero iff the
    worlds are structurally identical under canonical matching."""

    delta_m: float
    delta_a: float
    delta_o: float
    delta_r: float

    def is_zero(self) -> bool:
        return self.delta_m == 0 and self.delta_a == 0 and self.delta_o == 0 and self.delta_r == 0


def empty_world() -> WorldModel:
    return WorldModel()


# ---------------------------------------------------------------------------
# validation


def value_kind(value: Value) -> str:
    # bool is an int subclass; test it first
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "real"
    return "enum"


def value_fits(value: Value, schema: PropertySchema) -> bool:
    kind = value_kind(value)
    if schema.kind == "real":
        if kind not in ("integer", "real"):
            return False
        return schema.lower <= float(value) <= schema.upper
    if schema.kind == "integer":
        if kind != "integer":
            return False
        return schema.lower <= value <= schema.upper
    if schema.kind == "boolean":
        return kind == "boolean"
    return kind == "enum" and value in schema.choices


def validate_world(world: WorldModel) -> list[str]:
    """Return every invariant violation in `world` (empty list means valid)."""
    errors: list[str] = []
    models = world.model_map()
    if len(models) != len(world.models):
        errors.append("duplicate model names")

    for m in world.models:
        seen: set[str] = set()
        for p in m.properties:
            if p.name in seen:
                errors.append(f"model {m.name!r}: duplicate property {p.name!r}")
            seen.add(p.name)
            if p.kind not in PROPERTY_KINDS:
                errors.append(f"model {m.name!r}: property {p.name!r} has unknown kind {p.kind!r}")
                continue
            if p.kind in NUMERIC_KINDS:
                if p.lower is None or p.upper is None:
                    errors.append(f"model {m.name!r}: numeric property {p.name!r} needs a domain")
                elif p.lower > p.upper:
                    errors.append(f"model {m.name!r}: property {p.name!r} domain is empty")
            elif p.kind == "enum":
                if not p.choices:
                    errors.append(f"model {m.name!r}: enum property {p.name!r} has no choices")
                if len(set(p.choices)) != len(p.choices):
                    errors.append(f"model {m.name!r}: enum property {p.name!r} repeats choices")

    actions = world.action_map()
    if len(actions) != len(world.actions):
        errors.append("duplicate action names")

    for a in world.actions:
        slots = a.slot_map()
        if len(slots) != len(a.parameters):
            errors.append(f"action {a.name!r}: duplicate slot names")

        def prop_of(slot_name: str, prop_name: str, where: str) -> PropertySchema | None:
            slot = slots.get(slot_name)
            if slot is None:
                errors.append(f"action {a.name!r}: {where} references unknown slot {slot_name!r}")
                return None
            model = models.get(slot.model)
            if model is None:
                return None  # reported below via the slot check
            schema = model.property_map().get(prop_name)
            if schema is None:
                errors.append(
                    f"action {a.name!r}: {where} references undeclared property "
                    f"{slot.model}.{prop_name}"
                )
            return schema

        for s in a.parameters:
            if s.model not in models:
                errors.append(f"action {a.name!r}: slot {s.name!r} requires unknown model {s.model!r}")
        for i, pre in enumerate(a.preconditions):
            where = f"precondition {i}"
            if pre.op not in COMPARE_OPS:
                errors.append(f"action {a.name!r}: {where} has unknown op {pre.op!r}")
            prop_of(pre.slot, pre.prop, where)
            if pre.ref_slot is not None:
                prop_of(pre.ref_slot, pre.ref_prop or "", where)
            elif pre.value is None:
                errors.append(f"action {a.name!r}: {where} compares against nothing")
        for i, eff in enumerate(a.effects):
            where = f"effect {i}"
            if eff.op not in EFFECT_OPS:
                errors.append(f"action {a.name!r}: {where} has unknown op {eff.op!r}")
                continue
            schema = prop_of(eff.slot, eff.prop, where)
            if schema is None:
                continue
            if eff.op == "toggle" and schema.kind != "boolean":
                errors.append(f"action {a.name!r}: {where} toggles non-boolean {eff.prop!r}")
            if eff.op == "add" and schema.kind not in NUMERIC_KINDS:
                errors.append(f"action {a.name!r}: {where} adds to non-numeric {eff.prop!r}")
            if eff.op in ("set", "add") and eff.value is None:
                errors.append(f"action {a.name!r}: {where} is missing a value")
            if eff.op == "copy":
                if eff.source_slot is None or eff.source_prop is None:
                    errors.append(f"action {a.name!r}: {where} is missing a copy source")
                else:
                    prop_of(eff.source_slot, eff.source_prop, where)
        for i, trig in enumerate(a.triggers):
            where = f"trigger {i}"
            prop_of(trig.slot, trig.prop, where)
            if trig.op is not None and trig.op not in COMPARE_OPS:
                errors.append(f"action {a.name!r}: {where} has unknown op {trig.op!r}")
            if trig.op is not None and trig.value is None:
                errors.append(f"action {a.name!r}: {where} compares against nothing")

    ids: set[str] = set()
    for o in world.objects:
        if o.id in ids:
            errors.append(f"duplicate object id {o.id!r}")
        ids.add(o.id)
        model = models.get(o.model)
        if model is None:
            errors.append(f"object {o.id!r}: unknown model {o.model!r}")
            continue
        declared = model.property_map()
        for name in declared:
            if name not in o.values:
                errors.append(f"object {o.id!r}: missing value for {name!r}")
        for name, value in o.values.items():
            schema = declared.get(name)
            if schema is None:
                errors.append(f"object {o.id!r}: value for undeclared property {name!r}")
            elif not value_fits(value, schema):
                errors.append(f"object {o.id!r}: value {value!r} outside domain of {name!r}")

    names = set(models) | ids
    for rel in world.relationships:
        if rel.subject not in names:
            errors.append(f"relationship {rel.triple()}: unknown subject {rel.subject!r}")
        if rel.object not in names:
            errors.append(f"relationship {rel.triple()}: unknown object {rel.object!r}")

    return errors


def ensure_valid(world: WorldModel) -> WorldModel:
    errors = validate_world(world)
    if errors:
        raise WorldValidationError(errors)
    return world


# ---------------------------------------------------------------------------
# canonical form


def canonical_world(world: WorldModel) -> WorldModel:
    """Sort all four sets (and property lists) lexicographically.

    Two worlds are structurally identical iff their canonical forms are equal;
    saving a canonical world is byte-deterministic.
    """
    models = tuple(
        replace(m, properties=tuple(sorted(m.properties, key=lambda p: p.name)))
        for m in sorted(world.models, key=lambda m: m.name)
    )
    actions = tuple(sorted(world.actions, key=lambda a: a.name))
    objects = tuple(
        replace(o, values={k: o.values[k] for k in sorted(o.values)})
        for o in sorted(world.objects, key=lambda o: o.id)
    )
    relationships = tuple(sorted(world.relationships, key=lambda r: r.triple()))
    return WorldModel(models, actions, objects, relationships)


def with_object_values(world: WorldModel, updates: dict[str, dict[str, Value]]) -> WorldModel:
    """Functional update of object property values; everything else is shared."""
    objects = tuple(
        replace(o, values={**o.values, **updates[o.id]}) if o.id in updates else o
        for o in world.objects
    )
    return replace(world, objects=objects)


# ---------------------------------------------------------------------------
# structural diff and world-norm


def _object_distance(ox: ObjectInstance, oy: ObjectInstance,
                     mx: dict[str, ModelSchema], my: dict[str, ModelSchema]) -> float:
    if ox.model != oy.model:
        return 1.0
    names = sorted(set(ox.values) | set(oy.values))
    if not names:
        return 0.0
    schema_x = mx.get(ox.model)
    schema_y = my.get(oy.model)
    props_x = schema_x.property_map() if schema_x else {}
    props_y = schema_y.property_map() if schema_y else {}
    mismatch = 0.0
    for name in names:
        if name not in ox.values or name not in oy.values:
            mismatch += 1.0
            continue
        vx, vy = ox.values[name], oy.values[name]
        # symmetric width choice: the widest declared domain on either side
        schemas = [s for s in (props_x.get(name), props_y.get(name)) if s is not None]
        numeric = [s for s in schemas if s.kind in NUMERIC_KINDS]
        if numeric and len(numeric) == len(schemas):
            width = max(s.domain_width() for s in numeric)
            if width <= 0:
                mismatch += 0.0 if vx == vy else 1.0
            else:
                mismatch += min(abs(float(vx) - float(vy)) / width, 1.0)
        else:
            mismatch += 0.0 if vx == vy else 1.0
    return mismatch / len(names)


def diff_worlds(x: WorldModel, y: WorldModel) -> WorldDelta:
    """Component-wise structural difference under canonical name/id matching.

    Unmatched entries count one each; a name-matched model or action whose
    structure differs counts one (a single disagreement, not two absences).
    Matched objects contribute a per-object distance in [0, 1]: the fraction
    of mismatched properties, numeric mismatches normalized by domain width.
    """
    x = canonical_world(ensure_valid(x))
    y = canonical_world(ensure_valid(y))

    mx, my = x.model_map(), y.model_map()
    delta_m = float(len(set(mx) ^ set(my)))
    for name in set(mx) & set(my):
        if mx[name] != my[name]:
            delta_m += 1.0

    ax, ay = x.action_map(), y.action_map()
    delta_a = float(len(set(ax) ^ set(ay)))
    for name in set(ax) & set(ay):
        if ax[name] != ay[name]:
            delta_a += 1.0

    ox, oy = x.object_map(), y.object_map()
    delta_o = float(len(set(ox) ^ set(oy)))
    for oid in set(ox) & set(oy):
        delta_o += _object_distance(ox[oid], oy[oid], mx, my)

    rx = {r.triple() for r in x.relationships}
    ry = {r.triple() for r in y.relationships}
    delta_r = float(len(rx ^ ry))

    return WorldDelta(delta_m, delta_a, delta_o, delta_r)


def norm_of_delta(delta: WorldDelta, w: NormWeights) -> float:
    radicand = (
        w.m * delta.delta_m ** 2
        + w.a * delta.delta_a ** 2
        + w.o * delta.delta_o ** 2
        + w.r * delta.delta_r ** 2
    )
    return 1.0 / (1.0 + math.sqrt(radicand))


def world_norm(x: WorldModel, y: WorldModel, w: NormWeights = NormWeights()) -> float:
    """Similarity of two worlds in (0, 1]; 1 means structurally identical."""
    return norm_of_delta(diff_worlds(x, y), w)


# ---------------------------------------------------------------------------
# world-file serialization (JSON, format_version 1)


def _property_to_doc(p: PropertySchema) -> dict:
    doc: dict = {"name": p.name, "kind": p.kind}
    if p.kind in NUMERIC_KINDS:
        doc["domain"] = [p.lower, p.upper]
    elif p.kind == "enum":
        doc["domain"] = list(p.choices)
    return doc


def _predicate_to_doc(p: Predicate) -> dict:
    doc: dict = {"slot": p.slot, "property": p.prop, "op": p.op}
    if p.ref_slot is not None:
        doc["ref"] = {"slot": p.ref_slot, "property": p.ref_prop}
    else:
        doc["value"] = p.value
    return doc


def _effect_to_doc(e: Effect) -> dict:
    doc: dict = {"slot": e.slot, "property": e.prop, "op": e.op}
    if e.op in ("set", "add"):
        doc["value"] = e.value
    elif e.op == "copy":
        doc["from"] = {"slot": e.source_slot, "property": e.source_prop}
    return doc


def _trigger_to_doc(t: TriggerRule) -> dict:
    doc: dict = {"slot": t.slot, "property": t.prop}
    if t.op is not None:
        doc["when"] = {"op": t.op, "value": t.value}
    return doc


def property_to_doc(p: PropertySchema) -> dict:
    return _property_to_doc(p)


def action_to_doc(a: ActionSchema) -> dict:
    return {
        "name": a.name,
        "parameters": [{"name": s.name, "model": s.model} for s in a.parameters],
        "preconditions": [_predicate_to_doc(p) for p in a.preconditions],
        "effects": [_effect_to_doc(e) for e in a.effects],
        "triggers": [_trigger_to_doc(t) for t in a.triggers],
    }


def world_to_doc(world: WorldModel) -> dict:
    """Plain-dict form of a world, canonical and JSON-ready."""
    world = canonical_world(world)
    return {
        "format_version": FORMAT_VERSION,
        "models": [
            {"name": m.name, "properties": [_property_to_doc(p) for p in m.properties]}
            for m in world.models
        ],
        "actions": [action_to_doc(a) for a in world.actions],
        "objects": [
            {"id": o.id, "model": o.model, "values": dict(o.values)} for o in world.objects
        ],
        "relationships": [
            {"kind": r.kind, "subject": r.subject, "object": r.object}
            for r in world.relationships
        ],
    }


def _expect(doc, key: str, types, where: str):
    if not isinstance(doc, dict):
        raise WorldParseError(f"{where}: expected an object, got {type(doc).__name__}")
    if key not in doc:
        raise WorldParseError(f"{where}: missing key {key!r}")
    value = doc[key]
    if not isinstance(value, types):
        raise WorldParseError(f"{where}.{key}: unexpected type {type(value).__name__}")
    return value


def _property_from_doc(doc: dict, where: str) -> PropertySchema:
    name = _expect(doc, "name", str, where)
    kind = _expect(doc, "kind", str, where)
    lower = upper = None
    choices: tuple[str, ...] = ()
    if kind in NUMERIC_KINDS:
        domain = _expect(doc, "domain", list, where)
        if len(domain) != 2 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in domain):
            raise WorldParseError(f"{where}.domain: expected [lower, upper]")
        lower, upper = domain
        if kind == "real":
            lower, upper = float(lower), float(upper)
    elif kind == "enum":
        domain = _expect(doc, "domain", list, where)
        if not all(isinstance(v, str) for v in domain):
            raise WorldParseError(f"{where}.domain: enum choices must be strings")
        choices = tuple(domain)
    return PropertySchema(name=name, kind=kind, lower=lower, upper=upper, choices=choices)


def _value_from_doc(value, where: str) -> Value:
    if not isinstance(value, (bool, int, float, str)):
        raise WorldParseError(f"{where}: unsupported value type {type(value).__name__}")
    return value


def _predicate_from_doc(doc: dict, where: str) -> Predicate:
    slot = _expect(doc, "slot", str, where)
    prop = _expect(doc, "property", str, where)
    op = _expect(doc, "op", str, where)
    if "ref" in doc:
        ref = _expect(doc, "ref", dict, where)
        return Predicate(slot, prop, op,
                         ref_slot=_expect(ref, "slot", str, where + ".ref"),
                         ref_prop=_expect(ref, "property", str, where + ".ref"))
    return Predicate(slot, prop, op, value=_value_from_doc(doc.get("value"), where + ".value"))


def _effect_from_doc(doc: dict, where: str) -> Effect:
    slot = _expect(doc, "slot", str, where)
    prop = _expect(doc, "property", str, where)
    op = _expect(doc, "op", str, where)
    if op == "copy":
        src = _expect(doc, "from", dict, where)
        return Effect(slot, prop, op,
                      source_slot=_expect(src, "slot", str, where + ".from"),
                      source_prop=_expect(src, "property", str, where + ".from"))
    if op in ("set", "add"):
        return Effect(slot, prop, op, value=_value_from_doc(doc.get("value"), where + ".value"))
    return Effect(slot, prop, op)


def _trigger_from_doc(doc: dict, where: str) -> TriggerRule:
    slot = _expect(doc, "slot", str, where)
    prop = _expect(doc, "property", str, where)
    if "when" in doc:
        when = _expect(doc, "when", dict, where)
        return TriggerRule(slot, prop,
                           op=_expect(when, "op", str, where + ".when"),
                           value=_value_from_doc(when.get("value"), where + ".when.value"))
    return TriggerRule(slot, prop)


def property_from_doc(doc: dict, where: str = "property") -> PropertySchema:
    return _property_from_doc(doc, where)


def action_from_doc(a: dict, where: str = "action") -> ActionSchema:
    return ActionSchema(
        name=_expect(a, "name", str, where),
        parameters=tuple(
            Slot(_expect(s, "name", str, f"{where}.parameters[{j}]"),
                 _expect(s, "model", str, f"{where}.parameters[{j}]"))
            for j, s in enumerate(a.get("parameters", []))
        ),
        preconditions=tuple(
            _predicate_from_doc(p, f"{where}.preconditions[{j}]")
            for j, p in enumerate(a.get("preconditions", []))
        ),
        effects=tuple(
            _effect_from_doc(e, f"{where}.effects[{j}]")
            for j, e in enumerate(a.get("effects", []))
        ),
        triggers=tuple(
            _trigger_from_doc(t, f"{where}.triggers[{j}]")
            for j, t in enumerate(a.get("triggers", []))
        ),
    )


def world_from_doc(doc: dict) -> WorldModel:
    """Parse a plain-dict world document; validates before returning."""
    if not isinstance(doc, dict):
        raise WorldParseError(f"world document: expected an object, got {type(doc).__name__}")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise WorldParseError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")

    models = []
    for i, m in enumerate(doc.get("models", [])):
        where = f"models[{i}]"
        models.append(ModelSchema(
            name=_expect(m, "name", str, where),
            properties=tuple(
                _property_from_doc(p, f"{where}.properties[{j}]")
                for j, p in enumerate(_expect(m, "properties", list, where) if "properties" in m else [])
            ),
        ))

    actions = [action_from_doc(a, f"actions[{i}]") for i, a in enumerate(doc.get("actions", []))]

    objects = []
    for i, o in enumerate(doc.get("objects", [])):
        where = f"objects[{i}]"
        values = _expect(o, "values", dict, where)
        objects.append(ObjectInstance(
            id=_expect(o, "id", str, where),
            model=_expect(o, "model", str, where),
            values={k: _value_from_doc(v, f"{where}.values.{k}") for k, v in values.items()},
        ))

    relationships = []
    for i, r in enumerate(doc.get("relationships", [])):
        where = f"relationships[{i}]"
        relationships.append(Relationship(
            kind=_expect(r, "kind", str, where),
            subject=_expect(r, "subject", str, where),
            object=_expect(r, "object", str, where),
        ))

    world = canonical_world(WorldModel(tuple(models), tuple(actions), tuple(objects), tuple(relationships)))
    return ensure_valid(world)


def load_world(data: bytes | str) -> WorldModel:
    """Parse and validate a world file (JSON, format_version 1)."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise WorldParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return world_from_doc(doc)


def save_world(world: WorldModel) -> bytes:
    """Serialize a world deterministically (canonical order, sorted keys)."""
    doc = world_to_doc(ensure_valid(world))
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")


def world_digest(world: WorldModel) -> str:
    """Stable content digest of a world's canonical serialization."""
    return hashlib.sha256(save_world(world)).hexdigest()
