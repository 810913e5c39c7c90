/**
 * Example external agent for the agentgauge black-box protocol.
 *
 * A deliberately small mirror of the harness's world-model schema: it records
 * objects and properties from observed transitions, induces effect rules by
 * diffing before/after states (attributing changes causally: primary
 * invocation first, then fired triggers), plans greedily over what it has
 * learned, and answers elicitation probes from that mirror. No eviction, no
 * search beyond one-step hill climbing; the source doubles as protocol
 * documentation.
 */

export type Value = boolean | number | string;

export interface Invocation {
  action: string;
  bindings: Record<string, string>;
}

export interface ObjectDoc {
  id: string;
  model: string;
  values: Record<string, Value>;
}

export interface WorldDoc {
  format_version: number;
  models?: ModelDoc[];
  actions?: ActionDoc[];
  objects?: ObjectDoc[];
  relationships?: RelationshipDoc[];
}

export interface PropertyDoc {
  name: string;
  kind: string;
  domain?: (number | string)[];
  value?: Value;
}

export interface ModelDoc {
  name: string;
  properties: PropertyDoc[];
}

export interface EffectDoc {
  slot: string;
  property: string;
  op: string;
  value?: Value;
  from?: { slot: string; property: string };
}

export interface ActionDoc {
  name: string;
  parameters: { name: string; model: string }[];
  preconditions: unknown[];
  effects: EffectDoc[];
  triggers: unknown[];
}

export interface RelationshipDoc {
  kind: string;
  subject: string;
  object: string;
}

export interface TransitionDoc {
  before: WorldDoc;
  invocation: Invocation;
  after: WorldDoc;
  fired_triggers?: Invocation[];
  preconditions_failed?: boolean;
}

export interface Message {
  type: string;
  session?: string;
  payload?: Record<string, unknown>;
}

export const PROTOCOL_VERSION = "1";

interface PropertyMeta {
  kind: "boolean" | "integer" | "real" | "enum" | null;
  lower: number;
  upper: number;
  choices: Set<string>;
}

interface EffectRule {
  mapping: Map<string, Value>; // JSON-encoded old value -> new value
  lastNew: Value;
}

function ruleKey(action: string, slot: string, property: string): string {
  return JSON.stringify([action, slot, property]);
}

export class MirrorWorld {
  objects = new Map<string, { model: string; values: Map<string, Value> }>();
  propMeta = new Map<string, Map<string, PropertyMeta>>();
  actionParams = new Map<string, { name: string; model: string }[]>();
  rules = new Map<string, EffectRule>();

  private recordValue(model: string, property: string, value: Value): void {
    let perModel = this.propMeta.get(model);
    if (perModel === undefined) {
      perModel = new Map();
      this.propMeta.set(model, perModel);
    }
    let meta = perModel.get(property);
    if (meta === undefined) {
      meta = { kind: null, lower: Infinity, upper: -Infinity, choices: new Set() };
      perModel.set(property, meta);
    }
    const kind =
      typeof value === "boolean" ? "boolean"
      : typeof value === "number" ? (Number.isInteger(value) ? "integer" : "real")
      : "enum";
    if (meta.kind === null) {
      meta.kind = kind;
    } else if (
      (meta.kind === "integer" && kind === "real") ||
      (meta.kind === "real" && kind === "integer")
    ) {
      meta.kind = "real"; // numeric kinds merge upward, nothing else shifts
    }
    if (typeof value === "number" && (meta.kind === "integer" || meta.kind === "real")) {
      meta.lower = Math.min(meta.lower, value);
      meta.upper = Math.max(meta.upper, value);
    } else if (typeof value === "string") {
      meta.choices.add(value);
    }
  }

  recordState(world: WorldDoc): void {
    for (const obj of world.objects ?? []) {
      const values = new Map(Object.entries(obj.values));
      if (!this.objects.has(obj.id)) {
        // first sighting wins, mirroring the reference learner: recorded
        // existence stays fixed, so the elicited norm never regresses
        this.objects.set(obj.id, { model: obj.model, values });
      }
      for (const [property, value] of values) {
        this.recordValue(obj.model, property, value);
      }
    }
  }

  private recordParams(world: WorldDoc, invocation: Invocation): void {
    if (this.actionParams.has(invocation.action)) return;
    const byId = new Map((world.objects ?? []).map((o) => [o.id, o]));
    const slots: { name: string; model: string }[] = [];
    for (const slot of Object.keys(invocation.bindings).sort()) {
      const bound = byId.get(invocation.bindings[slot]);
      if (bound === undefined) return; // never memorize an unresolvable action
      slots.push({ name: slot, model: bound.model });
    }
    this.actionParams.set(invocation.action, slots);
  }

  private confirmRule(action: string, slot: string, property: string,
                      oldValue: Value, newValue: Value): void {
    const key = ruleKey(action, slot, property);
    let rule = this.rules.get(key);
    if (rule === undefined) {
      rule = { mapping: new Map(), lastNew: newValue };
      this.rules.set(key, rule);
    }
    rule.mapping.set(JSON.stringify(oldValue), newValue);
    rule.lastNew = newValue;
  }

  observeTransition(t: TransitionDoc): void {
    this.recordState(t.before);
    this.recordState(t.after);
    const invocations = [t.invocation, ...(t.fired_triggers ?? [])];
    for (const invocation of invocations) {
      this.recordParams(t.before, invocation);
    }

    const before = new Map((t.before.objects ?? []).map((o) => [o.id, o.values]));
    let changes: { oid: string; property: string; oldValue: Value; newValue: Value }[] = [];
    for (const obj of t.after.objects ?? []) {
      const base = before.get(obj.id);
      if (base === undefined) continue;
      for (const property of Object.keys(obj.values).sort()) {
        if (property in base && base[property] !== obj.values[property]) {
          changes.push({ oid: obj.id, property,
                         oldValue: base[property], newValue: obj.values[property] });
        }
      }
    }
    changes.sort((a, b) =>
      a.oid < b.oid ? -1 : a.oid > b.oid ? 1
      : a.property < b.property ? -1 : a.property > b.property ? 1 : 0);

    // causal attribution: the primary invocation claims its changes first,
    // then each fired trigger, in firing order
    for (const invocation of invocations) {
      const bound = new Map<string, string>();
      for (const slot of Object.keys(invocation.bindings).sort()) {
        const oid = invocation.bindings[slot];
        if (!bound.has(oid)) bound.set(oid, slot);
      }
      const remaining: typeof changes = [];
      for (const change of changes) {
        const slot = bound.get(change.oid);
        if (slot === undefined) {
          remaining.push(change);
          continue;
        }
        this.confirmRule(invocation.action, slot, change.property,
                         change.oldValue, change.newValue);
      }
      changes = remaining;
    }
  }

  // -- probe answers ---------------------------------------------------------

  listObjects(): { id: string; model: string }[] {
    return [...this.objects.entries()]
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([id, entry]) => ({ id, model: entry.model }));
  }

  private propertyDoc(model: string, property: string): PropertyDoc | null {
    const meta = this.propMeta.get(model)?.get(property);
    if (meta === undefined || meta.kind === null) return null;
    if (meta.kind === "integer" || meta.kind === "real") {
      return { name: property, kind: meta.kind, domain: [meta.lower, meta.upper] };
    }
    if (meta.kind === "enum") {
      return { name: property, kind: "enum", domain: [...meta.choices].sort() };
    }
    return { name: property, kind: "boolean" };
  }

  getProperties(id: string): { id: string; model: string; properties: PropertyDoc[] } | null {
    const entry = this.objects.get(id);
    if (entry === undefined) return null;
    const properties: PropertyDoc[] = [];
    for (const property of [...entry.values.keys()].sort()) {
      const doc = this.propertyDoc(entry.model, property);
      if (doc === null) continue;
      properties.push({ ...doc, value: entry.values.get(property) });
    }
    return { id, model: entry.model, properties };
  }

  private inducedEffect(slot: string, property: string, rule: EffectRule): EffectDoc {
    const entries = [...rule.mapping.entries()].map(
      ([oldJson, newValue]) => [JSON.parse(oldJson) as Value, newValue] as const);
    const isFlip =
      entries.length === 2 &&
      entries.some(([o, n]) => o === false && n === true) &&
      entries.some(([o, n]) => o === true && n === false);
    if (isFlip) {
      return { slot, property, op: "toggle" };
    }
    const distinctNew = new Set(entries.map(([, n]) => JSON.stringify(n)));
    if (distinctNew.size === 1) {
      return { slot, property, op: "set", value: entries[0][1] };
    }
    const numeric = entries.every(
      ([o, n]) => typeof o === "number" && typeof n === "number");
    if (numeric) {
      const deltas = new Set(entries.map(([o, n]) => (n as number) - (o as number)));
      if (deltas.size === 1) {
        return { slot, property, op: "add", value: [...deltas][0] };
      }
    }
    return { slot, property, op: "set", value: rule.lastNew };
  }

  listActions(): ActionDoc[] {
    const docs: ActionDoc[] = [];
    for (const action of [...this.actionParams.keys()].sort()) {
      const effects: EffectDoc[] = [];
      const keys = [...this.rules.keys()]
        .map((k) => JSON.parse(k) as [string, string, string])
        .filter(([a]) => a === action)
        .sort((a, b) => (a[1] < b[1] ? -1 : a[1] > b[1] ? 1
          : a[2] < b[2] ? -1 : a[2] > b[2] ? 1 : 0));
      for (const [, slot, property] of keys) {
        const rule = this.rules.get(ruleKey(action, slot, property))!;
        effects.push(this.inducedEffect(slot, property, rule));
      }
      docs.push({
        name: action,
        parameters: this.actionParams.get(action)!,
        preconditions: [],
        effects,
        triggers: [],
      });
    }
    return docs;
  }

  // -- reasoning over the mirror ----------------------------------------------

  private fits(value: Value, doc: PropertyDoc | undefined): boolean {
    if (doc === undefined) return true; // nothing declared, nothing violated
    if (doc.kind === "boolean") return typeof value === "boolean";
    if (doc.kind === "integer" || doc.kind === "real") {
      if (typeof value !== "number") return false;
      if (doc.kind === "integer" && !Number.isInteger(value)) return false;
      const [lower, upper] = (doc.domain ?? [-Infinity, Infinity]) as number[];
      return value >= lower && value <= upper;
    }
    return typeof value === "string" && (doc.domain ?? []).includes(value);
  }

  predictChanges(state: WorldDoc, invocation: Invocation):
      { object: string; property: string; value: Value }[] {
    const byId = new Map((state.objects ?? []).map((o) => [o.id, o]));
    const schemas = new Map<string, Map<string, PropertyDoc>>();
    for (const model of state.models ?? []) {
      schemas.set(model.name, new Map(model.properties.map((p) => [p.name, p])));
    }
    const changes: { object: string; property: string; value: Value }[] = [];
    const keys = [...this.rules.keys()]
      .map((k) => JSON.parse(k) as [string, string, string])
      .filter(([action]) => action === invocation.action)
      .sort();
    for (const [action, slot, property] of keys) {
      const oid = invocation.bindings[slot];
      const obj = oid === undefined ? undefined : byId.get(oid);
      if (obj === undefined || !(property in obj.values)) continue;
      const rule = this.rules.get(ruleKey(action, slot, property))!;
      const next = rule.mapping.get(JSON.stringify(obj.values[property]));
      if (next === undefined) continue;
      if (!this.fits(next, schemas.get(obj.model)?.get(property))) continue;
      if (next !== obj.values[property]) {
        changes.push({ object: oid!, property, value: next });
      }
    }
    return changes;
  }

  predict(state: WorldDoc, invocation: Invocation): WorldDoc {
    const changes = this.predictChanges(state, invocation);
    if (changes.length === 0) return state;
    const updated = (state.objects ?? []).map((o) => ({ ...o, values: { ...o.values } }));
    const byId = new Map(updated.map((o) => [o.id, o]));
    for (const change of changes) {
      byId.get(change.object)!.values[change.property] = change.value;
    }
    return { ...state, objects: updated };
  }

  /** Count of object property values already agreeing with the goal. */
  private agreement(state: WorldDoc, goal: WorldDoc): number {
    const byId = new Map((state.objects ?? []).map((o) => [o.id, o.values]));
    let matches = 0;
    for (const goalObj of goal.objects ?? []) {
      const values = byId.get(goalObj.id);
      if (values === undefined) continue;
      for (const [property, wanted] of Object.entries(goalObj.values)) {
        if (values[property] === wanted) matches += 1;
      }
    }
    return matches;
  }

  private knownInvocations(state: WorldDoc): Invocation[] {
    const byModel = new Map<string, string[]>();
    for (const obj of state.objects ?? []) {
      const ids = byModel.get(obj.model) ?? [];
      ids.push(obj.id);
      byModel.set(obj.model, ids);
    }
    for (const ids of byModel.values()) ids.sort();
    const out: Invocation[] = [];
    for (const action of [...this.actionParams.keys()].sort()) {
      const params = this.actionParams.get(action)!;
      let combos: Record<string, string>[] = [{}];
      for (const param of params) {
        const pool = byModel.get(param.model) ?? [];
        combos = combos.flatMap((combo) =>
          pool.map((oid) => ({ ...combo, [param.name]: oid })));
      }
      for (const bindings of combos) {
        out.push({ action, bindings });
      }
    }
    return out;
  }

  planFor(state: WorldDoc, goal: WorldDoc, horizon: number):
      { steps: Invocation[]; cost_units: number } {
    let current = state;
    let currentScore = this.agreement(current, goal);
    const steps: Invocation[] = [];
    let cost = 1;
    const invocations = this.knownInvocations(state);
    for (let depth = 0; depth < horizon; depth += 1) {
      let best: { score: number; invocation: Invocation; next: WorldDoc } | null = null;
      for (const invocation of invocations) {
        cost += 1;
        const next = this.predict(current, invocation);
        const score = this.agreement(next, goal);
        if (best === null || score > best.score) {
          best = { score, invocation, next };
        }
      }
      if (best === null || best.score <= currentScore) break; // local maximum
      currentScore = best.score;
      current = best.next;
      steps.push(best.invocation);
    }
    return { steps, cost_units: cost };
  }
}

// ---------------------------------------------------------------------------
// message dispatch

export interface Handled {
  response: Message;
  done?: boolean;
  fatal?: boolean;
}

export function handleMessage(agent: MirrorWorld, msg: Message): Handled {
  const session = msg.session ?? "";
  const payload = (msg.payload ?? {}) as Record<string, any>;
  const reply = (type: string, body: Record<string, unknown>): Message =>
    ({ type, session, payload: body });

  switch (msg.type) {
    case "hello": {
      if (payload.version !== PROTOCOL_VERSION) {
        return { response: reply("hello", {
          version: PROTOCOL_VERSION, accepted: false, reason: "unsupported version" }) };
      }
      return { response: reply("hello", { version: PROTOCOL_VERSION, accepted: true }) };
    }
    case "observe": {
      const episode = (payload.episode ?? []) as TransitionDoc[];
      for (const transition of episode) {
        agent.observeTransition(transition);
      }
      return { response: reply("observe", { ok: true, count: episode.length }) };
    }
    case "plan_request": {
      const horizon = typeof payload.horizon === "number" ? payload.horizon : 3;
      const plan = agent.planFor(payload.state as WorldDoc, payload.goal as WorldDoc, horizon);
      return { response: reply("plan_response", plan) };
    }
    case "predict_request": {
      const predicted = agent.predict(payload.state as WorldDoc,
                                      payload.invocation as Invocation);
      return { response: reply("predict_response", { state: predicted }) };
    }
    case "probe":
      return { response: reply("probe_response", answerProbe(agent, payload)) };
    case "shutdown":
      return { response: reply("shutdown", { ok: true }), done: true };
    default:
      return {
        response: reply("error", { reason: `unknown message type ${JSON.stringify(msg.type)}` }),
        fatal: true,
      };
  }
}

function answerProbe(agent: MirrorWorld, payload: Record<string, any>): Record<string, unknown> {
  switch (payload.kind) {
    case "list_objects":
      return { objects: agent.listObjects() };
    case "get_properties": {
      const answer = agent.getProperties(String(payload.id));
      return answer ?? { error: `unknown object ${JSON.stringify(payload.id)}` };
    }
    case "list_actions":
      return { actions: agent.listActions() };
    case "list_relationships":
      return { relationships: [] }; // this agent never memorizes relationships
    case "predict_effect":
      return { changes: agent.predictChanges(payload.state as WorldDoc,
                                             payload.invocation as Invocation) };
    default:
      return { error: `unknown probe kind ${JSON.stringify(payload.kind)}` };
  }
}
