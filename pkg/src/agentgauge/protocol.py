"""Black-box wire protocol: newline-delimited JSON over standard streams or TCP.

One message per line, at most 1 MiB, strict request/response alternation.
The loopback session runs an in-process agent behind the identical encode,
decode, and dispatch path a remote process would traverse, so scores computed
either way are bit-for-bit equal. Elicitation reconstructs an agent's internal
world-model purely from probe answers; it never reads agent internals.
"""

from __future__ import annotations

import json
import queue
import socket
import subprocess
import threading
import uuid
from dataclasses import dataclass

from .agents import Agent, Plan
from .simulator import (
    ActionInvocation,
    invocation_from_doc,
    invocation_to_doc,
    transition_from_doc,
    transition_to_doc,
)
from .worldmodel import (
    ModelSchema,
    ObjectInstance,
    Relationship,
    WorldModel,
    action_from_doc,
    action_to_doc,
    canonical_world,
    ensure_valid,
    property_from_doc,
    property_to_doc,
    validate_world,
    world_from_doc,
    world_to_doc,
)

PROTOCOL_VERSION = "1"
MAX_LINE_BYTES = 1 << 20

REQUEST_RESPONSE = {
    "hello": "hello",
    "observe": "observe",
    "plan_request": "plan_response",
    "predict_request": "predict_response",
    "probe": "probe_response",
    "shutdown": "shutdown",
}

PROBE_KINDS = ("list_objects", "get_properties", "list_actions",
               "predict_effect", "list_relationships")


class ProtocolError(RuntimeError):
    """A message violated the wire grammar."""


class SessionFailure(RuntimeError):
    """The session is unusable; the agent's evaluation must abort."""


def encode_message(msg_type: str, session: str, payload: dict) -> bytes:
    line = json.dumps(
        {"type": msg_type, "session": session, "payload": payload},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8") + b"\n"
    if len(line) > MAX_LINE_BYTES:
        raise ProtocolError(f"message exceeds {MAX_LINE_BYTES} bytes")
    return line


def decode_message(line: bytes) -> dict:
    if len(line) > MAX_LINE_BYTES:
        raise ProtocolError(f"message exceeds {MAX_LINE_BYTES} bytes")
    try:
        doc = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"undecodable message: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("type"), str):
        raise ProtocolError("message must be an object with a string 'type'")
    doc.setdefault("session", "")
    payload = doc.setdefault("payload", {})
    if not isinstance(payload, dict):
        raise ProtocolError("payload must be an object")
    return doc


def plan_to_doc(plan: Plan) -> dict:
    return {"steps": [invocation_to_doc(s) for s in plan.steps],
            "cost_units": plan.cost_units}


def plan_from_doc(doc: dict) -> Plan:
    steps = tuple(invocation_from_doc(s) for s in doc.get("steps", []))
    cost = doc.get("cost_units", 1)
    if not isinstance(cost, int) or cost < 1:
        raise ProtocolError(f"cost_units must be a positive integer, got {cost!r}")
    return Plan(steps, cost)


@dataclass(frozen=True)
class ProbePlan:
    """Elicitation settings: how many probes one round may spend."""

    budget: int = 1024

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("probe budget must be >= 1")


# ---------------------------------------------------------------------------
# agent side


def _state_changes(before: WorldModel, after: WorldModel) -> list[dict]:
    base = before.object_map()
    changes = []
    for obj in after.objects:
        prior = base.get(obj.id)
        if prior is None:
            continue
        for prop in sorted(obj.values):
            if prop in prior.values and prior.values[prop] != obj.values[prop]:
                changes.append({"object": obj.id, "property": prop, "value": obj.values[prop]})
    return changes


class AgentServer:
    """Answers one decoded request per call, entirely through the agent's
    public interface. Probe answers are derived from describe(), which keeps
    over-the-wire elicitation equal to the in-process report."""

    def __init__(self, agent: Agent):
        self.agent = agent
        self.closed = False

    def handle_line(self, line: bytes) -> bytes:
        try:
            doc = decode_message(line)
        except ProtocolError as exc:
            return encode_message("error", "", {"reason": str(exc)})
        session = doc["session"]
        try:
            rtype, payload = self.handle(doc["type"], doc["payload"])
        except Exception as exc:  # never let an agent fault kill the stream
            rtype, payload = "error", {"reason": f"{type(exc).__name__}: {exc}"}
        return encode_message(rtype, session, payload)

    def handle(self, msg_type: str, payload: dict) -> tuple[str, dict]:
        if msg_type == "hello":
            version = payload.get("version")
            if version != PROTOCOL_VERSION:
                return "hello", {"version": PROTOCOL_VERSION, "accepted": False,
                                 "reason": "unsupported version"}
            return "hello", {"version": PROTOCOL_VERSION, "accepted": True}
        if msg_type == "shutdown":
            self.closed = True
            return "shutdown", {"ok": True}
        if msg_type == "observe":
            episode = tuple(transition_from_doc(t) for t in payload.get("episode", []))
            self.agent.observe(episode)
            return "observe", {"ok": True, "count": len(episode)}
        if msg_type == "plan_request":
            state = world_from_doc(payload["state"])
            goal = world_from_doc(payload["goal"])
            return "plan_response", plan_to_doc(self.agent.plan_for(state, goal))
        if msg_type == "predict_request":
            state = world_from_doc(payload["state"])
            invocation = invocation_from_doc(payload["invocation"])
            predicted = self.agent.predict(state, invocation)
            return "predict_response", {"state": world_to_doc(predicted)}
        if msg_type == "probe":
            try:
                return "probe_response", self._answer_probe(payload)
            except Exception as exc:
                # a probe the agent cannot answer is absent, not fatal
                return "probe_response", {"error": f"{type(exc).__name__}: {exc}"}
        return "error", {"reason": f"unknown message type {msg_type!r}"}

    def _answer_probe(self, payload: dict) -> dict:
        kind = payload.get("kind")
        if kind == "predict_effect":
            state = world_from_doc(payload["state"])
            invocation = invocation_from_doc(payload["invocation"])
            predicted = self.agent.predict(state, invocation)
            return {"changes": _state_changes(state, predicted)}
        world = self.agent.describe()
        if kind == "list_objects":
            return {"objects": [{"id": o.id, "model": o.model} for o in world.objects]}
        if kind == "get_properties":
            oid = payload.get("id")
            obj = world.object_map().get(oid)
            if obj is None:
                return {"error": f"unknown object {oid!r}"}
            model = world.model_map().get(obj.model)
            props = []
            for p in (model.properties if model else ()):
                doc = property_to_doc(p)
                doc["value"] = obj.values.get(p.name)
                props.append(doc)
            return {"id": obj.id, "model": obj.model, "properties": props}
        if kind == "list_actions":
            return {"actions": [action_to_doc(a) for a in world.actions]}
        if kind == "list_relationships":
            return {"relationships": [
                {"kind": r.kind, "subject": r.subject, "object": r.object}
                for r in world.relationships
            ]}
        return {"error": f"unknown probe kind {kind!r}"}


def serve_session(agent: Agent, instream, outstream) -> None:
    """Agent-side loop: read requests, write responses, until shutdown/EOF."""
    server = AgentServer(agent)
    while not server.closed:
        line = instream.readline()
        if not line:
            break
        if not line.strip():
            continue
        outstream.write(server.handle_line(line))
        outstream.flush()


def serve_tcp(agent: Agent, host: str, port: int, on_bound=None) -> int:
    """Serve one session over TCP; returns the bound port (0 picks a free one)."""
    with socket.create_server((host, port)) as server_socket:
        bound_port = server_socket.getsockname()[1]
        if on_bound is not None:
            on_bound(bound_port)
        conn, _ = server_socket.accept()
        with conn, conn.makefile("rb") as rf, conn.makefile("wb") as wf:
            serve_session(agent, rf, wf)
    return bound_port


# ---------------------------------------------------------------------------
# harness side


class LoopbackChannel:
    """In-process channel through the full encode/decode/dispatch path."""

    def __init__(self, server: AgentServer):
        self.server = server

    def request(self, line: bytes, timeout: float | None) -> bytes:
        return self.server.handle_line(line)

    def discard_next(self) -> None:
        pass  # loopback responses are synchronous

    def close(self) -> None:
        pass


class _StreamChannel:
    """Shared reader-thread machinery for pipe and socket transports."""

    def __init__(self, write_stream, read_stream):
        self._write = write_stream
        self._queue: queue.Queue = queue.Queue()
        self._discards = 0
        self._thread = threading.Thread(target=self._pump, args=(read_stream,), daemon=True)
        self._thread.start()

    def _pump(self, read_stream) -> None:
        try:
            for line in read_stream:
                self._queue.put(line)
        except (OSError, ValueError):
            pass
        self._queue.put(None)

    def request(self, line: bytes, timeout: float | None) -> bytes:
        try:
            self._write.write(line)
            self._write.flush()
        except (OSError, ValueError) as exc:
            raise ProtocolError(f"transport closed: {exc}") from exc
        try:
            # a timed-out request leaves its late response first in the queue
            while self._discards > 0:
                if self._queue.get(timeout=timeout) is None:
                    raise ProtocolError("transport closed")
                self._discards -= 1
            response = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError(f"no response within {timeout}s")
        if response is None:
            raise ProtocolError("transport closed")
        return response

    def discard_next(self) -> None:
        self._discards += 1

    def close(self) -> None:
        try:
            self._write.close()
        except OSError:
            pass


class ProcessChannel(_StreamChannel):
    """Channel to an external agent process over its standard streams."""

    def __init__(self, argv: list[str], cwd: str | None = None):
        self.proc = subprocess.Popen(
            argv, cwd=cwd, stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )
        super().__init__(self.proc.stdin, self.proc.stdout)

    def close(self) -> None:
        super().close()
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()

    @property
    def returncode(self) -> int | None:
        return self.proc.returncode


class TcpChannel(_StreamChannel):
    def __init__(self, host: str, port: int):
        self._socket = socket.create_connection((host, port))
        super().__init__(self._socket.makefile("wb"), self._socket.makefile("rb"))

    def close(self) -> None:
        super().close()
        try:
            self._socket.close()
        except OSError:
            pass


class Session:
    """Harness-side handle speaking the protocol; implements the same
    observe/plan/predict/describe surface as an in-process agent.

    Strictly request/response: one session serves one agent, sequentially.
    """

    def __init__(self, channel, name: str = "agent", session_id: str | None = None,
                 probe_plan: ProbePlan = ProbePlan(),
                 request_timeout: float | None = 60.0,
                 probe_timeout: float | None = 5.0):
        self.channel = channel
        self.name = name
        self.session_id = session_id or uuid.uuid4().hex
        self.probe_plan = probe_plan
        self.request_timeout = request_timeout
        self.probe_timeout = probe_timeout
        self.failed = False
        self.failure_reason: str | None = None
        self.closed = False
        self.log: list[tuple[str, bytes]] = []

    def _fail(self, reason: str) -> SessionFailure:
        self.failed = True
        self.failure_reason = reason
        return SessionFailure(f"session {self.name}: {reason}")

    def _request(self, msg_type: str, payload: dict, timeout: float | None) -> dict:
        if self.failed:
            raise SessionFailure(f"session {self.name}: already failed ({self.failure_reason})")
        if self.closed:
            raise self._fail("session closed")
        line = encode_message(msg_type, self.session_id, payload)
        self.log.append(("send", line))
        try:
            response = self.channel.request(line, timeout)
        except TimeoutError:
            raise
        except ProtocolError as exc:
            raise self._fail(str(exc))
        self.log.append(("recv", response))
        try:
            doc = decode_message(response)
        except ProtocolError as exc:
            raise self._fail(f"malformed response: {exc}")
        if doc["type"] != REQUEST_RESPONSE[msg_type]:
            reason = doc["payload"].get("reason") if doc["type"] == "error" else None
            raise self._fail(reason or f"expected {REQUEST_RESPONSE[msg_type]}, got {doc['type']!r}")
        return doc["payload"]

    def handshake(self) -> None:
        payload = self._request("hello", {"version": PROTOCOL_VERSION, "agent": self.name},
                                self.request_timeout)
        if payload.get("version") != PROTOCOL_VERSION or not payload.get("accepted"):
            raise self._fail(payload.get("reason", "unsupported version"))

    def observe(self, episode) -> None:
        docs = [transition_to_doc(t) for t in episode]
        self._request("observe", {"episode": docs}, self.request_timeout)

    def plan_for(self, state: WorldModel, goal: WorldModel) -> Plan:
        payload = self._request(
            "plan_request",
            {"state": world_to_doc(state), "goal": world_to_doc(goal)},
            self.request_timeout,
        )
        try:
            return plan_from_doc(payload)
        except (ProtocolError, KeyError, TypeError) as exc:
            raise self._fail(f"bad plan_response: {exc}")

    def predict(self, state: WorldModel, invocation: ActionInvocation) -> WorldModel:
        payload = self._request(
            "predict_request",
            {"state": world_to_doc(state), "invocation": invocation_to_doc(invocation)},
            self.request_timeout,
        )
        try:
            return world_from_doc(payload["state"])
        except Exception as exc:
            raise self._fail(f"bad predict_response: {exc}")

    def probe(self, kind: str, **args) -> dict | None:
        """One probe question; a timeout counts the probe absent (None)."""
        try:
            return self._request("probe", {"kind": kind, **args}, self.probe_timeout)
        except TimeoutError:
            self.channel.discard_next()
            return None

    def describe(self) -> WorldModel:
        return elicit_world_model(self, self.probe_plan)

    def shutdown(self) -> None:
        if self.closed or self.failed:
            return
        self._request("shutdown", {}, self.request_timeout)
        self.closed = True
        self.channel.close()


def loopback_session(agent: Agent, name: str = "loopback",
                     probe_plan: ProbePlan = ProbePlan()) -> Session:
    """Wrap an in-process agent behind the identical message path."""
    session = Session(LoopbackChannel(AgentServer(agent)), name=name,
                      session_id=f"loopback-{name}", probe_plan=probe_plan,
                      request_timeout=None, probe_timeout=None)
    session.handshake()
    return session


def connect_process(argv: list[str], name: str = "external",
                    probe_plan: ProbePlan = ProbePlan(),
                    request_timeout: float | None = 60.0,
                    probe_timeout: float | None = 5.0,
                    cwd: str | None = None) -> Session:
    """Spawn an external agent and handshake over its standard streams."""
    session = Session(ProcessChannel(argv, cwd=cwd), name=name, probe_plan=probe_plan,
                      request_timeout=request_timeout, probe_timeout=probe_timeout)
    session.handshake()
    return session


def connect_tcp(host: str, port: int, name: str = "remote",
                probe_plan: ProbePlan = ProbePlan(),
                request_timeout: float | None = 60.0,
                probe_timeout: float | None = 5.0) -> Session:
    session = Session(TcpChannel(host, port), name=name, probe_plan=probe_plan,
                      request_timeout=request_timeout, probe_timeout=probe_timeout)
    session.handshake()
    return session


# ---------------------------------------------------------------------------
# elicitation


def _complete_action(action, models: dict[str, ModelSchema]) -> bool:
    """True when every reference inside the action resolves against `models`."""
    slots = action.slot_map()
    if len(slots) != len(action.parameters):
        return False

    def resolves(slot_name: str, prop: str) -> bool:
        slot = slots.get(slot_name)
        if slot is None or slot.model not in models:
            return False
        return prop in models[slot.model].property_map()

    for slot in action.parameters:
        if slot.model not in models:
            return False
    for pre in action.preconditions:
        if not resolves(pre.slot, pre.prop):
            return False
        if pre.ref_slot is not None and not resolves(pre.ref_slot, pre.ref_prop or ""):
            return False
    for eff in action.effects:
        if not resolves(eff.slot, eff.prop):
            return False
        if eff.op == "copy" and not resolves(eff.source_slot or "", eff.source_prop or ""):
            return False
    for trig in action.triggers:
        if not resolves(trig.slot, trig.prop):
            return False
    return True


def elicit_world_model(agent: Agent | Session, probes: ProbePlan = ProbePlan()) -> WorldModel:
    """Reconstruct an agent's internal world-model from black-box probes.

    Probe order is deterministic: list_objects, then per-object properties
    (sorted by id), then actions, then relationships. Unanswered probes yield
    absent entries, and entries whose references never arrived are dropped, so
    a larger budget can only grow the elicited world.
    """
    session = agent if isinstance(agent, Session) else loopback_session(agent)
    remaining = probes.budget

    def ask(kind: str, **args) -> dict | None:
        nonlocal remaining
        if remaining <= 0:
            return None
        remaining -= 1
        answer = session.probe(kind, **args)
        if answer is None or "error" in answer:
            return None
        return answer

    listed = ask("list_objects")
    object_ids = []
    if listed is not None:
        object_ids = sorted(
            str(entry["id"]) for entry in listed.get("objects", []) if "id" in entry
        )

    models: dict[str, ModelSchema] = {}
    objects: list[ObjectInstance] = []
    for oid in object_ids:
        answer = ask("get_properties", id=oid)
        if answer is None:
            continue
        model_name = str(answer.get("model", ""))
        schemas = []
        values = {}
        for doc in answer.get("properties", []):
            schema = property_from_doc(doc, f"object {oid} property")
            schemas.append(schema)
            if doc.get("value") is not None:
                values[schema.name] = doc["value"]
        models.setdefault(model_name, ModelSchema(model_name, tuple(schemas)))
        objects.append(ObjectInstance(oid, model_name, values))

    actions = []
    answer = ask("list_actions")
    if answer is not None:
        for i, doc in enumerate(answer.get("actions", [])):
            action = action_from_doc(doc, f"actions[{i}]")
            if _complete_action(action, models):
                actions.append(action)

    relationships = []
    answer = ask("list_relationships")
    if answer is not None:
        known = set(models) | {o.id for o in objects}
        for doc in answer.get("relationships", []):
            rel = Relationship(str(doc.get("kind", "")), str(doc.get("subject", "")),
                               str(doc.get("object", "")))
            if rel.subject in known and rel.object in known:
                relationships.append(rel)

    world = canonical_world(WorldModel(
        tuple(models[name] for name in sorted(models)),
        tuple(actions),
        tuple(objects),
        tuple(relationships),
    ))
    violations = validate_world(world)
    if violations:
        raise ProtocolError(f"inconsistent elicitation answers: {violations}")
    return ensure_valid(world)
