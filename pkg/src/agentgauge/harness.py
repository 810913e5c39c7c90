"""Experiment runner: loads worlds and configs, evaluates agents, writes reports.

Reports are byte-deterministic for a given config and seed: all randomness is
seed-derived, floats serialize at 12 significant digits, agents are reduced in
config order, and wall-clock never enters a report. Every report states the
omniscient-observer assumption under which the scores are computed.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import json
import os
import random
from dataclasses import dataclass, field
from pathlib import Path

from .agents import (
    Agent,
    BfsPlannerAgent,
    CapacityBudget,
    GreedyPlannerAgent,
    LearningAgent,
    LookupAgent,
    RandomAgent,
)
from .metrics import (
    LearningScenario,
    MetricParams,
    ScoreComponents,
    SkillTask,
    causal_reasoning_score,
    intelligence_score,
    knowledge_score,
    planning_score,
    skill_score,
)
from .protocol import (
    AgentServer,
    LoopbackChannel,
    ProbePlan,
    Session,
    SessionFailure,
    connect_process,
    connect_tcp,
)
from .simulator import (
    ActionInvocation,
    GroundTruthWorld,
    Transition,
    apply_action,
    derive_seed,
    enumerate_invocations,
    random_episode,
)
from .worldmodel import (
    NormWeights,
    Value,
    WorldModel,
    WorldParseError,
    WorldValidationError,
    ensure_valid,
    load_world,
    with_object_values,
    world_digest,
)

REPORT_FORMAT_VERSION = 1
OBSERVER_ASSUMPTION = (
    "omniscient observer: scores are relative to an evaluator with perfect "
    "knowledge of the ground-truth world"
)

AGENT_KINDS = ("random", "lookup", "bfs", "greedy", "learner", "external")


class ConfigError(ValueError):
    """The experiment configuration is unusable."""


@dataclass(frozen=True)
class AgentSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)
    command: tuple[str, ...] | None = None
    tcp: str | None = None
    transport: str = "direct"  # or "loopback": in-process agent behind the wire path


@dataclass(frozen=True)
class ScenarioSpec:
    """What each agent is asked to do, and with how much data."""

    goal_overrides: dict[str, dict[str, Value]] = field(default_factory=dict)
    horizon: int = 3
    episodes: int = 20
    episode_length: int = 5
    probe_budget: int = 1024
    causal_probes: int = 8
    skill_trials: int = 20
    top_k: int = 1
    planning_mode: str = "internal"


@dataclass(frozen=True)
class ExperimentConfig:
    world_path: Path
    seed: int
    agents: tuple[AgentSpec, ...]
    params: MetricParams = field(default_factory=MetricParams)
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    out_dir: Path = Path("out")
    workers: int = 0  # 0 means logical CPU count
    max_trigger_depth: int = 100


@dataclass(frozen=True)
class AgentResult:
    name: str
    kind: str
    status: str  # "ok" or "failed: <reason>"
    components: ScoreComponents | None = None
    intelligence: float | None = None
    skill: float | None = None
    causal: int | None = None
    planning_internal: tuple[float, int] | None = None
    planning_grounded: tuple[float, int] | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvaluationReport:
    config_digest: str
    seed: int
    world_digest: str
    params: MetricParams
    agents: tuple[AgentResult, ...]

    @property
    def any_failed(self) -> bool:
        return any(a.status != "ok" for a in self.agents)


# ---------------------------------------------------------------------------
# configuration


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return doc[key]


def parse_params(doc: dict) -> MetricParams:
    weights = doc.get("norm_weights", {})
    return MetricParams(
        alpha=float(doc.get("alpha", 1.0)),
        beta=float(doc.get("beta", 1.0)),
        gamma=float(doc.get("gamma", 1.0)),
        delta=float(doc.get("delta", 1.0)),
        epsilon=float(doc.get("epsilon", 1.0)),
        zeta=float(doc.get("zeta", 1.0)),
        norm_weights=NormWeights(
            m=float(weights.get("m", 1.0)),
            a=float(weights.get("a", 1.0)),
            o=float(weights.get("o", 1.0)),
            r=float(weights.get("r", 1.0)),
        ),
    )


def _parse_agent(doc: dict, index: int) -> AgentSpec:
    where = f"agents[{index}]"
    kind = _require(doc, "kind", where)
    if kind not in AGENT_KINDS:
        raise ConfigError(f"{where}: unknown agent kind {kind!r}")
    command = doc.get("command")
    if command is not None:
        command = tuple(str(part) for part in command)
    spec = AgentSpec(
        name=str(doc.get("name", f"{kind}-{index}")),
        kind=kind,
        params=dict(doc.get("params", {})),
        command=command,
        tcp=doc.get("tcp"),
        transport=str(doc.get("transport", "direct")),
    )
    if spec.kind == "external" and spec.command is None and spec.tcp is None:
        raise ConfigError(f"{where}: external agents need a command or a tcp endpoint")
    if spec.transport not in ("direct", "loopback"):
        raise ConfigError(f"{where}: unknown transport {spec.transport!r}")
    return spec


def parse_config(doc: dict, base_dir: Path) -> ExperimentConfig:
    if "seed" not in doc:
        raise ConfigError("config: a seed is mandatory")
    scenario_doc = doc.get("scenario", {})
    scenario = ScenarioSpec(
        goal_overrides=scenario_doc.get("goal", {}),
        horizon=int(scenario_doc.get("horizon", 3)),
        episodes=int(scenario_doc.get("episodes", 20)),
        episode_length=int(scenario_doc.get("episode_length", 5)),
        probe_budget=int(scenario_doc.get("probe_budget", 1024)),
        causal_probes=int(scenario_doc.get("causal_probes", 8)),
        skill_trials=int(scenario_doc.get("skill_trials", 20)),
        top_k=int(scenario_doc.get("top_k", 1)),
        planning_mode=str(scenario_doc.get("planning_mode", "internal")),
    )
    if scenario.horizon < 1:
        raise ConfigError("scenario: horizon must be >= 1")
    if scenario.planning_mode not in ("internal", "grounded"):
        raise ConfigError(f"scenario: unknown planning_mode {scenario.planning_mode!r}")
    agents = tuple(_parse_agent(a, i) for i, a in enumerate(_require(doc, "agents", "config")))
    names = [a.name for a in agents]
    if len(set(names)) != len(names):
        raise ConfigError("config: agent names must be unique")
    world_path = (base_dir / str(_require(doc, "world", "config"))).resolve()
    if not world_path.exists():
        raise ConfigError(f"config: world file not found: {world_path}")
    return ExperimentConfig(
        world_path=world_path,
        seed=int(doc["seed"]),
        agents=agents,
        params=parse_params(doc.get("params", {})),
        scenario=scenario,
        out_dir=(base_dir / str(doc.get("out_dir", "out"))).resolve(),
        workers=int(doc.get("workers", 0)),
        max_trigger_depth=int(doc.get("max_trigger_depth", 100)),
    )


def load_config(path: str | Path, seed: int | None = None,
                out_dir: str | Path | None = None, workers: int | None = None) -> ExperimentConfig:
    """Read a JSON config; CLI overrides replace seed/out/workers."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}: {exc.msg}") from exc
    if seed is not None:
        doc["seed"] = seed
    config = parse_config(doc, path.parent)
    if out_dir is not None:
        config = ExperimentConfig(**{**config.__dict__, "out_dir": Path(out_dir).resolve()})
    if workers is not None:
        config = ExperimentConfig(**{**config.__dict__, "workers": workers})
    return config


def config_digest(config: ExperimentConfig, world_dig: str) -> str:
    """Digest of everything that can influence scores (not out_dir/workers)."""
    doc = {
        "world_digest": world_dig,
        "seed": config.seed,
        "max_trigger_depth": config.max_trigger_depth,
        "params": _params_doc(config.params),
        "scenario": _scenario_doc(config.scenario),
        "agents": [
            {"name": a.name, "kind": a.kind, "params": a.params,
             "command": list(a.command) if a.command else None,
             "tcp": a.tcp, "transport": a.transport}
            for a in config.agents
        ],
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# scenario materialization


@dataclass(frozen=True)
class _Materialized:
    truth: GroundTruthWorld
    goal: WorldModel
    batch_episodes: tuple[tuple[Transition, ...], ...]
    causal_probes: tuple[tuple[WorldModel, ActionInvocation], ...]
    task: SkillTask
    scenario: LearningScenario


def _materialize(config: ExperimentConfig, world: WorldModel) -> _Materialized:
    truth = GroundTruthWorld(world, config.seed, config.max_trigger_depth)
    try:
        goal = ensure_valid(with_object_values(world, config.scenario.goal_overrides))
    except (KeyError, WorldValidationError) as exc:
        raise ConfigError(f"scenario goal overrides are invalid: {exc}") from exc

    rng = random.Random(derive_seed(config.seed, "episodes"))
    batch = tuple(
        random_episode(truth, rng, config.scenario.episode_length)
        for _ in range(config.scenario.episodes)
    )

    # round-robin over a seeded shuffle so every action gets probed early
    probe_rng = random.Random(derive_seed(config.seed, "causal-probes"))
    probes: list[tuple[WorldModel, ActionInvocation]] = []
    invocations = enumerate_invocations(world)
    order = probe_rng.sample(invocations, len(invocations)) if invocations else []
    state = world
    for i in range(config.scenario.causal_probes):
        if not order:
            break
        invocation = order[i % len(order)]
        probes.append((state, invocation))
        state = apply_action(state, invocation, truth.max_trigger_depth).after

    skill_rng = random.Random(derive_seed(config.seed, "skill"))
    inputs: list[WorldModel] = []
    state = world
    for _ in range(config.scenario.skill_trials):
        inputs.append(state)
        if invocations:
            invocation = invocations[skill_rng.randrange(len(invocations))]
            state = apply_action(state, invocation, truth.max_trigger_depth).after
    task = SkillTask(truth, tuple(inputs), goal, config.params.norm_weights)

    scenario = LearningScenario(truth, goal, config.params, mode=config.scenario.planning_mode)
    return _Materialized(truth, goal, batch, tuple(probes), task, scenario)


# ---------------------------------------------------------------------------
# agent construction and evaluation


def build_agent(spec: AgentSpec, config: ExperimentConfig, parts: _Materialized) -> Agent | Session:
    seed = derive_seed(config.seed, "agent", spec.name)
    horizon = int(spec.params.get("horizon", config.scenario.horizon))
    weights = config.params.norm_weights
    probe_plan = ProbePlan(config.scenario.probe_budget)
    if spec.kind == "external":
        timeout = float(spec.params.get("probe_timeout", 5.0))
        if spec.command is not None:
            return connect_process(list(spec.command), name=spec.name,
                                   probe_plan=probe_plan, probe_timeout=timeout)
        host, _, port = str(spec.tcp).rpartition(":")
        return connect_tcp(host or "127.0.0.1", int(port), name=spec.name,
                           probe_plan=probe_plan, probe_timeout=timeout)

    agent: Agent
    if spec.kind == "random":
        agent = RandomAgent(seed, horizon)
    elif spec.kind == "lookup":
        agent = LookupAgent(parts.task)
    elif spec.kind == "bfs":
        agent = BfsPlannerAgent(horizon, weights, config.max_trigger_depth)
    elif spec.kind == "greedy":
        agent = GreedyPlannerAgent(horizon, weights, config.max_trigger_depth)
    elif spec.kind == "learner":
        budget = CapacityBudget(int(spec.params.get("budget", 64)))
        agent = LearningAgent(budget, seed, horizon, weights)
    else:  # unreachable after config validation
        raise ConfigError(f"unknown agent kind {spec.kind!r}")

    if spec.transport == "loopback":
        session = Session(LoopbackChannel(AgentServer(agent)), name=spec.name,
                          session_id=f"s{derive_seed(config.seed, 'session', spec.name):016x}",
                          probe_plan=probe_plan, request_timeout=None, probe_timeout=None)
        session.handshake()
        return session
    return agent


def evaluate_agent(spec: AgentSpec, config: ExperimentConfig, parts: _Materialized) -> AgentResult:
    """All five phases for one agent; failures are isolated to this result."""
    session: Session | None = None
    try:
        agent = build_agent(spec, config, parts)
        if isinstance(agent, Session):
            session = agent

        elicited = agent.describe()
        knowledge = knowledge_score(elicited, parts.truth, config.params.norm_weights)

        plan = agent.plan_for(parts.truth.world, parts.goal)
        internal = planning_score(plan, elicited, parts.goal, config.params,
                                  mode="internal", truth=parts.truth)
        grounded = planning_score(plan, elicited, parts.goal, config.params,
                                  mode="grounded", truth=parts.truth)

        skill = skill_score(agent, parts.task, config.scenario.top_k)
        causal = causal_reasoning_score(agent, parts.causal_probes, parts.truth)

        headline = internal if config.scenario.planning_mode == "internal" else grounded
        before = (knowledge, headline.quality, headline.cost)
        for episode in parts.batch_episodes:
            agent.observe(episode)
        post_elicited = agent.describe()
        post_knowledge = knowledge_score(post_elicited, parts.truth, config.params.norm_weights)
        post_plan = agent.plan_for(parts.truth.world, parts.goal)
        post_score = planning_score(post_plan, post_elicited, parts.goal, config.params,
                                    mode=config.scenario.planning_mode, truth=parts.truth)
        n = max(len(parts.batch_episodes), 1)
        d_knowledge = (post_knowledge - before[0]) / n
        d_planning = (post_score.quality - before[1]) / n
        d_cost = (post_score.cost - before[2]) / n

        components = ScoreComponents(
            knowledge=knowledge,
            plan_quality=headline.quality,
            plan_cost=headline.cost,
            d_knowledge=d_knowledge,
            d_planning=d_planning,
            d_cost=d_cost,
        )
        result = AgentResult(
            name=spec.name,
            kind=spec.kind,
            status="ok",
            components=components,
            intelligence=intelligence_score(components, config.params),
            skill=skill,
            causal=causal,
            planning_internal=(internal.quality, internal.cost),
            planning_grounded=(grounded.quality, grounded.cost),
            diagnostics={
                "plan_length": len(plan.steps),
                "post_knowledge": post_knowledge,
                "post_plan_quality": post_score.quality,
                "post_plan_cost": post_score.cost,
                "plan_diverged": internal.diverged or grounded.diverged,
            },
        )
        return result
    except (SessionFailure, WorldValidationError, WorldParseError) as exc:
        return AgentResult(name=spec.name, kind=spec.kind, status=f"failed: {exc}")
    except Exception as exc:  # isolation: one broken agent never sinks the run
        return AgentResult(name=spec.name, kind=spec.kind,
                           status=f"failed: {type(exc).__name__}: {exc}")
    finally:
        if session is not None:
            try:
                session.shutdown()
            except SessionFailure:
                pass


def run_experiment(config: ExperimentConfig) -> EvaluationReport:
    """Evaluate every configured agent and write report.json / report.csv."""
    raw = Path(config.world_path).read_bytes()
    world = load_world(raw)
    parts = _materialize(config, world)
    world_dig = world_digest(world)

    workers = config.workers or os.cpu_count() or 1
    results: list[AgentResult]
    if workers == 1 or len(config.agents) <= 1:
        results = [evaluate_agent(spec, config, parts) for spec in config.agents]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(evaluate_agent, spec, config, parts) for spec in config.agents]
            results = [f.result() for f in futures]  # deterministic config order

    report = EvaluationReport(
        config_digest=config_digest(config, world_dig),
        seed=config.seed,
        world_digest=world_dig,
        params=config.params,
        agents=tuple(results),
    )
    write_report(report, config.out_dir)
    return report


# ---------------------------------------------------------------------------
# report serialization (fixed precision, deterministic bytes)


def _fixed(x: float) -> float:
    return float(f"{x:.12g}")


def _params_doc(p: MetricParams) -> dict:
    return {
        "alpha": _fixed(p.alpha), "beta": _fixed(p.beta), "gamma": _fixed(p.gamma),
        "delta": _fixed(p.delta), "epsilon": _fixed(p.epsilon), "zeta": _fixed(p.zeta),
        "norm_weights": {"m": _fixed(p.norm_weights.m), "a": _fixed(p.norm_weights.a),
                         "o": _fixed(p.norm_weights.o), "r": _fixed(p.norm_weights.r)},
    }


def _scenario_doc(s: ScenarioSpec) -> dict:
    return {
        "goal": s.goal_overrides,
        "horizon": s.horizon,
        "episodes": s.episodes,
        "episode_length": s.episode_length,
        "probe_budget": s.probe_budget,
        "causal_probes": s.causal_probes,
        "skill_trials": s.skill_trials,
        "top_k": s.top_k,
        "planning_mode": s.planning_mode,
    }


def _components_doc(c: ScoreComponents) -> dict:
    return {
        "knowledge": _fixed(c.knowledge),
        "plan_quality": _fixed(c.plan_quality),
        "plan_cost": c.plan_cost,
        "d_knowledge": _fixed(c.d_knowledge),
        "d_planning": _fixed(c.d_planning),
        "d_cost": _fixed(c.d_cost),
    }


def _agent_doc(a: AgentResult) -> dict:
    doc: dict = {"name": a.name, "kind": a.kind, "status": a.status}
    if a.components is not None:
        doc["components"] = _components_doc(a.components)
        doc["intelligence"] = _fixed(a.intelligence)
        doc["skill"] = _fixed(a.skill)
        doc["causal"] = a.causal
        doc["planning"] = {
            "internal": {"quality": _fixed(a.planning_internal[0]), "cost": a.planning_internal[1]},
            "grounded": {"quality": _fixed(a.planning_grounded[0]), "cost": a.planning_grounded[1]},
        }
        diagnostics = dict(a.diagnostics)
        for key, value in diagnostics.items():
            if isinstance(value, float):
                diagnostics[key] = _fixed(value)
        doc["diagnostics"] = diagnostics
    return doc


def report_to_doc(report: EvaluationReport) -> dict:
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "observer_assumption": OBSERVER_ASSUMPTION,
        "config_digest": report.config_digest,
        "seed": report.seed,
        "world_digest": report.world_digest,
        "params": _params_doc(report.params),
        "agents": [_agent_doc(a) for a in report.agents],
    }


CSV_COLUMNS = ("name", "kind", "status", "knowledge", "plan_quality", "plan_cost",
               "d_knowledge", "d_planning", "d_cost", "intelligence", "skill", "causal")


def report_to_csv(report: EvaluationReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for a in report.agents:
        if a.components is None:
            writer.writerow([a.name, a.kind, a.status] + [""] * 9)
            continue
        c = a.components
        writer.writerow([
            a.name, a.kind, a.status,
            f"{c.knowledge:.12g}", f"{c.plan_quality:.12g}", c.plan_cost,
            f"{c.d_knowledge:.12g}", f"{c.d_planning:.12g}", f"{c.d_cost:.12g}",
            f"{a.intelligence:.12g}", f"{a.skill:.12g}", a.causal,
        ])
    return buffer.getvalue()


def write_report(report: EvaluationReport, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    csv_path = out / "report.csv"
    json_path.write_bytes(
        (json.dumps(report_to_doc(report), sort_keys=True, indent=2) + "\n").encode("utf-8")
    )
    csv_path.write_text(report_to_csv(report), "utf-8")
    return json_path, csv_path


# ---------------------------------------------------------------------------
# offline operations


def validate_world_file(path: str | Path) -> list[str]:
    """Parse and validate a world file, returning all diagnostics."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        return [f"cannot read {path}: {exc}"]
    try:
        load_world(raw)
    except WorldParseError as exc:
        return [f"parse error: {exc}"]
    except WorldValidationError as exc:
        return list(exc.violations)
    return []


def score_offline(report_doc: dict, params: MetricParams) -> dict[str, float]:
    """Recompute the weighted score from stored components, without re-running.

    Accepts a full report document (or any fragment with an `agents` list).
    """
    scores: dict[str, float] = {}
    for agent in report_doc.get("agents", []):
        components = agent.get("components")
        if components is None:
            continue
        c = ScoreComponents(
            knowledge=float(components["knowledge"]),
            plan_quality=float(components["plan_quality"]),
            plan_cost=int(components["plan_cost"]),
            d_knowledge=float(components["d_knowledge"]),
            d_planning=float(components["d_planning"]),
            d_cost=float(components["d_cost"]),
        )
        scores[agent["name"]] = _fixed(intelligence_score(c, params))
    return scores
