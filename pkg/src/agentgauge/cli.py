"""Command-line entry points: run, validate, score, serve-agent."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agents import BfsPlannerAgent, CapacityBudget, GreedyPlannerAgent, LearningAgent, RandomAgent
from .harness import (
    ConfigError,
    load_config,
    run_experiment,
    score_offline,
    validate_world_file,
    parse_params,
)
from .protocol import serve_session, serve_tcp


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config, seed=args.seed, out_dir=args.out, workers=args.workers)
        report = run_experiment(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for agent in report.agents:
        line = f"{agent.name}: {agent.status}"
        if agent.components is not None:
            line += f" intelligence={agent.intelligence:.6g} skill={agent.skill:.6g}"
        print(line)
    print(f"report written to {Path(config.out_dir) / 'report.json'}")
    return 1 if report.any_failed else 0


def _cmd_validate(args) -> int:
    diagnostics = validate_world_file(args.world)
    for line in diagnostics:
        print(line)
    if not diagnostics:
        print(f"{args.world}: valid")
    return 1 if diagnostics else 0


def _cmd_score(args) -> int:
    try:
        report_doc = json.loads(Path(args.components).read_text("utf-8"))
        params_doc = json.loads(Path(args.params).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    scores = score_offline(report_doc, parse_params(params_doc))
    print(json.dumps(scores, sort_keys=True, indent=2))
    return 0


def _cmd_serve_agent(args) -> int:
    if args.kind == "random":
        agent = RandomAgent(args.seed, args.horizon)
    elif args.kind == "bfs":
        agent = BfsPlannerAgent(args.horizon)
    elif args.kind == "greedy":
        agent = GreedyPlannerAgent(args.horizon)
    elif args.kind == "learner":
        agent = LearningAgent(CapacityBudget(args.budget), args.seed, args.horizon)
    else:
        print(f"error: cannot serve agent kind {args.kind!r}", file=sys.stderr)
        return 2
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        serve_tcp(agent, host or "127.0.0.1", int(port))
    else:
        serve_session(agent, sys.stdin.buffer, sys.stdout.buffer)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agentgauge",
        description="Black-box agent evaluation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True, help="experiment config (JSON)")
    run.add_argument("--out", default=None, help="output directory for reports")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--workers", type=int, default=None, help="parallel agent evaluations")
    run.set_defaults(func=_cmd_run)

    validate = sub.add_parser("validate", help="check a world file's invariants")
    validate.add_argument("world", help="world file to validate")
    validate.set_defaults(func=_cmd_validate)

    score = sub.add_parser("score", help="re-weight stored components without re-running")
    score.add_argument("--components", required=True, help="report.json (or fragment)")
    score.add_argument("--params", required=True, help="metric params file (JSON)")
    score.set_defaults(func=_cmd_score)

    serve = sub.add_parser("serve-agent", help="expose a reference agent over the protocol")
    serve.add_argument("--kind", required=True, choices=("random", "bfs", "greedy", "learner"))
    serve.add_argument("--tcp", default=None, help="host:port to listen on (default: stdio)")
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--horizon", type=int, default=3)
    serve.add_argument("--budget", type=int, default=64)
    serve.set_defaults(func=_cmd_serve_agent)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
