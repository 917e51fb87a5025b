"""Command-line entry point tying the toolkit together.

Subcommands: ``simulate`` (one traced episode), ``solve-graph``, ``train``,
``bench``, ``intent-demo``, ``gen-htm``, ``serve``.  Exit codes: 0 on
success, 2 for configuration errors (bad flags, malformed files,
incompatible scenario), 3 when a compute budget is exceeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import List, Optional, Tuple

from .bench import generate_random_htm, results_to_csv, run_benchmark, summarize
from .env import AssemblyEnv
from .errors import BudgetExceededError, CobotplanError
from .htm import IDLE, Htm, chair_htm, load_htm, save_htm
from .intent import (
    Goal,
    GoalSet,
    filter_trace_csv,
    load_goals,
    load_trajectory,
    simulate_trajectory,
)
from .policies import (
    GraphPlanner,
    GreedyPolicy,
    QLearningPlanner,
    RandomPolicy,
    evaluate,
)
from .qlearn import TrainConfig, save_curve, train
from .scenario import ScenarioConfig, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3

POLICY_NAMES = ("graph", "rl", "greedy", "random")


def _random_spec(text: str) -> Tuple[int, int]:
    try:
        n_str, seed_str = text.split(",")
        return int(n_str), int(seed_str)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected N,SEED (e.g. 8,0), got {text!r}"
        ) from None


def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--htm", metavar="FILE", help="task model file")
    group.add_argument(
        "--builtin", choices=("chair",), help="built-in task model"
    )
    group.add_argument(
        "--random",
        type=_random_spec,
        metavar="N,SEED",
        help="generated task with N actions (N divisible by 4)",
    )
    p.add_argument("--scenario", metavar="FILE", help="scenario config file")
    p.add_argument(
        "--human",
        choices=("uniform", "first"),
        default="uniform",
        help="human choice model (default: uniform)",
    )


def _resolve_instance(args) -> Tuple[Htm, ScenarioConfig]:
    if args.htm:
        htm = load_htm(args.htm)
    elif args.random:
        htm = generate_random_htm(*args.random)
    else:
        htm = chair_htm()
    scenario = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    return htm, scenario


def _make_policy(name: str, args):
    if name == "greedy":
        return GreedyPolicy()
    if name == "random":
        return RandomPolicy(seed=args.seed)
    if name == "graph":
        return GraphPlanner(
            human_model=args.human,
            node_budget=args.node_budget,
            optimistic=getattr(args, "optimistic", False),
        )
    if name == "rl":
        return QLearningPlanner(episodes=args.episodes, seed=args.seed)
    raise CobotplanError(f"unknown policy {name!r}")


def _write_or_print(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


# -- simulate ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    htm, scenario = _resolve_instance(args)
    env = AssemblyEnv(htm, scenario, human_model=args.human)
    policy = _make_policy(args.policy, args)
    policy.fit(env)
    env.reset(seed=args.seed)

    lines: List[str] = []
    k = 0
    total = 0
    while not env.done:
        action = policy.predict(env.observable())
        env.assign_robot(action)
        while True:
            outcome = env.sample_next_event()
            env.apply_event(outcome)
            k += 1
            total += outcome.delta
            record = {
                "k": k,
                "event": outcome.kind.value,
                "dt": outcome.delta,
                "state": env.observable().to_dict(),
                "robot_action": action,
                "reward": -outcome.delta,
            }
            lines.append(json.dumps(record))
            if env.done or env.r_action == IDLE:
                break

    trace = "\n".join(lines) + "\n"
    summary = (
        f"makespan={total} events={k} changes={env.n_changes} "
        f"failures={env.n_failures}\n"
    )
    if args.out:
        _write_or_print(trace, args.out)
        sys.stdout.write(summary)
    else:
        sys.stdout.write(trace)
        sys.stderr.write(summary)
    return EXIT_OK


# -- solve-graph ---------------------------------------------------------------


def cmd_solve_graph(args) -> int:
    from .graph import build_graph, solve

    htm, scenario = _resolve_instance(args)
    graph = build_graph(
        htm,
        scenario,
        human_model=args.human,
        node_budget=args.node_budget,
        exact=args.exact,
    )
    policy = solve(graph, optimistic=args.optimistic)
    stats = graph.stats
    if args.out:
        policy.save(args.out)
    payload = {
        "nodes": stats.n_nodes,
        "edges": stats.n_edges,
        "build_seconds": round(stats.build_seconds, 3),
        "root_value": policy.root_value,
    }
    if args.format == "json":
        sys.stdout.write(json.dumps(payload) + "\n")
    else:
        for key, value in payload.items():
            sys.stdout.write(f"{key}: {value}\n")
    return EXIT_OK


# -- train ---------------------------------------------------------------------


def cmd_train(args) -> int:
    htm, scenario = _resolve_instance(args)
    env = AssemblyEnv(htm, scenario, human_model=args.human)
    cfg = TrainConfig(
        episodes=args.episodes,
        seed=args.seed,
        eval_interval=args.eval_interval,
        eval_episodes=args.eval_episodes,
    )
    table = train(env, cfg)
    if args.out:
        table.save(args.out)
    if args.curve:
        save_curve(table, args.curve)
    stats = evaluate(table, env, n_episodes=args.eval_episodes, seed=cfg.seed)
    sys.stdout.write(
        f"episodes={cfg.episodes} states={len(table.q)} eval={stats}\n"
    )
    return EXIT_OK


# -- bench ---------------------------------------------------------------------


def cmd_bench(args) -> int:
    htm, scenario = _resolve_instance(args)
    names = [n.strip() for n in args.policy.split(",") if n.strip()]
    for name in names:
        if name not in POLICY_NAMES:
            raise CobotplanError(
                f"unknown policy {name!r}; expected from {POLICY_NAMES}"
            )
    policies = {name: _make_policy(name, args) for name in names}
    results = run_benchmark(
        htm,
        scenario,
        policies,
        trials=args.trials,
        seed=args.seed,
        scenario_name=args.name,
        human_model=args.human,
        workers=args.workers,
    )
    csv_text = results_to_csv(results)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(csv_text)
    if args.format == "csv":
        sys.stdout.write(csv_text)
    elif args.format == "json":
        sys.stdout.write(json.dumps([dataclasses.asdict(r) for r in results]) + "\n")
    else:
        sys.stdout.write(summarize(results) + "\n")
    return EXIT_OK


# -- intent-demo -----------------------------------------------------------------


def _demo_goals() -> GoalSet:
    return GoalSet(
        (
            Goal(1, (0.0, 0.0)),
            Goal(2, (8.0, 0.0)),
            Goal(3, (4.0, 7.0)),
        ),
        rho=0.9,
    )


def cmd_intent_demo(args) -> int:
    goals = load_goals(args.goals) if args.goals else _demo_goals()
    if args.trajectory:
        track = load_trajectory(args.trajectory)
    else:
        import random as _random

        target = args.target if args.target is not None else goals.ids[0]
        centroid = tuple(
            sum(g.position[d] for g in goals.goals) / len(goals)
            for d in range(goals.dim)
        )
        track = simulate_trajectory(
            centroid,
            target,
            goals,
            speed=args.speed,
            noise_std=args.noise,
            switch_at=args.switch_at,
            switch_to=args.switch_to,
            rng=_random.Random(args.seed),
        )
    trace = filter_trace_csv(goals, track)
    _write_or_print(trace, args.out)
    return EXIT_OK


# -- gen-htm ---------------------------------------------------------------------


def cmd_gen_htm(args) -> int:
    htm = generate_random_htm(args.n, args.seed)
    if args.out:
        save_htm(htm, args.out)
    else:
        sys.stdout.write(json.dumps(htm.to_dict(), indent=2) + "\n")
    return EXIT_OK


# -- serve -----------------------------------------------------------------------


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app()
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cobotplan",
        description="Planning and simulation for human-robot collaborative assembly.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode and emit a JSONL trace")
    _add_instance_flags(p)
    p.add_argument("--policy", choices=POLICY_NAMES, default="greedy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=50_000,
                   help="training episodes when --policy rl")
    p.add_argument("--node-budget", type=int, default=200_000)
    p.add_argument("--out", metavar="FILE", help="trace file (default: stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve-graph", help="build and solve the decision graph")
    _add_instance_flags(p)
    p.add_argument("--node-budget", type=int, default=200_000)
    p.add_argument("--exact", action="store_true",
                   help="exact rational arithmetic for node values")
    p.add_argument("--optimistic", action="store_true",
                   help="best-case human instead of expected value")
    p.add_argument("--out", metavar="FILE", help="policy checkpoint file")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_solve_graph)

    p = sub.add_parser("train", help="train the tabular Q-learning planner")
    _add_instance_flags(p)
    p.add_argument("--episodes", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-interval", type=int, default=0,
                   help="episodes between curve evaluations (0: off)")
    p.add_argument("--eval-episodes", type=int, default=200)
    p.add_argument("--out", metavar="FILE", help="Q-table checkpoint file")
    p.add_argument("--curve", metavar="FILE", help="learning-curve CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="Monte-Carlo benchmark of policies")
    _add_instance_flags(p)
    p.add_argument("--policy", default="graph,rl,greedy,random",
                   help="comma-separated subset of graph,rl,greedy,random")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=50_000,
                   help="training episodes for the rl policy")
    p.add_argument("--node-budget", type=int, default=200_000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--name", default="scenario", help="scenario column label")
    p.add_argument("--out", metavar="FILE", help="per-trial CSV file")
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("intent-demo", help="run the goal filter over a trajectory")
    p.add_argument("--goals", metavar="FILE", help="goal-set file (default: demo set)")
    p.add_argument("--trajectory", metavar="FILE",
                   help="trajectory CSV (default: synthetic reach)")
    p.add_argument("--target", type=int, help="synthetic reach target goal id")
    p.add_argument("--speed", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--switch-at", type=int)
    p.add_argument("--switch-to", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="FILE", help="trace CSV (default: stdout)")
    p.set_defaults(func=cmd_intent_demo)

    p = sub.add_parser("gen-htm", help="generate a random task model")
    p.add_argument("--n", type=int, required=True, help="action count (divisible by 4)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="FILE", help="task model file (default: stdout)")
    p.set_defaults(func=cmd_gen_htm)

    p = sub.add_parser("serve", help="start the interactive sandbox service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BUDGET
    except (CobotplanError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
