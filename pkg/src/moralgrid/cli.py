"""Command-line interface: ``moralgrid <command> [options]``.

Commands print JSON on stdout (``render`` prints the ASCII frame). Exit
codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .agents import (
    RandomPolicy,
    ScriptedPolicy,
    SolverResourceError,
    TabularPolicy,
    TrainConfig,
    exact_solve,
    q_learn,
)
from .env import MoralityEnv, rollout
from .evaluation import (
    DEFAULT_EPISODES,
    TraceFormatError,
    evaluate,
    read_trace,
    score_trace,
    write_report,
    write_summary_csv,
    write_trace,
)
from .morality import DEFAULT_BETA, MoralityError
from .scenarios import (
    ConfigError,
    builtin_catalogue,
    chain_presets,
    load_chain,
    resolve_scenario,
    scenario_to_dict,
)
from .world import ActionKind, observation_length, render_ascii, reset, step

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
DEFAULT_CHAIN = "Utility"

log = logging.getLogger("moralgrid")


class ScriptError(ValueError):
    pass


def parse_script(text: str) -> list[ActionKind]:
    """One action name per line; blank lines and ``#`` comments are skipped."""
    actions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for token in line.replace(",", " ").split():
            try:
                actions.append(ActionKind[token.upper()])
            except KeyError:
                raise ScriptError(f"line {lineno}: unknown action {token!r}") from None
    return actions


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _scenario(args):
    return resolve_scenario(args.scenario, args.variant)


def _chain(args, scenario):
    chain, beta = load_chain(args.chain or DEFAULT_CHAIN, scenario)
    if args.beta is not None:
        beta = args.beta
    return chain, beta


def _policy(source: str, scenario, chain, beta, seed: int):
    kind, _, arg = source.partition(":")
    if kind == "random":
        return RandomPolicy(seed)
    if kind == "scripted":
        return ScriptedPolicy(parse_script(Path(arg).read_text()) if arg else [], name=f"scripted:{arg}")
    if kind == "ref":
        return ScriptedPolicy(scenario.reference_policy(arg), name=arg)
    if kind == "table":
        pol = TabularPolicy.load(arg)
        pol.name = f"table:{Path(arg).name}"
        return pol
    if kind == "solve":
        pol = exact_solve(scenario, chain, beta=beta).policy
        pol.name = "exact_solve"
        return pol
    raise ConfigError(f"unknown policy source {source!r}; use random, scripted:FILE, ref:NAME, table:FILE or solve",
                      "policy")


def cmd_list(args) -> int:
    _emit({"scenarios": builtin_catalogue(), "chains": chain_presets()})
    return EXIT_OK


def cmd_describe(args) -> int:
    sc = _scenario(args)
    doc = {
        "scenario": scenario_to_dict(sc),
        "totals": sc.totals(),
        "observation_length": observation_length(sc),
        "reference_policies": [name for name, _ in sc.reference_policies],
    }
    if args.chain:
        chain, _ = _chain(args, sc)
        doc["chain"] = [
            {"id": n.id, "force": n.force, "category": n.category, "range": n.utility_range}
            for n in chain.norms
        ]
    _emit(doc)
    return EXIT_OK


def cmd_play(args) -> int:
    sc = _scenario(args)
    chain, beta = _chain(args, sc)
    actions = parse_script(Path(args.script).read_text()) if args.script else []
    env = MoralityEnv(sc, chain, beta, normalize_cost=args.normalize_cost)
    policy = ScriptedPolicy(actions, name="play")
    trace = rollout(env, policy, args.seed)
    if args.render:
        # replay for frames so the rollout itself stays untouched
        world, _ = reset(sc, args.seed)
        print(render_ascii(world) + "\n", file=sys.stderr)
        for rec in trace.records:
            step(world, ActionKind[rec.action], with_observation=False)
            print(f"t={rec.t} {rec.action}\n{render_ascii(world)}\n", file=sys.stderr)
    if args.out:
        write_trace(trace, args.out)
    _emit({
        "scenario": sc.name,
        "steps": len(trace.records),
        "total_reward": trace.total_reward,
        "total_cost": trace.total_cost,
        "harmed": trace.harm_totals(),
        "adherence": trace.adherence,
        "terminated": trace.terminated,
        "truncated": trace.truncated,
        "trace": args.out,
    })
    return EXIT_OK


def cmd_train(args) -> int:
    sc = _scenario(args)
    chain, beta = _chain(args, sc)
    cfg = TrainConfig(total_steps=args.steps, reward_mode=args.reward_mode, cost_weight=args.cost_weight,
                      normalize_cost=args.normalize_cost, beta=beta, seed=args.seed)
    result = q_learn(sc, chain, cfg)
    if args.out:
        result.policy.save(args.out)
    rep = evaluate(sc, chain, result.policy, episodes=1, beta=beta, base_seed=args.seed)
    _emit({"scenario": sc.name, "episodes_trained": result.episodes, "table_size": len(result.policy.table),
           "greedy_metric": rep.metric, "greedy_return": rep.avg_return, "table": args.out})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    sc = _scenario(args)
    chain, beta = _chain(args, sc)
    subset = set(args.subset.split(",")) if args.subset else None
    reports = []
    for source in args.policy:
        pol = _policy(source, sc, chain, beta, args.seed)
        reports.append(evaluate(sc, chain, pol, episodes=args.episodes, subset=subset, beta=beta,
                                base_seed=args.seed, normalize_cost=args.normalize_cost))
    if args.out:
        if len(reports) == 1:
            write_report(reports[0], args.out)
        else:
            Path(args.out).write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
    if args.csv:
        write_summary_csv(reports, args.csv)
    docs = [r.to_dict() for r in reports]
    for d in docs:
        d.pop("episode_costs")
        d["provenance"].pop("seeds")
    _emit(docs[0] if len(docs) == 1 else docs)
    return EXIT_OK


def cmd_solve(args) -> int:
    sc = _scenario(args)
    chain, beta = _chain(args, sc)
    res = exact_solve(sc, chain, horizon=args.horizon, beta=beta, max_states=args.max_states)
    if args.out:
        res.policy.save(args.out)
    _emit({
        "scenario": sc.name,
        "chain": chain.name,
        "plan": [a.name for a in res.plan],
        "per_norm_adherence": res.per_norm_adherence,
        "per_norm_m": res.per_norm_m,
        "metric": res.metric,
        "return": res.expected_return,
        "states_explored": res.states_explored,
        "table": args.out,
    })
    return EXIT_OK


def cmd_render(args) -> int:
    sc = _scenario(args)
    world, _ = reset(sc, args.seed)
    if args.script:
        for a in parse_script(Path(args.script).read_text()):
            if world.episode_over:
                break
            step(world, a, with_observation=False)
    print(render_ascii(world))
    return EXIT_OK


def cmd_score(args) -> int:
    trace = read_trace(args.trace)
    chain = beta = None
    if args.chain:
        chain, beta = load_chain(args.chain)
    if args.beta is not None:
        beta = args.beta
    _emit(score_trace(trace, chain, beta, normalize_cost=args.normalize_cost))
    return EXIT_OK


def cmd_serve(args) -> int:
    from .server import serve_stdio, serve_tcp

    kwargs = dict(scenario=args.scenario, chain=args.chain or DEFAULT_CHAIN, variant=args.variant, beta=args.beta,
                  normalize_cost=args.normalize_cost)
    target = args.serve
    if target == "stdio":
        serve_stdio(**kwargs)
    elif target.startswith("tcp:"):
        try:
            port = int(target[4:])
        except ValueError:
            raise ConfigError(f"bad port in {target!r}", "serve") from None
        serve_tcp(port, **kwargs)
    else:
        raise ConfigError(f"--serve expects tcp:PORT or stdio, got {target!r}", "serve")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="SwitchStandard", help="catalogue name or scenario JSON path")
    common.add_argument("--variant", help="variant JSON file or inline JSON")
    common.add_argument("--chain", help=f"preset name, chain JSON file, or inline JSON (default {DEFAULT_CHAIN})")
    common.add_argument("--beta", type=float, help=f"weight resolution (default {float(DEFAULT_BETA)})")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--normalize-cost", action="store_true", help="divide step costs by the weight sum")
    common.add_argument("--out", help="output file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="moralgrid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("list", parents=[common], help="list built-in scenarios and chain presets").set_defaults(
        func=cmd_list)
    sub.add_parser("describe", parents=[common], help="show a scenario's configuration").set_defaults(
        func=cmd_describe)

    sp = sub.add_parser("play", parents=[common], help="replay an action script and write a JSONL trace")
    sp.add_argument("--script", help="file with one action per line")
    sp.add_argument("--render", action="store_true", help="print ASCII frames to stderr")
    sp.set_defaults(func=cmd_play)

    sp = sub.add_parser("train", parents=[common], help="tabular Q-learning")
    sp.add_argument("--steps", type=int, default=20_000)
    sp.add_argument("--reward-mode", choices=["env_only", "shaped"], default="env_only")
    sp.add_argument("--cost-weight", type=float, default=1.0, help="lambda for the shaped reward")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", parents=[common], help="Monte Carlo morality metric of a policy")
    sp.add_argument("--policy", action="append",
                    help="random | scripted:FILE | ref:NAME | table:FILE | solve (repeatable)")
    sp.add_argument("--episodes", type=int, default=DEFAULT_EPISODES)
    sp.add_argument("--subset", help="comma-separated norm ids to score")
    sp.add_argument("--csv", help="also write a summary CSV")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("solve", parents=[common], help="exact lexicographic solver")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--max-states", type=int, default=2_000_000)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("render", parents=[common], help="print the ASCII frame after an optional script")
    sp.add_argument("--script")
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("score", parents=[common], help="rescore a JSONL trace without the engine")
    sp.add_argument("trace")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("serve", parents=[common], help="JSON-lines environment server")
    sp.add_argument("--serve", default="stdio", help="tcp:PORT or stdio")
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "policy", "x") is None:
        args.policy = ["random"]
    try:
        return args.func(args)
    except (ConfigError, ScriptError, TraceFormatError, MoralityError, FileNotFoundError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverResourceError, RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
