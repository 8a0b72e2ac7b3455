"""Command-line entry point: graph tools, single runs, the experiment protocol, analysis."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import graph as pg
from .config import Config, load_config
from .experiments import (
    ARMS,
    ExperimentError,
    emit_outputs,
    load_protocol,
    per_class_report,
    reaudit,
    retry_pipeline_success,
    run_protocol,
    warm_start_comparison,
    write_csv,
)
from .reward import cross_judge, hybrid_reward
from .router import RouterConfig, preflight, run_task
from .signature import Signature
from .sim import EnvConfig, SimEnv, SyntheticTask, make_judges

log = logging.getLogger("coordpolicy")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PREFLIGHT = 3
EXIT_FAULT = 4


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True, default=str))


# --- graph ----------------------------------------------------------------------

def cmd_graph(args) -> int:
    graph = pg.load_graph(args.graph)
    if args.graph_cmd == "export":
        text = pg.dumps_graph(graph)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if args.graph_cmd == "inspect":
        sig = Signature.parse(args.signature)
        if sig not in graph.nodes:
            print(f"signature {args.signature} not in graph", file=sys.stderr)
            return EXIT_USAGE
        rows = pg.inspect_signature(graph, sig)
        print(f"{'action':<44} {'visits':>8} {'mean':>9} {'fail':>6}")
        for r in rows:
            print(f"{r['action']:<44} {r['visits']:>8.2f} {r['mean_reward']:>9.4f} {r['failure_rate']:>6.3f}")
        return EXIT_OK
    # top
    print(f"graph: {len(graph)} nodes")
    for sig, node, best in pg.top_signatures(graph, args.k):
        print(f"{node.visits:>9.2f}  {sig.canonical():<44} {best.canonical() if best else '-'}")
    return EXIT_OK


# --- single run -------------------------------------------------------------------

def _load_tasks(path) -> List[SyntheticTask]:
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict) and "tasks" in doc:
        doc = doc["tasks"]
    if isinstance(doc, dict):
        doc = [doc]
    return [SyntheticTask.from_dict(d) for d in doc]


def cmd_run(args) -> int:
    config = load_config(args.config)
    env = SimEnv(config.env)
    report = preflight(config, env)
    if not report.ok:
        for code, message in report.issues:
            print(f"pre-flight blocked [{code}]: {message}", file=sys.stderr)
        return EXIT_PREFLIGHT
    tasks = _load_tasks(args.task_file)
    learning = not args.no_learn
    graph = None
    if learning:
        path = Path(args.graph) if args.graph else None
        graph = pg.load_graph(path) if path is not None and path.exists() else pg.PolicyGraph()
    router = RouterConfig(
        max_steps=config.router.max_steps,
        token_cap=config.router.token_cap,
        max_retries=config.router.max_retries,
        reliability_weight=config.router.reliability_weight,
        skip_enabled=not args.no_skip,
        learning_enabled=learning,
        governance=config.router.governance,
    )
    judges = make_judges(env, tasks, [config.experiment.live_judge], args.seed)
    weights = config.reward.weights
    for i, task in enumerate(tasks):
        rng = np.random.default_rng([args.seed, i])
        traj, rep = run_task(task, graph, env, router, rng, pool=config.pool, signature_config=config.signature)
        traj.uid, traj.arm = f"run/{task.id}/{args.seed}", "run"
        env.annotate(traj, task)
        scores = cross_judge([traj, env.reference_trajectory(task)], judges,
                             config.reward.axis_weights, config.reward.sigma_max)
        if scores is not None:
            s = scores[traj.uid]
            rep.judged, rep.quality = True, s.mean
            rep.total_reward = hybrid_reward(s.mean, traj.tokens, traj.retries, weights)
            rep.cost_term = weights.w_cost * traj.tokens / weights.token_cap
            rep.retry_term = weights.w_retry * traj.retries
            if graph is not None:
                pg.backup(graph, traj.visited_edges, rep.total_reward, s.confidence)
        _print_json(rep.to_dict())
    if graph is not None and args.graph:
        pg.save_graph(graph, args.graph)
    return EXIT_OK


# --- experiment ---------------------------------------------------------------------

def _experiment_config(args) -> Config:
    config = load_config(args.config)
    if args.env:
        import yaml

        config.env = EnvConfig.from_dict(yaml.safe_load(Path(args.env).read_text()))
    config.experiment.tasks = args.tasks
    config.experiment.epochs = args.epochs
    config.experiment.arms = tuple(args.arms)
    return config


def _arms(text: str) -> List[str]:
    arms = [a.strip() for a in text.split(",") if a.strip()]
    unknown = [a for a in arms if a not in ARMS]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown arms {unknown}; choose from {', '.join(ARMS)}")
    return arms


def cmd_experiment(args) -> int:
    if args.exp_cmd == "run":
        config = _experiment_config(args)
        proto = run_protocol(config, args.seed, arms=args.arms, out_dir=Path(args.out))
        for name, res in proto.results.items():
            stats = res.epoch_stats()
            last = stats[-1]
            print(f"{name:<11} epochs={len(stats)} audited={last.mean_audited_score:.4f} tokens={last.mean_tokens:.0f}")
        print(f"outputs in {args.out}")
        return EXIT_OK

    proto, config = load_protocol(args.out)
    if args.exp_cmd == "audit":
        judge_ids = list(config.reward.judges[: args.judges])
        if len(judge_ids) < args.judges:
            print(f"only {len(judge_ids)} judges configured", file=sys.stderr)
            return EXIT_USAGE
        rows = reaudit(proto, config, judge_ids)
        config.experiment.audit_judges = args.judges
        emit_outputs(proto, config, args.out)
        print(f"audited {len(rows)} trajectories with {', '.join(judge_ids)}")
        return EXIT_OK

    # report
    reaudit(proto, config, list(config.reward.judges[: config.experiment.audit_judges]))
    results = proto.results
    if args.kind == "per-class":
        if "baseline" not in results or args.arm not in results:
            print(f"per-class report needs baseline and {args.arm}", file=sys.stderr)
            return EXIT_USAGE
        rows = per_class_report(results["baseline"], results[args.arm])
        path = write_csv(Path(args.out) / f"per_class_{args.arm}.csv",
                         ["class", "name", "baseline", "arm", "delta", "absent"], rows)
        print(f"{'class':<6}{'name':<26}{'baseline':>10}{args.arm:>10}{'delta':>9}")
        for r in rows:
            if r["absent"]:
                print(f"{r['class']:<6}{r['name']:<26}{'absent':>10}")
            else:
                print(f"{r['class']:<6}{r['name']:<26}{r['baseline']:>10.3f}{r['arm']:>10.3f}{r['delta']:>+9.3f}")
        print(f"written {path}")
        return EXIT_OK
    if "main" not in results or "warm_start" not in results:
        print("warm-start report needs main and warm_start arms", file=sys.stderr)
        return EXIT_USAGE
    cmp = warm_start_comparison(results["main"], results["warm_start"])
    path = Path(args.out) / "warm_start.json"
    path.write_text(json.dumps(cmp, indent=1, sort_keys=True) + "\n")
    print(f"{'epoch':>5} {'cold':>8} {'warm':>8} {'delta':>8} {'cum cold tok':>13} {'cum warm tok':>13}")
    for r in cmp["epochs"]:
        print(f"{r['epoch']:>5} {r['cold_audited']:>8.3f} {r['warm_audited']:>8.3f} {r['delta_audited']:>+8.3f} "
              f"{r['cum_cold_tokens']:>13.0f} {r['cum_warm_tokens']:>13.0f}")
    for key in ("plateau", "full_run"):
        s = cmp[key]
        print(f"{key}: audited delta {s['delta_audited']:+.4f}, single-judge delta {s['delta_single']:+.4f}, "
              f"tokens {s['warm_tokens']:.0f} vs {s['cold_tokens']:.0f}")
    print(f"written {path}")
    return EXIT_OK


# --- analysis ---------------------------------------------------------------------

def cmd_analyze(args) -> int:
    value = retry_pipeline_success(args.p, args.n, args.k)
    print(f"{value:.10g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coordpolicy", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", help="inspect a persisted policy graph")
    gsub = g.add_subparsers(dest="graph_cmd", required=True)
    for name in ("export", "inspect", "top"):
        p = gsub.add_parser(name)
        p.add_argument("--graph", required=True)
        if name == "export":
            p.add_argument("--out")
        elif name == "inspect":
            p.add_argument("--signature", required=True, help="canonical form, e.g. straightforward|0000000|2,2,2,2")
        else:
            p.add_argument("--k", type=int, default=10)
    g.set_defaults(func=cmd_graph)

    r = sub.add_parser("run", help="route tasks from a task file")
    r.add_argument("--task-file", required=True)
    r.add_argument("--graph")
    r.add_argument("--config")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--no-skip", action="store_true")
    r.add_argument("--no-learn", action="store_true")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("experiment", help="the four-arm protocol")
    esub = e.add_subparsers(dest="exp_cmd", required=True)
    er = esub.add_parser("run")
    er.add_argument("--arms", type=_arms, default=list(ARMS))
    er.add_argument("--tasks", type=int, default=60)
    er.add_argument("--epochs", type=int, default=8)
    er.add_argument("--seed", type=int, default=0)
    er.add_argument("--env")
    er.add_argument("--config")
    er.add_argument("--out", required=True)
    ea = esub.add_parser("audit")
    ea.add_argument("--judges", type=int, default=3)
    ea.add_argument("--out", required=True)
    ep = esub.add_parser("report")
    ep.add_argument("--kind", choices=("per-class", "warm-start"), required=True)
    ep.add_argument("--arm", default="main")
    ep.add_argument("--out", required=True)
    e.set_defaults(func=cmd_experiment)

    a = sub.add_parser("analyze", help="analysis utilities")
    asub = a.add_subparsers(dest="analysis", required=True)
    ar = asub.add_parser("retry", help="success of a k-stage pipeline with n attempts per stage")
    ar.add_argument("--p", type=float, required=True)
    ar.add_argument("--n", type=int, required=True)
    ar.add_argument("--k", type=int, required=True)
    a.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, pg.GraphError, ExperimentError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
