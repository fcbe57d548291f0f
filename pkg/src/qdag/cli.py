"""Command-line surface.

Commands: ``simulate`` (synthetic SEM data), ``discover`` (end-to-end
structure discovery), ``verify`` (theorem experiments: safety, hitting,
selection), ``metrics`` (recovery metrics of an estimate against a truth
graph), ``score`` (BIC of a graph/dataset pair).

Configuration precedence: command-line flags override the JSON config file
(``--config``), which overrides built-in defaults. Exit codes: 0 success,
1 verify verdict failed, 2 malformed input, 3 configuration invariant
violation, 4 unwritable output path.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .agent import AgentConfig, prune_graph, train
from .errors import ConfigError, InputError
from .graphs import Dag, load_adjacency_csv, save_adjacency_csv, structure_metrics
from .opponent import OpponentSpec, build_opponent
from .scoring import load_dataset_csv, make_scorer, prepare_dataset, save_dataset_csv
from .sem import SemSpec, random_dag, simulate_sem, split
from .theorems import (
    build_candidate_set,
    exhaustive_analysis,
    hitting_time_experiment,
    hitting_verdict,
    safety_audit,
    selection_experiment,
    selection_verdict,
    warm_starts_at_distances,
    write_hitting_csv,
    write_safety_csv,
    write_selection_csv,
)

EXIT_OK = 0
EXIT_VERDICT_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_BAD_CONFIG = 3
EXIT_UNWRITABLE = 4

THREADS_ENV = "DDQNCD_THREADS"


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from exc


class _Resolver:
    """Flags > config-file section > defaults, with the resolved values kept
    for echoing into reports."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = vars(args)
        self.config = config
        self.resolved: dict = {}

    def get(self, key: str, default, section: str | None = None, cast=None):
        value = self.args.get(key.replace("-", "_"))
        if value is None:
            source = self.config.get(section, {}) if section else self.config
            value = source.get(key, default) if isinstance(source, dict) else default
        if value is not None and cast is not None:
            value = cast(value)
        self.resolved[f"{section + '.' if section else ''}{key}"] = value
        return value


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"config file {path} must hold a JSON object")
    return doc


def _resolve_threads(res: _Resolver) -> int:
    t = res.args.get("threads")
    if t is None:
        t = res.config.get("threads")
    if t is None:
        env = os.environ.get(THREADS_ENV)
        if env is not None:
            try:
                t = int(env)
            except ValueError as exc:
                raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from exc
    t = 1 if t is None else int(t)
    if t < 1:
        raise ConfigError(f"threads must be >= 1, got {t}")
    res.resolved["threads"] = t
    return t


_AGENT_DEFAULTS = {
    "gamma": 0.98,
    "tau": 0.005,
    "lambda-sparsity": 1e-3,
    "step-cost": 1e-4,
    "invalid-penalty": 0.1,
    "budget": None,
    "horizon": None,
    "episodes": 500,
    "champion-period": 5,
    "eps-start": 1.0,
    "eps-end": 0.05,
    "eps-decay-fraction": 0.5,
    "batch": 64,
    "buffer-capacity": 100_000,
    "warmup": 500,
    "learning-rate": 1e-3,
    "hidden-widths": (256, 256),
}


def _agent_config(res: _Resolver, seed: int, overrides: dict | None = None) -> AgentConfig:
    d = dict(_AGENT_DEFAULTS)
    if overrides:
        d.update(overrides)
    widths = res.get("hidden-widths", d["hidden-widths"], section="agent")
    if isinstance(widths, str):
        widths = tuple(_parse_int_list(widths))
    else:
        widths = tuple(int(w) for w in widths)
    opt_int = lambda v: None if v is None else int(v)
    return AgentConfig(
        gamma=res.get("gamma", d["gamma"], "agent", float),
        tau=res.get("tau", d["tau"], "agent", float),
        lambda_sparsity=res.get("lambda-sparsity", d["lambda-sparsity"], "agent", float),
        step_cost=res.get("step-cost", d["step-cost"], "agent", float),
        invalid_penalty=res.get("invalid-penalty", d["invalid-penalty"], "agent", float),
        budget=res.get("budget", d["budget"], "agent", opt_int),
        horizon=res.get("horizon", d["horizon"], "agent", opt_int),
        episodes=res.get("episodes", d["episodes"], "agent", int),
        champion_period=res.get("champion-period", d["champion-period"], "agent", int),
        eps_start=res.get("eps-start", d["eps-start"], "agent", float),
        eps_end=res.get("eps-end", d["eps-end"], "agent", float),
        eps_decay_fraction=res.get("eps-decay-fraction", d["eps-decay-fraction"], "agent", float),
        batch=res.get("batch", d["batch"], "agent", int),
        buffer_capacity=res.get("buffer-capacity", d["buffer-capacity"], "agent", int),
        warmup_transitions=res.get("warmup", d["warmup"], "agent", int),
        learning_rate=res.get("learning-rate", d["learning-rate"], "agent", float),
        hidden_widths=widths,
        seed=seed,
    )


def _out_dir(res: _Resolver) -> Path:
    out = res.get("out-dir", ".")
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _Unwritable(f"cannot create output directory {path}: {exc}") from exc
    return path


class _Unwritable(Exception):
    pass


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise _Unwritable(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(res: _Resolver) -> int:
    seed = res.get("seed", 0, cast=int)
    p = res.get("p", None, "sem", int)
    if p is None:
        raise ConfigError("simulate requires --p")
    spec = SemSpec(
        p=p,
        expected_in_degree=res.get("expected-in-degree", 3.0, "sem", float),
        weight_low=res.get("weight-low", 0.5, "sem", float),
        weight_high=res.get("weight-high", 1.0, "sem", float),
        random_sign=not res.get("fixed-sign", False, "sem", bool),
        seed=seed,
    )
    n = res.get("n", None, "sem", int)
    if n is None or n < 1:
        raise ConfigError("simulate requires --n >= 1")
    out = _out_dir(res)
    dag, weights = random_dag(spec)
    data = simulate_sem(dag, weights, n, seed=seed + 1)
    try:
        save_dataset_csv(data, out / "data.csv")
        save_adjacency_csv(dag, out / "truth.csv")
    except OSError as exc:
        raise _Unwritable(str(exc)) from exc
    print(f"wrote {out / 'data.csv'} ({n} rows) and {out / 'truth.csv'} "
          f"(p={spec.p}, {dag.edge_count()} edges)")
    return EXIT_OK


def cmd_discover(res: _Resolver) -> int:
    seed = res.get("seed", 0, cast=int)
    data_path = res.args["data"]
    raw = load_dataset_csv(data_path)
    dataset = prepare_dataset(raw)

    opponent = res.get("opponent", "greedy", "opponent")
    spec = OpponentSpec(
        kind="greedy" if opponent == "greedy" else "external",
        path=None if opponent == "greedy" else str(opponent),
        threshold=res.get("opponent-threshold", 0.3, "opponent", float),
        max_iters=res.get("opponent-max-iters", 1000, "opponent", int),
    )
    cfg = _agent_config(res, seed).resolved(dataset.p)
    warm = build_opponent(dataset, spec, cfg.budget)
    report = train(dataset, warm, cfg)
    out_graph = report.output_graph
    if res.get("prune", False, "agent", bool):
        out_graph = prune_graph(dataset, out_graph,
                                res.get("prune-threshold", 0.05, "agent", float))

    out = _out_dir(res)
    doc = json.loads(report.to_json())
    doc["resolved_config"] = res.resolved
    doc["data_path"] = str(data_path)
    doc["pruned"] = bool(res.get("prune", False, "agent", bool))
    _write_text(out / "report.json", json.dumps(doc, indent=2))
    try:
        save_adjacency_csv(out_graph, out / "adjacency.csv")
    except OSError as exc:
        raise _Unwritable(str(exc)) from exc
    print(f"scorer={dataset.kind} warm={report.warm_score.total:.4f} "
          f"out={report.output_score.total:.4f} safety_ok={report.safety_ok} "
          f"edges={out_graph.edge_count()}")
    return EXIT_OK


def _verify_safety(res: _Resolver, out: Path, seed: int, threads: int) -> int:
    runs = res.get("runs", 5, "verify", int)
    p = res.get("p", 10, "verify", int)
    n = res.get("n", 1000, "verify", int)
    children = np.random.SeedSequence(seed).spawn(runs)
    reports = []
    for child in children:
        states = child.generate_state(3)
        spec = SemSpec(p=p, seed=int(states[0]))
        dag, weights = random_dag(spec)
        data = simulate_sem(dag, weights, n, seed=int(states[1]))
        dataset = prepare_dataset(data)
        cfg = _agent_config(res, int(states[2]), overrides={
            "episodes": 100, "hidden-widths": (32, 32), "warmup": 200,
        }).resolved(p)
        warm = build_opponent(dataset, OpponentSpec(), cfg.budget)
        reports.append(train(dataset, warm, cfg))
    verdict = safety_audit(reports)
    write_safety_csv(reports, out / "safety_runs.csv")
    _write_text(out / "verdict.json", json.dumps({
        "theorem": "safety",
        "passed": verdict.passed,
        "violations": [list(v) for v in verdict.violations],
        "runs": runs,
        "resolved_config": res.resolved,
    }, indent=2))
    print(f"safety: {'PASS' if verdict.passed else 'FAIL'} over {runs} runs")
    return EXIT_OK if verdict.passed else EXIT_VERDICT_FAILED


def _chain_sem(p: int, weight: float = 0.8) -> tuple[Dag, np.ndarray]:
    adj = np.zeros((p, p), dtype=np.int8)
    weights = np.zeros((p, p))
    for i in range(p - 1):
        adj[i, i + 1] = 1
        weights[i, i + 1] = weight
    return Dag(adj), weights


def _verify_hitting(res: _Resolver, out: Path, seed: int, threads: int) -> int:
    p = res.get("p", 3, "verify", int)
    n = res.get("n", 2000, "verify", int)
    repeats = res.get("repeats", 200, "verify", int)
    episodes_cap = res.get("episodes-cap", 10_000, "verify", int)
    budget = res.get("budget", None, "verify",
                     lambda v: None if v is None else int(v))
    horizon = res.get("horizon", None, "verify",
                      lambda v: None if v is None else int(v))
    distances = res.get("distances", [0, 1, 2], "verify",
                        lambda v: _parse_int_list(v) if isinstance(v, str) else list(v))
    dag, weights = _chain_sem(p)
    data = simulate_sem(dag, weights, n, seed=seed)
    dataset = prepare_dataset(data)
    analysis = exhaustive_analysis(dataset, budget)
    warms = warm_starts_at_distances(analysis, distances)
    rows = hitting_time_experiment(dataset, warms, eps=1.0,
                                   episodes_cap=episodes_cap, repeats=repeats,
                                   seed=seed, budget=budget, horizon=horizon)
    ok, messages = hitting_verdict(rows)
    write_hitting_csv(rows, out / "hitting.csv")
    _write_text(out / "verdict.json", json.dumps({
        "theorem": "hitting",
        "passed": ok,
        "messages": messages,
        "a_max": analysis.a_max,
        "rows": [[r.distance, r.mean_episodes, r.bound, r.repeats, r.censored]
                 for r in rows],
        "resolved_config": res.resolved,
    }, indent=2))
    for r in rows:
        print(f"d={r.distance}: mean={r.mean_episodes:.3f} bound={r.bound:.1f} "
              f"censored={r.censored}")
    print(f"hitting: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERDICT_FAILED


def _verify_selection(res: _Resolver, out: Path, seed: int, threads: int) -> int:
    paper_scale = res.get("paper-scale", False, "verify", bool)
    p = res.get("p", 30 if paper_scale else 15, "verify", int)
    trials = res.get("trials", 40 if paper_scale else 20, "verify", int)
    default_sizes = [400, 600, 800, 1000] if paper_scale else [200, 400, 800, 1600]
    sizes = res.get("sample-sizes", default_sizes, "verify",
                    lambda v: _parse_int_list(v) if isinstance(v, str) else [int(x) for x in v])
    total_rows = res.get("total-rows", 24_000 if paper_scale else 8_000, "verify", int)
    budget = res.get("budget", 4 * p, "verify", int)
    max_snapshots = res.get("max-snapshots", 4, "verify", int)
    # cap the opponent so the agent has true edges left to contribute;
    # a 1-optimal warm start would collapse the candidate set to one graph
    opp_iters = res.get("opponent-max-iters", max(2, p // 2), "verify", int)

    spec = SemSpec(p=p, seed=seed)
    dag, weights = random_dag(spec)
    full = simulate_sem(dag, weights, total_rows, seed=seed + 1)
    train_rows, pool = split(full, 0.5, seed=seed + 2)
    dataset = prepare_dataset(train_rows)

    agent_cfg = _agent_config(res, seed, overrides={
        "episodes": 150, "hidden-widths": (64, 64), "warmup": 200,
    })
    candidates = build_candidate_set(dataset, budget, agent_cfg,
                                     opponent_spec=OpponentSpec(max_iters=opp_iters),
                                     max_snapshots=max_snapshots)
    outcome = selection_experiment(spec, candidates, pool, sizes, trials,
                                   seed=seed, threads=threads)
    ok, messages = selection_verdict(outcome)
    write_selection_csv(outcome, out / "selection_trials.csv",
                        out / "selection_summary.csv")
    _write_text(out / "verdict.json", json.dumps({
        "theorem": "selection",
        "passed": ok,
        "messages": messages,
        "candidates": candidates.labels,
        "summary": [list(row) for row in outcome.summary],
        "resolved_config": res.resolved,
    }, indent=2))
    for n, rate, gap in outcome.summary:
        print(f"n={n}: misselection_rate={rate:.3f} gap={gap:.6f}")
    print(f"selection: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERDICT_FAILED


def cmd_verify(res: _Resolver) -> int:
    seed = res.get("seed", 0, cast=int)
    threads = _resolve_threads(res)
    out = _out_dir(res)
    theorem = res.args["theorem"]
    if theorem == "safety":
        return _verify_safety(res, out, seed, threads)
    if theorem == "hitting":
        return _verify_hitting(res, out, seed, threads)
    return _verify_selection(res, out, seed, threads)


def cmd_metrics(res: _Resolver) -> int:
    est = load_adjacency_csv(res.args["est"])
    truth = load_adjacency_csv(res.args["truth"])
    m = structure_metrics(est, truth)
    print(f"{m.tpr!r},{m.fdr!r},{m.shd},{m.score!r}")
    return EXIT_OK


def cmd_score(res: _Resolver) -> int:
    raw = load_dataset_csv(res.args["data"])
    dataset = prepare_dataset(raw)
    graph = load_adjacency_csv(res.args["graph"])
    if graph.p != dataset.p:
        raise InputError(
            f"graph has p={graph.p} but dataset has p={dataset.p} variables"
        )
    value = make_scorer(dataset).score(graph)
    print(f"{value.total!r},{value.loglik!r},{value.penalty!r},{value.k}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON configuration file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="master random seed (default 0)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS,
                        help="output directory (default .)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads for experiment trials")

    parser = argparse.ArgumentParser(
        prog="qdag",
        parents=[common],
        description="Causal DAG discovery by double-DQN refinement of a "
                    "warm-start graph under a BIC score.",
        epilog="Precedence: command-line flags override the --config JSON "
               "file, which overrides built-in defaults. "
               f"${THREADS_ENV} is the fallback for --threads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common],
                         help="generate linear-Gaussian SEM data")
    sim.add_argument("--p", type=int, help="number of variables")
    sim.add_argument("--n", type=int, help="number of rows")
    sim.add_argument("--expected-in-degree", type=float)
    sim.add_argument("--weight-low", type=float)
    sim.add_argument("--weight-high", type=float)
    sim.add_argument("--fixed-sign", action="store_const", const=True,
                     help="do not randomize weight signs")

    def add_agent_flags(p_):
        p_.add_argument("--episodes", type=int)
        p_.add_argument("--horizon", type=int)
        p_.add_argument("--budget", type=int)
        p_.add_argument("--gamma", type=float)
        p_.add_argument("--tau", type=float)
        p_.add_argument("--lambda-sparsity", type=float)
        p_.add_argument("--step-cost", type=float)
        p_.add_argument("--invalid-penalty", type=float)
        p_.add_argument("--champion-period", type=int)
        p_.add_argument("--eps-start", type=float)
        p_.add_argument("--eps-end", type=float)
        p_.add_argument("--eps-decay-fraction", type=float)
        p_.add_argument("--batch", type=int)
        p_.add_argument("--buffer-capacity", type=int)
        p_.add_argument("--warmup", type=int)
        p_.add_argument("--learning-rate", type=float)
        p_.add_argument("--hidden-widths", help="comma-separated, e.g. 256,256")

    disc = sub.add_parser("discover", parents=[common],
                           help="discover a DAG from a dataset CSV")
    disc.add_argument("data", help="dataset CSV (one header row)")
    disc.add_argument("--opponent",
                      help="'greedy' (default) or path to an adjacency CSV")
    disc.add_argument("--opponent-threshold", type=float)
    disc.add_argument("--opponent-max-iters", type=int)
    disc.add_argument("--prune", action="store_const", const=True,
                      help="drop output edges with refit |coefficient| below "
                           "the prune threshold (plain pruner, not CAM)")
    disc.add_argument("--prune-threshold", type=float)
    add_agent_flags(disc)

    ver = sub.add_parser("verify", parents=[common],
                          help="run a theorem experiment")
    ver.add_argument("theorem", choices=["safety", "hitting", "selection"])
    ver.add_argument("--runs", type=int, help="safety: number of end-to-end runs")
    ver.add_argument("--p", type=int)
    ver.add_argument("--n", type=int)
    ver.add_argument("--repeats", type=int, help="hitting: repeats per distance")
    ver.add_argument("--episodes-cap", type=int)
    ver.add_argument("--distances", help="hitting: comma-separated, e.g. 0,1,2")
    ver.add_argument("--trials", type=int, help="selection: trials per n")
    ver.add_argument("--sample-sizes", help="selection: comma-separated n values")
    ver.add_argument("--total-rows", type=int,
                     help="selection: rows split between train and pool")
    ver.add_argument("--max-snapshots", type=int,
                     help="selection: agent snapshots kept as candidates")
    ver.add_argument("--opponent-max-iters", type=int,
                     help="selection: greedy iterations for the warm start")
    ver.add_argument("--paper-scale", action="store_const", const=True,
                     help="selection: p=30, 40 trials, n in 400..1000")
    add_agent_flags(ver)

    met = sub.add_parser("metrics", parents=[common],
                          help="TPR/FDR/SHD/composite of est vs truth")
    met.add_argument("est", help="estimate adjacency CSV")
    met.add_argument("truth", help="ground-truth adjacency CSV")

    sc = sub.add_parser("score", parents=[common],
                         help="print the BIC of a graph on a dataset")
    sc.add_argument("data", help="dataset CSV")
    sc.add_argument("graph", help="adjacency CSV")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "discover": cmd_discover,
    "verify": cmd_verify,
    "metrics": cmd_metrics,
    "score": cmd_score,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(getattr(args, 'config', None))
        res = _Resolver(args, config)
        return _COMMANDS[args.command](res)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except _Unwritable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNWRITABLE


if __name__ == "__main__":
    sys.exit(main())
