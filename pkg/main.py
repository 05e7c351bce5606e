"""
Stable-BN - order-stable Bayesian network structure learning
Command-line entry point for learning, scoring, evaluation and the benchmark suite.
"""

import argparse
import json
import sys
import time
import uuid
from dataclasses import replace
from typing import List, Optional

from bnmodel import load_model, sample
from config import Config, ConfigError
from dataset import CATEGORICAL, CONTINUOUS, load_csv, perturb
from graph import Dag, GraphError, dag_to_cpdag, read_graph, serialize_graph, write_graph
from harness import ExperimentConfig, instability_demo, run_suite
from metrics import evaluate
from run_logger import RunLogger
from scoring import BdeuConfig, ScoreKind, dag_score, normalized_score
from search import ALGORITHMS, SearchConfig, SearchError, learn, score_order

# ConfigError, DatasetError, ModelValidationError, GraphError, ScoreError and MetricError are ValueErrors
INPUT_ERRORS = (ValueError, OSError)


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2))


def _score_kinds(kind: str) -> List[ScoreKind]:
    return [ScoreKind.BIC_G] if kind == CONTINUOUS else [ScoreKind.BIC, ScoreKind.BDEU]


def _search_config(args) -> SearchConfig:
    return SearchConfig(score_kind=ScoreKind(args.score), tabu_len=args.tabu_len, noinc=args.noinc,
                        bdeu_iss=args.iss, time_limit_s=args.time_limit)


# Commands ------------------------------------------------------------------------

def cmd_learn(args) -> int:
    data = load_csv(args.data, args.kind)
    cfg = _search_config(args)
    learn_data, back = data, None
    if args.seed is not None:
        learn_data, perturbation = perturb(data, args.seed)
        back = perturbation.inverse_name_map()
        print(f"[*] Learning on perturbation seed {args.seed}", file=sys.stderr)

    start = time.perf_counter()
    result = learn(learn_data, args.algo, cfg)
    elapsed = time.perf_counter() - start

    dag = result.dag
    if back is not None:
        dag = dag.relabel(back).reindexed(data.labels)
        result.change_log = [replace(c, parent=back[c.parent], child=back[c.child]) for c in result.change_log]
    if args.out:
        write_graph(args.out, dag)
        print(f"[+] Wrote learned graph to {args.out}", file=sys.stderr)

    if args.log_dir:
        logger = RunLogger(uuid.uuid4().hex, args.algo, data.fingerprint(), args.log_dir)
        logger.set_result(result, data.n_rows, elapsed)
        logger.set_graph(dag)
        logger.close()
        print(f"[+] Run log: {logger.log_filepath}", file=sys.stderr)

    stable = result.stable_order
    _emit({
        "algorithm": args.algo,
        "score_kind": cfg.score_kind.value,
        "dag": serialize_graph(dag),
        "cpdag": serialize_graph(dag_to_cpdag(dag)),
        "score": result.score,
        "normalized_score": normalized_score(result.score, data.n_rows),
        "iterations": result.iterations,
        "wall_time_s": elapsed,
        "stable_order": ([back[label] for label in stable.labels] if back else stable.labels) if stable else None,
    })
    return 0


def cmd_score(args) -> int:
    data = load_csv(args.data, args.kind)
    if args.graph:
        graph = read_graph(args.graph)
        if not isinstance(graph, Dag):
            raise GraphError("scoring needs a fully directed graph")
    else:
        graph = load_model(args.model).true_graph()
    scores = {}
    for kind in _score_kinds(data.kind):
        total = dag_score(graph, data, kind, bdeu=BdeuConfig(args.iss))
        scores[kind.value] = {"total": total, "normalized": normalized_score(total, data.n_rows)}
    _emit({"N": data.n_rows, "scores": scores})
    return 0


def cmd_evaluate(args) -> int:
    learned = read_graph(args.learned)
    if not isinstance(learned, Dag):
        raise GraphError("evaluation needs the learned DAG, not an equivalence class")
    model = load_model(args.model)
    data = load_csv(args.data, model.kind) if args.data else None
    kind = ScoreKind.BIC_G if model.kind == CONTINUOUS else ScoreKind.BIC
    _emit(evaluate(learned, model.true_graph(), data, kind).to_dict())
    return 0


def cmd_inspect(args) -> int:
    data = load_csv(args.data, args.kind)
    payload = data.fingerprint()
    kind = ScoreKind.BIC_G if data.kind == CONTINUOUS else ScoreKind.BIC
    dec, keys = score_order(data, kind)
    payload["score_order"] = [data.labels[i] for i in dec]
    payload["sort_keys"] = {label: key.as_tuple() for label, key in zip(data.labels, keys)}
    if payload["duplicates"]:
        print("[!] Duplicate variables found; stable learners may still depend on column order", file=sys.stderr)
    _emit(payload)
    return 0


def cmd_sample(args) -> int:
    model = load_model(args.model)
    data = sample(model, args.rows, args.seed)
    data.save_csv(args.out)
    print(f"[+] Wrote {data.n_rows} rows of {model.name} to {args.out}", file=sys.stderr)
    return 0


def cmd_demo(args) -> int:
    model = load_model(args.model)
    if model.kind != CATEGORICAL:
        raise ConfigError("the instability demo needs a categorical model")
    demo = instability_demo(model, args.rows, args.seed, tries=args.tries)
    if demo.differ:
        print("[+] Column order changed the learned edge set", file=sys.stderr)
    else:
        print("[*] Both column orders gave the same edge set", file=sys.stderr)
    _emit(demo.to_dict())
    return 0


def cmd_suite(args) -> int:
    Config.validate()
    cfg = ExperimentConfig.from_file(args.config)
    if args.out:
        cfg.output_dir = args.out
    if args.workers:
        cfg.workers = args.workers
    cfg.validate()
    print("=" * 70)
    print("Stable-BN benchmark suite")
    print("=" * 70)
    print(f"[*] Models: {', '.join(cfg.models)}")
    print(f"[*] Sample sizes: {cfg.sample_sizes}  Randomizations: {cfg.n_randomizations}")
    print(f"[*] Algorithms: {', '.join(cfg.algorithms)}")
    print("=" * 70)
    run_suite(cfg)
    return 0


# Parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stable-bn", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a DAG from a CSV dataset")
    p.add_argument("--algo", choices=ALGORITHMS, default="tabu-stable")
    p.add_argument("--score", choices=[k.value for k in ScoreKind], default=ScoreKind.BIC.value)
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=[CATEGORICAL, CONTINUOUS], default=CATEGORICAL)
    p.add_argument("--out")
    p.add_argument("--tabu-len", type=int, default=Config.TABU_LEN)
    p.add_argument("--noinc", type=int, default=Config.NOINC)
    p.add_argument("--iss", type=float, default=Config.BDEU_ISS, help="BDeu imaginary sample size")
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--seed", type=int, default=None, help="perturb the dataset with this seed first")
    p.add_argument("--log-dir", default=None)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("score", help="score a model's true graph (or a graph file) on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=[CATEGORICAL, CONTINUOUS], default=CATEGORICAL)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--model")
    source.add_argument("--graph")
    p.add_argument("--iss", type=float, default=Config.BDEU_ISS)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="compare a learned graph with a model's true graph")
    p.add_argument("--learned", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--data", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="describe a dataset: sizes, duplicates, score order")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=[CATEGORICAL, CONTINUOUS], default=CATEGORICAL)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("sample", help="draw a dataset from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--seed", type=int, default=Config.BASE_SEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("demo-instability", help="HC under two column orders, with tie diagnostics")
    p.add_argument("--model", required=True)
    p.add_argument("--rows", type=int, default=10000)
    p.add_argument("--seed", type=int, default=Config.BASE_SEED)
    p.add_argument("--tries", type=int, default=10)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("suite", help="run the randomized benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as e:
        print(f"[!] {e}", file=sys.stderr)
        return 2
    except SearchError as e:
        print(f"[!] Search failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
