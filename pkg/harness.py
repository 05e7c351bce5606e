"""
Experiment Harness
Samples datasets from ground-truth models, runs every learner on seeded perturbations of
each sample and writes run-level and aggregated CSV tables.

Output files (all written with '\\n' line endings):
    runs.csv        one row per (model, N, algorithm, randomization), wall time excluded
    timings.csv     wall time of every run
    aggregate.csv   mean / SD per (model, N, algorithm) plus empty-graph and true-graph rows
    series_<m>.csv  F1 against N with SD band, per algorithm
    summary.csv     one row per algorithm, averaged over models and sample sizes
"""
from __future__ import annotations

import hashlib
import json
import os
import time

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import results_store
from bnmodel import NetworkModel, load_model, sample
from config import Config, ConfigError
from dataset import CONTINUOUS, Dataset, find_duplicate_variables, perturb
from graph import Dag, dag_to_cpdag, graph_fingerprint
from metrics import evaluate, mean_and_sd
from scoring import ScoreKind, dag_score, normalized_score
from search import (ALGORITHMS, HC, HC_STABLE, TABU, TABU_STABLE, ChangeRecord, SearchConfig, SearchTimeout,
                    learn)

DEFAULT_ALGORITHMS = (HC, TABU, HC_STABLE, TABU_STABLE)
DEFAULT_SAMPLE_SIZES = (100, 1000, 10000)
STATUS_OK = "ok"
STATUS_TIMEOUT = "timeout"

RUN_COLUMNS = list(results_store.RUN_COLUMNS)
AGGREGATE_COLUMNS = [
    "model", "n_rows", "algorithm", "n_ok", "n_timeout", "n_distinct_cpdags", "f1_mean", "f1_sd",
    "bsf_mean", "bsf_sd", "precision_mean", "recall_mean", "nbic_mean", "nbic_sd", "degree_mean", "degree_sd",
]
SUMMARY_COLUMNS = ["algorithm", "precision", "recall", "f1", "f1_sd", "bsf", "nbic", "nbic_sd"]
EMPTY_BASELINE = "empty"
TRUTH_BASELINE = "truth"


def derive_seed(base_seed: int, *parts: Any) -> int:
    """Stable 63-bit seed (fits an SQLite INTEGER) from the base seed and any identifying parts."""
    text = "|".join(str(p) for p in (base_seed,) + parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big") >> 1


@dataclass
class ExperimentConfig:
    models: List[str]
    sample_sizes: List[int] = field(default_factory=lambda: list(DEFAULT_SAMPLE_SIZES))
    algorithms: List[str] = field(default_factory=lambda: list(DEFAULT_ALGORITHMS))
    score_kind: str = ScoreKind.BIC.value
    n_randomizations: int = Config.N_RANDOMIZATIONS
    base_seed: int = Config.BASE_SEED
    time_limit_s: Optional[float] = Config.TIME_LIMIT_S
    output_dir: str = Config.OUTPUT_DIR
    workers: int = Config.WORKERS
    tabu_len: int = Config.TABU_LEN
    noinc: int = Config.NOINC
    use_sqlite: bool = Config.USE_SQLITE

    def __post_init__(self):
        self.validate()

    def validate(self) -> "ExperimentConfig":
        if not self.models:
            raise ConfigError("experiment needs at least one model")
        if not self.sample_sizes or any(int(n) < 1 for n in self.sample_sizes):
            raise ConfigError(f"sample sizes must all be >= 1, got {self.sample_sizes}")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown or not self.algorithms:
            raise ConfigError(f"unknown algorithms {unknown}; expected a subset of {list(ALGORITHMS)}")
        try:
            ScoreKind(self.score_kind)
        except ValueError as exc:
            raise ConfigError(f"unknown score kind {self.score_kind!r}") from exc
        if self.n_randomizations < 1:
            raise ConfigError(f"n_randomizations must be >= 1, got {self.n_randomizations}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.time_limit_s is not None and self.time_limit_s <= 0:
            raise ConfigError(f"time_limit_s must be positive, got {self.time_limit_s}")
        if self.tabu_len < 1 or self.noinc < 1:
            raise ConfigError("tabu_len and noinc must be >= 1")
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: str = ".") -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(f"unknown experiment keys: {', '.join(extra)}")
        if "models" not in data:
            raise ConfigError("experiment config must list 'models'")
        values = dict(data)
        values["models"] = [resolve_model_path(m, base_dir) for m in data["models"]]
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        try:
            if path.endswith(".toml"):
                with open(path, "rb") as f:
                    data = tomllib.load(f)
            else:
                with open(path, "r", encoding="utf-8") as f:
                    data = json.load(f)
        except FileNotFoundError as exc:
            raise ConfigError(f"experiment config not found: {path}") from exc
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot parse experiment config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))

    def search_config(self) -> SearchConfig:
        return SearchConfig(score_kind=ScoreKind(self.score_kind), tabu_len=self.tabu_len, noinc=self.noinc,
                            time_limit_s=self.time_limit_s)


def resolve_model_path(model: str, base_dir: str = ".") -> str:
    """Accept a path (absolute or relative to the config file) or a bare name from the models directory."""
    candidates = [model, os.path.join(base_dir, model)]
    if not model.endswith(".json"):
        candidates.append(os.path.join(Config.MODELS_DIR, model + ".json"))
        candidates.append(os.path.join(base_dir, Config.MODELS_DIR, model + ".json"))
    for candidate in candidates:
        if os.path.isfile(candidate):
            return candidate
    raise ConfigError(f"model not found: {model}")


def score_kind_for(model: NetworkModel, requested: ScoreKind) -> ScoreKind:
    """Continuous models are always scored with the linear-Gaussian BIC."""
    if model.kind == CONTINUOUS:
        return ScoreKind.BIC_G
    if requested is ScoreKind.BIC_G:
        raise ConfigError(f"score bic-g cannot be used with categorical model {model.name}")
    return requested


@dataclass
class RunRecord:
    model: str
    n_rows: int
    algorithm: str
    randomization: int
    seed: int
    status: str
    cpdag_fingerprint: Optional[str] = None
    score: Optional[float] = None
    normalized_score: Optional[float] = None
    f1: Optional[float] = None
    bsf: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    mean_degree: Optional[float] = None
    iterations: Optional[int] = None
    wall_time_s: float = 0.0

    def to_row(self) -> Dict[str, Any]:
        row = asdict(self)
        row.pop("wall_time_s")
        return row


# Jobs ------------------------------------------------------------------------

@dataclass
class _Job:
    model: str
    n_rows: int
    randomization: int
    seed: int
    data: Dataset
    truth: Dag
    algorithms: Tuple[str, ...]
    search: SearchConfig


def _run_job(job: _Job) -> List[RunRecord]:
    """All algorithms on one perturbation of one base sample."""
    perturbed, perturbation = perturb(job.data, job.seed)
    back = perturbation.inverse_name_map()
    scorer = job.search.scorer(perturbed)
    records = []
    for algorithm in job.algorithms:
        start = time.perf_counter()
        try:
            result = learn(perturbed, algorithm, job.search, scorer)
        except SearchTimeout:
            records.append(RunRecord(job.model, job.n_rows, algorithm, job.randomization, job.seed,
                                     STATUS_TIMEOUT, wall_time_s=time.perf_counter() - start))
            continue
        elapsed = time.perf_counter() - start
        learned = result.dag.relabel(back).reindexed(job.truth.labels)
        report = evaluate(learned, job.truth)
        records.append(RunRecord(
            model=job.model, n_rows=job.n_rows, algorithm=algorithm, randomization=job.randomization,
            seed=job.seed, status=STATUS_OK, cpdag_fingerprint=graph_fingerprint(dag_to_cpdag(learned)),
            score=result.score, normalized_score=normalized_score(result.score, job.n_rows),
            f1=report.f1, bsf=report.bsf, precision=report.precision, recall=report.recall,
            mean_degree=report.mean_degree, iterations=result.iterations, wall_time_s=elapsed,
        ))
    return records


@dataclass
class SuiteResult:
    records: List[RunRecord]
    baselines: pd.DataFrame
    tables: Dict[str, pd.DataFrame]
    duplicates: Dict[Tuple[str, int], List[Tuple[str, ...]]]


def run_suite(cfg: ExperimentConfig, verbose: bool = True) -> SuiteResult:
    """Run the full randomization protocol and write all CSV outputs to cfg.output_dir."""
    say = print if verbose else (lambda *_a, **_k: None)
    search_cfg = cfg.search_config()
    models: List[NetworkModel] = [load_model(path) for path in cfg.models]
    jobs: List[_Job] = []
    baselines = []
    duplicates: Dict[Tuple[str, int], List[Tuple[str, ...]]] = {}

    for model in models:
        model_cfg = replace(search_cfg, score_kind=score_kind_for(model, search_cfg.score_kind))
        for n_rows in cfg.sample_sizes:
            data = sample(model, int(n_rows), derive_seed(cfg.base_seed, model.name, n_rows, "data"))
            dupes = find_duplicate_variables(data)
            if dupes:
                duplicates[(model.name, n_rows)] = dupes
                say(f"[!] {model.name} N={n_rows}: duplicate variables {dupes}; stable learners may vary")
            for label, dag in ((EMPTY_BASELINE, model.empty_graph()), (TRUTH_BASELINE, model.true_graph())):
                total = dag_score(dag, data, model_cfg.score_kind)
                baselines.append({"model": model.name, "n_rows": n_rows, "algorithm": label,
                                  "nbic_mean": normalized_score(total, data.n_rows)})
            for r in range(cfg.n_randomizations):
                jobs.append(_Job(model.name, int(n_rows), r, derive_seed(cfg.base_seed, model.name, n_rows, r),
                                 data, model.true_graph(), tuple(cfg.algorithms), model_cfg))

    say(f"[*] Running {len(jobs)} randomizations x {len(cfg.algorithms)} algorithms "
        f"on {cfg.workers} worker(s)")
    records: List[RunRecord] = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for batch in pool.map(_run_job, jobs):
                records.extend(batch)
    else:
        for job in jobs:
            records.extend(_run_job(job))

    timeouts = sum(1 for r in records if r.status == STATUS_TIMEOUT)
    if timeouts:
        say(f"[!] {timeouts} run(s) timed out and are excluded from aggregates")

    model_rank = {m.name: i for i, m in enumerate(models)}
    algo_rank = {a: i for i, a in enumerate(cfg.algorithms)}
    records.sort(key=lambda r: (model_rank[r.model], r.n_rows, algo_rank[r.algorithm], r.randomization))
    baseline_frame = pd.DataFrame(baselines)
    tables = report(records, cfg.output_dir, baseline_frame)
    say(f"[+] Wrote {', '.join(sorted(tables))} to {cfg.output_dir}")

    if cfg.use_sqlite:
        summary = results_store.mirror_runs([r.to_row() for r in records], Config.RESULTS_DB_PATH)
        say(f"[+] Mirrored {summary['written']} runs to {summary['db_path']}")

    return SuiteResult(records, baseline_frame, tables, duplicates)


# Reporting -------------------------------------------------------------------

def _write(frame: pd.DataFrame, output_dir: str, name: str) -> None:
    frame.to_csv(os.path.join(output_dir, name), index=False, lineterminator="\n")


def _stat(values: Iterable[Optional[float]]) -> Tuple[float, float]:
    clean = [v for v in values if v is not None and not (isinstance(v, float) and np.isnan(v))]
    if not clean:
        return float("nan"), float("nan")
    return mean_and_sd(clean)


def aggregate_records(records: Sequence[RunRecord]) -> pd.DataFrame:
    groups: Dict[Tuple[str, int, str], List[RunRecord]] = {}
    for record in records:
        groups.setdefault((record.model, record.n_rows, record.algorithm), []).append(record)
    rows = []
    for (model, n_rows, algorithm), group in groups.items():
        ok = [r for r in group if r.status == STATUS_OK]
        f1_mean, f1_sd = _stat(r.f1 for r in ok)
        bsf_mean, bsf_sd = _stat(r.bsf for r in ok)
        nbic_mean, nbic_sd = _stat(r.normalized_score for r in ok)
        degree_mean, degree_sd = _stat(r.mean_degree for r in ok)
        rows.append({
            "model": model, "n_rows": n_rows, "algorithm": algorithm, "n_ok": len(ok),
            "n_timeout": len(group) - len(ok), "n_distinct_cpdags": len({r.cpdag_fingerprint for r in ok}),
            "f1_mean": f1_mean, "f1_sd": f1_sd, "bsf_mean": bsf_mean, "bsf_sd": bsf_sd,
            "precision_mean": _stat(r.precision for r in ok)[0], "recall_mean": _stat(r.recall for r in ok)[0],
            "nbic_mean": nbic_mean, "nbic_sd": nbic_sd, "degree_mean": degree_mean, "degree_sd": degree_sd,
        })
    return pd.DataFrame(rows, columns=AGGREGATE_COLUMNS)


def f1_series(aggregate: pd.DataFrame, model: str) -> pd.DataFrame:
    frame = aggregate[(aggregate["model"] == model) & aggregate["f1_mean"].notna()]
    frame = frame[["algorithm", "n_rows", "f1_mean", "f1_sd"]].copy()
    frame["f1_lower"] = frame["f1_mean"] - frame["f1_sd"]
    frame["f1_upper"] = frame["f1_mean"] + frame["f1_sd"]
    return frame.sort_values(["algorithm", "n_rows"], kind="stable").reset_index(drop=True)


def summary_table(aggregate: pd.DataFrame, algorithms: Sequence[str]) -> pd.DataFrame:
    rows = []
    for algorithm in algorithms:
        frame = aggregate[aggregate["algorithm"] == algorithm]
        rows.append({
            "algorithm": algorithm,
            "precision": frame["precision_mean"].mean(),
            "recall": frame["recall_mean"].mean(),
            "f1": frame["f1_mean"].mean(),
            "f1_sd": frame["f1_sd"].mean(),
            "bsf": frame["bsf_mean"].mean(),
            "nbic": frame["nbic_mean"].mean(),
            "nbic_sd": frame["nbic_sd"].mean(),
        })
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def report(records: Sequence[RunRecord], output_dir: str,
           baselines: Optional[pd.DataFrame] = None) -> Dict[str, pd.DataFrame]:
    """Write run, timing, aggregate, series and summary tables. Returns them keyed by file name."""
    if not records:
        raise ValueError("no run records to report")
    os.makedirs(output_dir, exist_ok=True)
    algorithms = list(dict.fromkeys(r.algorithm for r in records))
    models = list(dict.fromkeys(r.model for r in records))

    runs = pd.DataFrame([r.to_row() for r in records], columns=RUN_COLUMNS)
    timings = pd.DataFrame([{"model": r.model, "n_rows": r.n_rows, "algorithm": r.algorithm,
                             "randomization": r.randomization, "wall_time_s": r.wall_time_s} for r in records])
    learned = aggregate_records(records)
    aggregate = learned
    if baselines is not None and not baselines.empty:
        aggregate = pd.concat([learned, baselines.reindex(columns=AGGREGATE_COLUMNS)], ignore_index=True)

    tables = {"runs.csv": runs, "timings.csv": timings, "aggregate.csv": aggregate,
              "summary.csv": summary_table(learned, algorithms)}
    for model in models:
        tables[f"series_{model}.csv"] = f1_series(learned, model)
    for name, frame in tables.items():
        _write(frame, output_dir, name)
    return tables


# Instability demonstration -----------------------------------------------------

@dataclass
class InstabilityDemo:
    column_orders: Tuple[List[str], List[str]]
    change_logs: Tuple[List[ChangeRecord], List[ChangeRecord]]
    edges: Tuple[List[Tuple[str, str]], List[Tuple[str, str]]]
    shuffle_seed: int

    @property
    def differ(self) -> bool:
        return self.edges[0] != self.edges[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "shuffle_seed": self.shuffle_seed,
            "differ": self.differ,
            "runs": [
                {"column_order": order, "changes": [c.to_dict() for c in log], "edges": [list(e) for e in edges]}
                for order, log, edges in zip(self.column_orders, self.change_logs, self.edges)
            ],
        }


def column_order_instability(data: Dataset, shuffle_seed: int,
                             cfg: Optional[SearchConfig] = None) -> InstabilityDemo:
    """Standard HC on alphabetical columns and on one seeded column shuffle."""
    cfg = cfg or SearchConfig()
    alphabetical = data.reorder_columns(sorted(data.labels))
    shuffled, _ = alphabetical.shuffle_columns(shuffle_seed)
    orders, logs, edges = [], [], []
    for variant in (alphabetical, shuffled):
        result = learn(variant, HC, cfg)
        orders.append(list(variant.labels))
        logs.append(result.change_log)
        edges.append(sorted(result.dag.label_arcs()))
    return InstabilityDemo(tuple(orders), tuple(logs), tuple(edges), shuffle_seed)


def instability_demo(model: NetworkModel, n_rows: int, seed: int, tries: int = 1,
                     cfg: Optional[SearchConfig] = None) -> InstabilityDemo:
    """Sample the model once and compare HC under alphabetical and shuffled column orders.

    With tries > 1, successive shuffle seeds are tried until the final edge sets differ.
    """
    if tries < 1:
        raise ValueError("tries must be >= 1")
    data = sample(model, n_rows, seed)
    demo = None
    for attempt in range(tries):
        demo = column_order_instability(data, derive_seed(seed, "shuffle", attempt), cfg)
        if demo.differ:
            break
    return demo


__all__ = [
    "ExperimentConfig", "InstabilityDemo", "RunRecord", "SuiteResult", "aggregate_records",
    "column_order_instability", "derive_seed", "f1_series", "instability_demo", "report", "resolve_model_path",
    "run_suite", "summary_table",
]
