"""
Structural Metrics
Compares a learned graph with the true graph at CPDAG level and aggregates repeated runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from dataset import Dataset
from graph import Dag, Pdag, dag_to_cpdag, mean_node_degree
from scoring import ScoreKind, dag_score, normalized_score


class MetricError(ValueError):
    """Base class for evaluation failures."""


class LabelMismatchError(MetricError):
    """Learned and true graphs are over different variables."""


class UndefinedMetricError(MetricError):
    """A metric's denominator is zero for this truth graph."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int
    e_true: int
    m_true: int


def _as_pdag(graph: Union[Dag, Pdag]) -> Pdag:
    return Pdag.from_dag(graph) if isinstance(graph, Dag) else graph


def confusion(learned: Union[Dag, Pdag], truth: Union[Dag, Pdag]) -> ConfusionCounts:
    """Edge-by-edge comparison of two graphs as given (no equivalence-class conversion)."""
    learned, truth = _as_pdag(learned), _as_pdag(truth)
    if sorted(learned.labels) != sorted(truth.labels):
        raise LabelMismatchError("learned and true graphs have different node labels")
    if learned.labels != truth.labels:
        learned = learned.reindexed(truth.labels)

    tp = fp = fn = tn = 0
    n = truth.n
    for a in range(n):
        for b in range(a + 1, n):
            got, want = learned.edge(a, b), truth.edge(a, b)
            if got is None and want is None:
                tn += 1
            elif got == want:
                tp += 1
            elif want is None:
                fp += 1
            elif got is None:
                fn += 1
            else:
                fp += 1
                fn += 1
    e_true = truth.n_edges
    return ConfusionCounts(tp, fp, fn, tn, e_true, n * (n - 1) // 2 - e_true)


def precision(counts: ConfusionCounts) -> float:
    return counts.tp / (counts.tp + counts.fp) if counts.tp else 0.0


def recall(counts: ConfusionCounts) -> float:
    return counts.tp / (counts.tp + counts.fn) if counts.tp else 0.0


def f1(counts: ConfusionCounts) -> float:
    if counts.tp == 0:
        return 0.0
    p, r = precision(counts), recall(counts)
    return 2.0 * p * r / (p + r)


def bsf(counts: ConfusionCounts) -> float:
    """Balanced scoring function; 0 for the empty graph, 1 for a perfect match."""
    if counts.e_true == 0 or counts.m_true == 0:
        raise UndefinedMetricError("BSF needs at least one true edge and one absent pair")
    e, m = counts.e_true, counts.m_true
    return 0.5 * (counts.tp / e + counts.tn / m - counts.fp / m - counts.fn / e)


@dataclass
class MetricReport:
    precision: float
    recall: float
    f1: float
    bsf: Optional[float]
    normalized_bic: Optional[float] = None
    mean_degree: Optional[float] = None
    n_runs: int = 1
    sd: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "sd"}
        for name, value in sorted(self.sd.items()):
            out[f"{name}_sd"] = value
        return out


_AGGREGATED = ("precision", "recall", "f1", "bsf", "normalized_bic", "mean_degree")


def mean_and_sd(values: Sequence[float]) -> tuple:
    """Mean and population SD; SD is exactly 0 when every value is the same double."""
    if not values:
        raise MetricError("cannot aggregate an empty sequence")
    first = values[0]
    if all(v == first for v in values):
        return float(first), 0.0
    return math.fsum(values) / len(values), float(np.std(np.asarray(values, dtype=np.float64), ddof=0))


def aggregate(runs: Sequence[MetricReport]) -> MetricReport:
    if not runs:
        raise MetricError("aggregate needs at least one run")
    means: Dict[str, Optional[float]] = {}
    sds: Dict[str, float] = {}
    for name in _AGGREGATED:
        values: List[float] = [getattr(r, name) for r in runs if getattr(r, name) is not None]
        if not values:
            means[name] = None
            continue
        means[name], sds[name] = mean_and_sd(values)
    return MetricReport(n_runs=len(runs), sd=sds, **means)


def evaluate(learned: Dag, truth: Dag, data: Optional[Dataset] = None,
             score_kind: ScoreKind = ScoreKind.BIC) -> MetricReport:
    """CPDAG-level report for a learned DAG; adds normalized score when data is given."""
    if sorted(learned.labels) != sorted(truth.labels):
        raise LabelMismatchError("learned and true graphs have different node labels")
    learned = learned.reindexed(truth.labels) if learned.labels != truth.labels else learned
    counts = confusion(dag_to_cpdag(learned), dag_to_cpdag(truth))
    try:
        balanced: Optional[float] = bsf(counts)
    except UndefinedMetricError:
        balanced = None
    report = MetricReport(precision(counts), recall(counts), f1(counts), balanced,
                          mean_degree=mean_node_degree(learned))
    if data is not None:
        report.normalized_bic = normalized_score(dag_score(learned, data, score_kind), data.n_rows)
    return report


__all__ = [
    "ConfusionCounts", "LabelMismatchError", "MetricError", "MetricReport", "UndefinedMetricError",
    "aggregate", "bsf", "confusion", "evaluate", "f1", "mean_and_sd", "precision", "recall",
]
