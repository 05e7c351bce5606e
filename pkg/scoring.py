"""
Scoring Module
Decomposable structure scores (categorical BIC, BDeu, linear-Gaussian BIC) with a
per-dataset node-score cache.

All sums go through math.fsum, so a node score is the same double no matter how the
rows, columns or variable names of the dataset have been shuffled.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from dataset import Dataset
from graph import Dag, NodeId

SIGMA2_FLOOR = 1e-12


class ScoreError(ValueError):
    """Base class for scoring failures."""


class InvalidParentSetError(ScoreError):
    """Parent set contains the node itself or an unknown variable."""


class ScoreConfigError(ScoreError):
    """Score parameters or score/data kind mismatch."""


class DegenerateFitError(ScoreError):
    """Regression could not be solved even through the pseudoinverse."""


class ScoreKind(str, Enum):
    BIC = "bic"
    BDEU = "bdeu"
    BIC_G = "bic-g"

    @property
    def continuous(self) -> bool:
        return self is ScoreKind.BIC_G


@dataclass(frozen=True)
class BdeuConfig:
    iss: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.iss) and self.iss > 0):
            raise ScoreConfigError(f"BDeu imaginary sample size must be > 0, got {self.iss}")


@dataclass(frozen=True)
class ContingencyCounts:
    """Counts N_ijk over the observed parent combinations (rows) and child states (columns).

    `q` is the number of possible parent combinations, observed or not.
    """
    counts: np.ndarray
    q: int
    r: int

    @property
    def n_ij(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ScoreValue:
    value: float
    node: NodeId
    parent_set: Tuple[NodeId, ...]


# Validation ----------------------------------------------------------------

def _canonical_parents(node: int, parents: Iterable, data: Dataset) -> Tuple[int, ...]:
    resolved = []
    for p in parents:
        try:
            resolved.append(data.resolve(p))
        except ValueError as exc:
            raise InvalidParentSetError(str(exc)) from exc
    if node in resolved:
        raise InvalidParentSetError(f"{data.labels[node]} cannot be its own parent")
    if len(set(resolved)) != len(resolved):
        raise InvalidParentSetError("parent set lists a variable twice")
    return tuple(sorted(resolved))


def _check_kind(kind: ScoreKind, data: Dataset) -> None:
    if kind.continuous == data.is_categorical:
        raise ScoreConfigError(f"score {kind.value} cannot be used with {data.kind} data")


def _resolve_node(node, data: Dataset) -> int:
    try:
        return data.resolve(node)
    except ValueError as exc:
        raise InvalidParentSetError(str(exc)) from exc


def _score_value(value: float, node: int, parents: Sequence[int], data: Dataset) -> ScoreValue:
    labels = data.labels
    return ScoreValue(value, NodeId(node, labels[node]), tuple(NodeId(p, labels[p]) for p in parents))


# Categorical scores --------------------------------------------------------

# parent-combination codes are built in int64 below this many combinations
_COMBO_CODE_LIMIT = 2 ** 62


def contingency(node, parents, data: Dataset) -> ContingencyCounts:
    """N_ijk table for `node` given `parents`; unobserved parent combinations are left out."""
    if not data.is_categorical:
        raise ScoreConfigError("contingency counts need categorical data")
    i = _resolve_node(node, data)
    pa = _canonical_parents(i, parents, data)
    return _contingency(data, i, pa)


def _contingency(data: Dataset, i: int, pa: Tuple[int, ...]) -> ContingencyCounts:
    cards = data.cardinalities
    r = cards[i]
    if not pa:
        counts = np.bincount(data.column(i), minlength=r).reshape(1, r)
        return ContingencyCounts(counts, 1, r)
    q = math.prod(cards[p] for p in pa)
    if q < _COMBO_CODE_LIMIT:
        combo = np.zeros(data.n_rows, dtype=np.int64)
        for p in pa:
            combo = combo * cards[p] + data.column(p)
        observed, row = np.unique(combo, return_inverse=True)
    else:
        # mixed-radix codes would overflow int64
        observed, row = np.unique(np.column_stack([data.column(p) for p in pa]), axis=0, return_inverse=True)
    counts = np.zeros((len(observed), r), dtype=np.int64)
    np.add.at(counts, (row.reshape(-1), data.column(i)), 1)
    return ContingencyCounts(counts, q, r)


def _bic_from_counts(table: ContingencyCounts, n_rows: int) -> float:
    counts = table.counts.astype(np.float64)
    n_ij = np.broadcast_to(counts.sum(axis=1, keepdims=True), counts.shape)
    mask = counts > 0
    terms = counts[mask] * np.log(counts[mask] / n_ij[mask])
    log_likelihood = math.fsum(terms.tolist())
    penalty = 0.5 * math.log(n_rows) * table.q * (table.r - 1)
    return log_likelihood - penalty


def _bdeu_from_counts(table: ContingencyCounts, iss: float) -> float:
    alpha_j = iss / table.q
    alpha_jk = iss / (table.q * table.r)
    counts = table.counts.astype(np.float64)
    n_ij = counts.sum(axis=1)
    terms: List[float] = (gammaln(alpha_j) - gammaln(n_ij + alpha_j)).tolist()
    nonzero = counts[counts > 0]
    terms.extend((gammaln(nonzero + alpha_jk) - gammaln(alpha_jk)).tolist())
    return math.fsum(terms)


def node_score_bic_cat(node, parents, data: Dataset) -> ScoreValue:
    _check_kind(ScoreKind.BIC, data)
    i = _resolve_node(node, data)
    pa = _canonical_parents(i, parents, data)
    return _score_value(_bic_from_counts(_contingency(data, i, pa), data.n_rows), i, pa, data)


def node_score_bdeu(node, parents, data: Dataset, cfg: Optional[BdeuConfig] = None) -> ScoreValue:
    cfg = cfg or BdeuConfig()
    _check_kind(ScoreKind.BDEU, data)
    i = _resolve_node(node, data)
    pa = _canonical_parents(i, parents, data)
    return _score_value(_bdeu_from_counts(_contingency(data, i, pa), cfg.iss), i, pa, data)


# Linear-Gaussian score -----------------------------------------------------

class GaussianStats:
    """Centered cross-product matrix of a continuous dataset, accumulated with fsum."""

    def __init__(self, data: Dataset):
        values = data.values
        n_rows = data.n_rows
        means = [math.fsum(values[:, j].tolist()) / n_rows for j in range(data.n)]
        centered = values - np.asarray(means)
        cross = np.empty((data.n, data.n), dtype=np.float64)
        for a in range(data.n):
            for b in range(a, data.n):
                cross[a, b] = cross[b, a] = math.fsum((centered[:, a] * centered[:, b]).tolist())
        self.cross = cross
        self.n_rows = n_rows
        self.rank = data.content_rank

    def residual_ss(self, i: int, parents: Sequence[int]) -> float:
        if not parents:
            return float(self.cross[i, i])
        # fixed parent order so that the same numbers reach the solver after column shuffles
        pa = sorted(parents, key=lambda p: self.rank[p])
        s_pp = self.cross[np.ix_(pa, pa)]
        s_py = self.cross[pa, i]
        try:
            beta = np.linalg.pinv(s_pp) @ s_py
        except np.linalg.LinAlgError as exc:
            raise DegenerateFitError(f"regression on {len(pa)} parents failed: {exc}") from exc
        rss = float(self.cross[i, i] - s_py @ beta)
        if not math.isfinite(rss):
            raise DegenerateFitError("regression produced a non-finite residual")
        return rss

    def score(self, i: int, parents: Sequence[int]) -> float:
        n = self.n_rows
        if n <= len(parents) + 1:
            raise ScoreError(f"linear-Gaussian BIC needs more than {len(parents) + 1} rows, got {n}")
        sigma2 = max(self.residual_ss(i, parents) / n, SIGMA2_FLOOR)
        return -0.5 * n * (math.log(2.0 * math.pi * sigma2) + 1.0) - 0.5 * math.log(n) * (len(parents) + 2)


def node_score_bic_gauss(node, parents, data: Dataset, stats: Optional[GaussianStats] = None) -> ScoreValue:
    _check_kind(ScoreKind.BIC_G, data)
    i = _resolve_node(node, data)
    pa = _canonical_parents(i, parents, data)
    stats = stats or GaussianStats(data)
    return _score_value(stats.score(i, pa), i, pa, data)


# Cache and scorer ----------------------------------------------------------

class ScoreCache:
    """(node, sorted parent tuple) -> score. Reads are lock-free; insertion takes the lock."""

    def __init__(self):
        self._values: Dict[Tuple[int, Tuple[int, ...]], float] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key: Tuple[int, Tuple[int, ...]]) -> Optional[float]:
        value = self._values.get(key)
        if value is None:
            self.misses += 1
        else:
            self.hits += 1
        return value

    def put(self, key: Tuple[int, Tuple[int, ...]], value: float) -> float:
        with self._lock:
            return self._values.setdefault(key, value)

    def __len__(self) -> int:
        return len(self._values)

    def stats(self) -> Dict[str, int]:
        return {"entries": len(self._values), "hits": self.hits, "misses": self.misses}


class NodeScorer:
    """Cached node scores for one (dataset, score kind) pair."""

    def __init__(self, data: Dataset, kind=ScoreKind.BIC, bdeu: Optional[BdeuConfig] = None):
        self.kind = ScoreKind(kind)
        _check_kind(self.kind, data)
        self.data = data
        self.bdeu = bdeu or BdeuConfig()
        self.cache = ScoreCache()
        self._gauss = GaussianStats(data) if self.kind is ScoreKind.BIC_G else None

    @property
    def n_rows(self) -> int:
        return self.data.n_rows

    def score(self, node: int, parents: Iterable[int]) -> float:
        key = (int(node), tuple(sorted(int(p) for p in parents)))
        cached = self.cache.get(key)
        if cached is not None:
            return cached
        i, pa = key
        if i in pa:
            raise InvalidParentSetError(f"{self.data.labels[i]} cannot be its own parent")
        if self.kind is ScoreKind.BIC:
            value = _bic_from_counts(_contingency(self.data, i, pa), self.data.n_rows)
        elif self.kind is ScoreKind.BDEU:
            value = _bdeu_from_counts(_contingency(self.data, i, pa), self.bdeu.iss)
        else:
            value = self._gauss.score(i, pa)
        return self.cache.put(key, value)

    def score_value(self, node, parents) -> ScoreValue:
        i = _resolve_node(node, self.data)
        pa = _canonical_parents(i, parents, self.data)
        return _score_value(self.score(i, pa), i, pa, self.data)


# Whole-graph scores ----------------------------------------------------------

def _aligned(dag: Dag, data: Dataset) -> Dag:
    if dag.labels == data.labels:
        return dag
    if sorted(dag.labels) != sorted(data.labels):
        raise ScoreError("graph nodes do not match the dataset variables")
    return dag.reindexed(data.labels)


def dag_score(dag: Dag, data: Dataset, score_kind=ScoreKind.BIC, cache: Optional[NodeScorer] = None,
              bdeu: Optional[BdeuConfig] = None) -> float:
    scorer = cache if cache is not None else NodeScorer(data, score_kind, bdeu)
    if scorer.data is not data and scorer.data != data:
        raise ScoreError("scorer was built for a different dataset")
    dag = _aligned(dag, data)
    return math.fsum(scorer.score(i, dag.parents(i)) for i in range(dag.n))


def normalized_score(total: float, n_rows: int) -> float:
    if n_rows < 1:
        raise ScoreError(f"sample size must be >= 1, got {n_rows}")
    return total / n_rows


__all__ = [
    "BdeuConfig", "ContingencyCounts", "DegenerateFitError", "GaussianStats", "InvalidParentSetError",
    "NodeScorer", "ScoreCache", "ScoreConfigError", "ScoreError", "ScoreKind", "ScoreValue", "contingency",
    "dag_score", "node_score_bdeu", "node_score_bic_cat", "node_score_bic_gauss", "normalized_score",
]
