"""
Structure Search
Hill climbing and Tabu search over DAGs, plus the order-stable variants that take every
tie-breaking decision from a processing order derived from the data itself.

Candidate changes are enumerated deletes first, then reversals, then additions, each
group ordered by the tie order position of (parent, child). A later candidate only
displaces the running best when its delta is larger by more than DELTA_TOLERANCE, so
equal deltas always go to the earlier candidate.
"""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx

from config import Config
from dataset import Dataset, value_counts_rendition
from graph import KIND_RANK, ChangeKind, Dag, DagChange, GraphError, NodeId, topological_order
from scoring import BdeuConfig, NodeScorer, ScoreKind, dag_score

IMPROVEMENT_THRESHOLD = 1e-9
DELTA_TOLERANCE = 1e-8

HC = "hc"
TABU = "tabu"
HC_STABLE = "hc-stable"
TABU_STABLE = "tabu-stable"
HC_DEC = "hc-dec"
HC_INC = "hc-inc"
TABU_DEC = "tabu-dec"
TABU_INC = "tabu-inc"
ALGORITHMS = (HC, TABU, HC_STABLE, TABU_STABLE, HC_DEC, HC_INC, TABU_DEC, TABU_INC)

DECREASING = "decreasing"
INCREASING = "increasing"


class SearchError(RuntimeError):
    """Base class for search failures."""


class IterationCapError(SearchError):
    """The safety cap on iterations was reached."""


class SearchTimeout(SearchError):
    """The run exceeded its wall-clock deadline."""


def deltas_equal(a: float, b: float) -> bool:
    return abs(a - b) <= DELTA_TOLERANCE * max(1.0, abs(a))


@dataclass(frozen=True)
class SearchConfig:
    score_kind: ScoreKind = ScoreKind.BIC
    tabu_len: int = Config.TABU_LEN
    noinc: int = Config.NOINC
    max_iter: int = Config.MAX_ITER
    bdeu_iss: float = Config.BDEU_ISS
    time_limit_s: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "score_kind", ScoreKind(self.score_kind))
        if self.tabu_len < 1:
            raise ValueError(f"tabu_len must be >= 1, got {self.tabu_len}")
        if self.noinc < 1:
            raise ValueError(f"noinc must be >= 1, got {self.noinc}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.time_limit_s is not None and self.time_limit_s <= 0:
            raise ValueError(f"time_limit_s must be positive, got {self.time_limit_s}")

    def scorer(self, data: Dataset) -> NodeScorer:
        return NodeScorer(data, self.score_kind, BdeuConfig(self.bdeu_iss))


@dataclass(frozen=True)
class SortKey:
    uncond: float
    cond_mean: float
    rendition: str

    def as_tuple(self) -> Tuple[float, float, str]:
        return (self.uncond, self.cond_mean, self.rendition)


@dataclass(frozen=True)
class StableOrder:
    order: Tuple[NodeId, ...]
    branch: str
    dec_order: Tuple[NodeId, ...]
    keys: Tuple[SortKey, ...]

    @property
    def inc_order(self) -> Tuple[NodeId, ...]:
        return tuple(reversed(self.dec_order))

    @property
    def labels(self) -> List[str]:
        return [node.label for node in self.order]


@dataclass(frozen=True)
class ChangeRecord:
    iteration: int
    kind: str
    parent: str
    child: str
    delta: float
    score: float
    arbitrary: bool

    def to_dict(self) -> Dict[str, object]:
        return {
            "iteration": self.iteration,
            "kind": self.kind,
            "arc": [self.parent, self.child],
            "delta": self.delta,
            "score": self.score,
            "arbitrary": self.arbitrary,
        }


@dataclass
class SearchResult:
    algorithm: str
    dag: Dag
    score: float
    iterations: int
    change_log: List[ChangeRecord] = field(default_factory=list)
    stable_order: Optional[StableOrder] = None
    cache_stats: Dict[str, int] = field(default_factory=dict)


class TabuList:
    """Fingerprints of the most recently visited DAGs."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("tabu list capacity must be >= 1")
        self.capacity = capacity
        self._queue: Deque[Tuple[Tuple[int, int], ...]] = deque()

    @staticmethod
    def fingerprint(arcs: Iterable[Tuple[int, int]]) -> Tuple[Tuple[int, int], ...]:
        return tuple(sorted(arcs))

    def add(self, arcs: Iterable[Tuple[int, int]]) -> None:
        self._queue.append(self.fingerprint(arcs))
        while len(self._queue) > self.capacity:
            self._queue.popleft()

    def __contains__(self, arcs) -> bool:
        return self.fingerprint(arcs) in self._queue

    def __len__(self) -> int:
        return len(self._queue)


class DeltaTable:
    """Cached score deltas keyed by change; entries are dropped when a parent set they read changes."""

    def __init__(self, scorer: NodeScorer, parents: Sequence[Set[int]]):
        self._scorer = scorer
        self._parents = parents
        self._deltas: Dict[DagChange, float] = {}

    def __len__(self) -> int:
        return len(self._deltas)

    def __contains__(self, change: DagChange) -> bool:
        return change in self._deltas

    def compute(self, change: DagChange) -> float:
        score = self._scorer.score
        u, v = change.parent, change.child
        pa_v = self._parents[v]
        current_v = score(v, pa_v)
        if change.kind is ChangeKind.ADD:
            return score(v, pa_v | {u}) - current_v
        if change.kind is ChangeKind.DELETE:
            return score(v, pa_v - {u}) - current_v
        pa_u = self._parents[u]
        return math.fsum([score(v, pa_v - {u}), score(u, pa_u | {v}), -current_v, -score(u, pa_u)])

    def delta(self, change: DagChange) -> float:
        value = self._deltas.get(change)
        if value is None:
            value = self._deltas[change] = self.compute(change)
        return value

    def invalidate(self, nodes: Iterable[int]) -> None:
        touched = set(nodes)
        stale = [c for c in self._deltas
                 if c.child in touched or (c.kind is ChangeKind.REVERSE and c.parent in touched)]
        for change in stale:
            del self._deltas[change]

    def verify(self, dag: Dag, tolerance: float = 1e-9) -> List[Tuple[DagChange, float, float]]:
        """Stored deltas that disagree with a full rescoring of `dag` (empty when consistent)."""
        base = dag_score(dag, self._scorer.data, self._scorer.kind, self._scorer)
        mismatches = []
        for change, stored in sorted(self._deltas.items(), key=lambda kv: (KIND_RANK[kv[0].kind], kv[0].arc)):
            try:
                changed = dag.apply(change)
            except GraphError:
                continue
            fresh = dag_score(changed, self._scorer.data, self._scorer.kind, self._scorer) - base
            if abs(fresh - stored) > tolerance:
                mismatches.append((change, stored, fresh))
        return mismatches


# Processing orders -----------------------------------------------------------

def sort_key(variable, data: Dataset, score_kind=ScoreKind.BIC, scorer: Optional[NodeScorer] = None) -> SortKey:
    scorer = scorer or NodeScorer(data, score_kind)
    i = data.resolve(variable)
    uncond = scorer.score(i, ())
    others = [v for v in range(data.n) if v != i]
    cond_mean = math.fsum(scorer.score(i, (v,)) / len(others) for v in others) if others else 0.0
    rendition = value_counts_rendition(data, i) if data.is_categorical else ""
    return SortKey(uncond, cond_mean, rendition)


def score_order(data: Dataset, score_kind=ScoreKind.BIC,
                scorer: Optional[NodeScorer] = None) -> Tuple[List[int], Tuple[SortKey, ...]]:
    """Variables sorted by decreasing sort key; equal keys keep column order."""
    scorer = scorer or NodeScorer(data, score_kind)
    keys = tuple(sort_key(i, data, score_kind, scorer) for i in range(data.n))
    dec = sorted(range(data.n), key=lambda i: keys[i].as_tuple(), reverse=True)
    return dec, keys


def get_stable_order(data: Dataset, score_kind=ScoreKind.BIC, cfg: Optional[SearchConfig] = None,
                     scorer: Optional[NodeScorer] = None, deadline: Optional[float] = None) -> StableOrder:
    cfg = cfg or SearchConfig(score_kind=score_kind)
    scorer = scorer or cfg.scorer(data)
    dec, keys = score_order(data, cfg.score_kind, scorer)
    inc = list(reversed(dec))
    dec_run = _Search(data, cfg, scorer, dec, deadline=deadline).run(use_tabu=False)
    inc_run = _Search(data, cfg, scorer, inc, deadline=deadline).run(use_tabu=False)
    if inc_run.score > dec_run.score:
        branch, winner, run_order = INCREASING, inc_run.dag, inc
    else:
        branch, winner, run_order = DECREASING, dec_run.dag, dec
    nodes = data_nodes(data)
    return StableOrder(
        order=tuple(topological_order(winner, run_order)),
        branch=branch,
        dec_order=tuple(nodes[i] for i in dec),
        keys=keys,
    )


def data_nodes(data: Dataset) -> Tuple[NodeId, ...]:
    return tuple(NodeId(i, label) for i, label in enumerate(data.labels))


# Search engine ---------------------------------------------------------------

class _Search:
    def __init__(self, data: Dataset, cfg: SearchConfig, scorer: NodeScorer, tie_order: Sequence[int],
                 consistency_order: Optional[Sequence[int]] = None, deadline: Optional[float] = None):
        n = data.n
        if sorted(tie_order) != list(range(n)):
            raise ValueError("tie order must be a permutation of the dataset's variables")
        self.data = data
        self.cfg = cfg
        self.scorer = scorer
        self.deadline = deadline
        self.pos = {node: p for p, node in enumerate(tie_order)}
        self.consistency = ({node: p for p, node in enumerate(consistency_order)}
                            if consistency_order is not None else None)
        self.parents: List[Set[int]] = [set() for _ in range(n)]
        self.arcs: Set[Tuple[int, int]] = set()
        self.graph = nx.DiGraph()
        self.graph.add_nodes_from(range(n))
        self.deltas = DeltaTable(scorer, self.parents)
        self.ordered_pairs = sorted(((u, v) for u in range(n) for v in range(n) if u != v),
                                    key=lambda uv: (self.pos[uv[0]], self.pos[uv[1]]))

    # state ------------------------------------------------------------------
    def score(self) -> float:
        return math.fsum(self.scorer.score(i, self.parents[i]) for i in range(self.data.n))

    def dag(self) -> Dag:
        return Dag(self.data.labels, self.arcs)

    def after(self, change: DagChange) -> FrozenSet[Tuple[int, int]]:
        arcs = set(self.arcs)
        if change.kind is ChangeKind.ADD:
            arcs.add(change.arc)
        elif change.kind is ChangeKind.DELETE:
            arcs.discard(change.arc)
        else:
            arcs.discard(change.arc)
            arcs.add((change.child, change.parent))
        return frozenset(arcs)

    def apply(self, change: DagChange) -> None:
        u, v = change.parent, change.child
        if change.kind is ChangeKind.ADD:
            self.arcs.add((u, v))
            self.parents[v].add(u)
            self.graph.add_edge(u, v)
            touched = (v,)
        elif change.kind is ChangeKind.DELETE:
            self.arcs.discard((u, v))
            self.parents[v].discard(u)
            self.graph.remove_edge(u, v)
            touched = (v,)
        else:
            self.arcs.discard((u, v))
            self.parents[v].discard(u)
            self.graph.remove_edge(u, v)
            self.arcs.add((v, u))
            self.parents[u].add(v)
            self.graph.add_edge(v, u)
            touched = (u, v)
        self.deltas.invalidate(touched)

    # candidates -------------------------------------------------------------
    def candidates(self) -> Tuple[List[DagChange], List[Set[int]]]:
        descendants = [nx.descendants(self.graph, v) for v in range(self.data.n)]
        existing = sorted(self.arcs, key=lambda uv: (self.pos[uv[0]], self.pos[uv[1]]))
        out = [DagChange(ChangeKind.DELETE, u, v) for u, v in existing]
        for u, v in existing:
            # reversal is acyclic unless another directed path u ~> v exists
            if not any(v in descendants[c] for c in self.graph.successors(u) if c != v):
                out.append(DagChange(ChangeKind.REVERSE, u, v))
        for u, v in self.ordered_pairs:
            if (u, v) in self.arcs or (v, u) in self.arcs or u in descendants[v]:
                continue
            out.append(DagChange(ChangeKind.ADD, u, v))
        return out, descendants

    def add_admissible(self, u: int, v: int, descendants: List[Set[int]]) -> bool:
        return (u, v) not in self.arcs and (v, u) not in self.arcs and u not in descendants[v]

    def select(self, tabu: Optional[TabuList]) -> Tuple[Optional[DagChange], float, List[Set[int]]]:
        candidates, descendants = self.candidates()
        best: Optional[DagChange] = None
        best_delta = -math.inf
        for change in candidates:
            delta = self.deltas.delta(change)
            if best is not None and delta <= best_delta + DELTA_TOLERANCE * max(1.0, abs(best_delta)):
                continue
            if tabu is not None and self.after(change) in tabu:
                continue
            best, best_delta = change, delta

        if best is not None and self.consistency is not None and best.kind is ChangeKind.ADD:
            equiv = self.equivalent_addition(best, best_delta, descendants, tabu)
            if equiv is not None and self.consistency[equiv.parent] < self.consistency[equiv.child]:
                best, best_delta = equiv, self.deltas.delta(equiv)
        return best, best_delta, descendants

    def equivalent_addition(self, change: DagChange, delta: float, descendants: List[Set[int]],
                            tabu: Optional[TabuList]) -> Optional[DagChange]:
        """The opposite-orientation addition of the same edge, if it is admissible with an equal delta."""
        reverse = DagChange(ChangeKind.ADD, change.child, change.parent)
        if not self.add_admissible(reverse.parent, reverse.child, descendants):
            return None
        if tabu is not None and self.after(reverse) in tabu:
            return None
        return reverse if deltas_equal(delta, self.deltas.delta(reverse)) else None

    def check_limits(self, iteration: int) -> None:
        if iteration > self.cfg.max_iter:
            raise IterationCapError(f"search exceeded {self.cfg.max_iter} iterations")
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise SearchTimeout("search exceeded its time limit")

    def record(self, iteration: int, change: DagChange, delta: float, score: float,
               descendants: List[Set[int]]) -> ChangeRecord:
        arbitrary = (change.kind is ChangeKind.ADD
                     and self.equivalent_addition(change, delta, descendants, None) is not None)
        labels = self.data.labels
        return ChangeRecord(iteration, change.kind.value, labels[change.parent], labels[change.child],
                            delta, score, arbitrary)

    # loops ------------------------------------------------------------------
    def run(self, use_tabu: bool) -> SearchResult:
        return self._tabu_loop() if use_tabu else self._hc_loop()

    def _hc_loop(self) -> SearchResult:
        score = self.score()
        log: List[ChangeRecord] = []
        iteration = 0
        while True:
            change, delta, descendants = self.select(None)
            if change is None or delta <= IMPROVEMENT_THRESHOLD:
                break
            iteration += 1
            self.check_limits(iteration)
            self.apply(change)
            score = self.score()
            log.append(self.record(iteration, change, delta, score, descendants))
        return SearchResult("", self.dag(), score, iteration, log, cache_stats=self.scorer.cache.stats())

    def _tabu_loop(self) -> SearchResult:
        tabu = TabuList(self.cfg.tabu_len)
        tabu.add(self.arcs)
        score = self.score()
        best_arcs, best_score = frozenset(self.arcs), score
        log: List[ChangeRecord] = []
        iteration = 0
        stale = 0
        # stale counts iterations since the best score last improved, not since any score increase
        while stale < self.cfg.noinc:
            change, delta, descendants = self.select(tabu)
            if change is None:
                break
            iteration += 1
            self.check_limits(iteration)
            self.apply(change)
            tabu.add(self.arcs)
            score = self.score()
            log.append(self.record(iteration, change, delta, score, descendants))
            if score > best_score:
                best_arcs, best_score = frozenset(self.arcs), score
                stale = 0
            else:
                stale += 1
        return SearchResult("", Dag(self.data.labels, best_arcs), best_score, iteration, log,
                            cache_stats=self.scorer.cache.stats())


# Public learners -------------------------------------------------------------

def _tie_indices(data: Dataset, tie_order: Optional[Sequence]) -> List[int]:
    if tie_order is None:
        return list(range(data.n))
    return [data.resolve(node) for node in tie_order]


def _deadline(cfg: SearchConfig) -> Optional[float]:
    return time.monotonic() + cfg.time_limit_s if cfg.time_limit_s is not None else None


def hc(data: Dataset, cfg: Optional[SearchConfig] = None, tie_order: Optional[Sequence] = None) -> Dag:
    cfg = cfg or SearchConfig()
    return _Search(data, cfg, cfg.scorer(data), _tie_indices(data, tie_order),
                   deadline=_deadline(cfg)).run(use_tabu=False).dag


def tabu(data: Dataset, cfg: Optional[SearchConfig] = None, tie_order: Optional[Sequence] = None) -> Dag:
    cfg = cfg or SearchConfig()
    return _Search(data, cfg, cfg.scorer(data), _tie_indices(data, tie_order),
                   deadline=_deadline(cfg)).run(use_tabu=True).dag


def hc_stable(data: Dataset, cfg: Optional[SearchConfig] = None) -> Dag:
    return learn(data, HC_STABLE, cfg).dag


def tabu_stable(data: Dataset, cfg: Optional[SearchConfig] = None) -> Dag:
    return learn(data, TABU_STABLE, cfg).dag


def learn(data: Dataset, algorithm: str, cfg: Optional[SearchConfig] = None,
          scorer: Optional[NodeScorer] = None) -> SearchResult:
    """Run one of ALGORITHMS and return the learned DAG with its score and change log."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
    cfg = cfg or SearchConfig()
    scorer = scorer or cfg.scorer(data)
    deadline = _deadline(cfg)
    use_tabu = algorithm.startswith(TABU)
    stable: Optional[StableOrder] = None

    if algorithm in (HC, TABU):
        search = _Search(data, cfg, scorer, list(range(data.n)), deadline=deadline)
    elif algorithm in (HC_STABLE, TABU_STABLE):
        stable = get_stable_order(data, cfg.score_kind, cfg, scorer, deadline)
        order = [node.index for node in stable.order]
        search = _Search(data, cfg, scorer, order, consistency_order=order, deadline=deadline)
    else:
        dec, keys = score_order(data, cfg.score_kind, scorer)
        increasing = algorithm.endswith("-inc")
        order = list(reversed(dec)) if increasing else dec
        nodes = data_nodes(data)
        stable = StableOrder(tuple(nodes[i] for i in order), INCREASING if increasing else DECREASING,
                             tuple(nodes[i] for i in dec), keys)
        search = _Search(data, cfg, scorer, order, consistency_order=order, deadline=deadline)

    result = search.run(use_tabu)
    result.algorithm = algorithm
    result.stable_order = stable
    return result


__all__ = [
    "ALGORITHMS", "ChangeRecord", "DeltaTable", "IterationCapError", "SearchConfig", "SearchError",
    "SearchResult", "SearchTimeout", "SortKey", "StableOrder", "TabuList", "deltas_equal", "get_stable_order",
    "hc", "hc_stable", "learn", "score_order", "sort_key", "tabu", "tabu_stable",
]
