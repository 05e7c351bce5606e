"""
Graph Core
Directed acyclic graphs, partially directed graphs and equivalence-class conversion.

Nodes are addressed by a dense integer index into a tuple of labels. Anything that
iterates over nodes or arcs on the way to an output does so in index order (or in
an explicitly supplied order), never in hash order.

Text format (used for graph files and for CPDAG fingerprints):
    nodes: a,b,c
    a -> b
    b -- c
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx

Arc = Tuple[int, int]


class GraphError(ValueError):
    """Structural problem with a graph."""


class CycleError(GraphError):
    """Raised when an operation needs an acyclic graph and gets a cyclic one."""


class InvalidChangeError(GraphError):
    """Raised when a change cannot be applied to a graph."""


@dataclass(frozen=True, order=True)
class NodeId:
    index: int
    label: str


class ChangeKind(str, Enum):
    DELETE = "delete"
    REVERSE = "reverse"
    ADD = "add"


# Canonical enumeration rank of change kinds
KIND_RANK: Dict[ChangeKind, int] = {ChangeKind.DELETE: 0, ChangeKind.REVERSE: 1, ChangeKind.ADD: 2}


@dataclass(frozen=True)
class DagChange:
    kind: ChangeKind
    parent: int
    child: int

    @property
    def arc(self) -> Arc:
        return (self.parent, self.child)

    def describe(self, labels: Sequence[str]) -> str:
        return f"{self.kind.value} {labels[self.parent]} -> {labels[self.child]}"


class Dag:
    """Directed graph over labelled nodes. Acyclicity is checked by the operations that need it."""

    __slots__ = ("_labels", "_arcs", "_parents", "_index")

    def __init__(self, labels: Sequence[str], arcs: Iterable[Arc] = ()):
        labels = tuple(str(label) for label in labels)
        if len(set(labels)) != len(labels):
            raise GraphError("node labels must be unique")
        n = len(labels)
        arc_set = set()
        for u, v in arcs:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"arc ({u}, {v}) refers to a node outside [0, {n})")
            if u == v:
                raise GraphError(f"self-loop on {labels[u]}")
            if (u, v) in arc_set:
                raise GraphError(f"duplicate arc {labels[u]} -> {labels[v]}")
            arc_set.add((u, v))
        parents: List[List[int]] = [[] for _ in range(n)]
        for u, v in arc_set:
            parents[v].append(u)
        self._labels = labels
        self._arcs: FrozenSet[Arc] = frozenset(arc_set)
        self._parents = tuple(tuple(sorted(p)) for p in parents)
        self._index = {label: i for i, label in enumerate(labels)}

    # Construction helpers -------------------------------------------------
    @classmethod
    def empty(cls, labels: Sequence[str]) -> "Dag":
        return cls(labels)

    @classmethod
    def from_label_arcs(cls, labels: Sequence[str], arcs: Iterable[Tuple[str, str]]) -> "Dag":
        index = {label: i for i, label in enumerate(labels)}
        try:
            return cls(labels, [(index[u], index[v]) for u, v in arcs])
        except KeyError as exc:
            raise GraphError(f"arc refers to unknown node {exc.args[0]!r}") from exc

    # Accessors -------------------------------------------------------------
    @property
    def labels(self) -> Tuple[str, ...]:
        return self._labels

    @property
    def n(self) -> int:
        return len(self._labels)

    @property
    def nodes(self) -> Tuple[NodeId, ...]:
        return tuple(NodeId(i, label) for i, label in enumerate(self._labels))

    @property
    def arcs(self) -> FrozenSet[Arc]:
        return self._arcs

    def sorted_arcs(self) -> List[Arc]:
        return sorted(self._arcs)

    def label_arcs(self) -> List[Tuple[str, str]]:
        return [(self._labels[u], self._labels[v]) for u, v in self.sorted_arcs()]

    def index_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError as exc:
            raise GraphError(f"unknown node {label!r}") from exc

    def parents(self, node: int) -> Tuple[int, ...]:
        return self._parents[node]

    def children(self, node: int) -> Tuple[int, ...]:
        return tuple(sorted(v for u, v in self._arcs if u == node))

    def has_arc(self, parent: int, child: int) -> bool:
        return (parent, child) in self._arcs

    def adjacent(self, a: int, b: int) -> bool:
        return (a, b) in self._arcs or (b, a) in self._arcs

    # Derived graphs ---------------------------------------------------------
    def apply(self, change: DagChange) -> "Dag":
        """Return a new graph with the change applied (no cycle check)."""
        _check_applicable(self, change)
        arcs = set(self._arcs)
        if change.kind is ChangeKind.ADD:
            arcs.add(change.arc)
        elif change.kind is ChangeKind.DELETE:
            arcs.discard(change.arc)
        else:
            arcs.discard(change.arc)
            arcs.add((change.child, change.parent))
        return Dag(self._labels, arcs)

    def relabel(self, mapping: Mapping[str, str]) -> "Dag":
        """Rename nodes, keeping indices. Labels missing from mapping are kept."""
        return Dag([mapping.get(label, label) for label in self._labels], self._arcs)

    def reindexed(self, labels: Sequence[str]) -> "Dag":
        """Same graph with nodes re-indexed to follow the given label order."""
        if sorted(labels) != sorted(self._labels):
            raise GraphError("reindexing needs exactly the same label set")
        return Dag.from_label_arcs(labels, self.label_arcs())

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.sorted_arcs())
        return graph

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return self._labels == other._labels and self._arcs == other._arcs

    def __hash__(self) -> int:
        return hash((self._labels, self._arcs))

    def __repr__(self) -> str:
        arcs = ", ".join(f"{u}->{v}" for u, v in self.label_arcs())
        return f"Dag(nodes={list(self._labels)}, arcs=[{arcs}])"


class Pdag:
    """Partially directed graph: at most one edge (directed or undirected) per node pair."""

    __slots__ = ("_labels", "_directed", "_undirected", "_index")

    def __init__(self, labels: Sequence[str], directed: Iterable[Arc] = (),
                 undirected: Iterable[Tuple[int, int]] = ()):
        labels = tuple(str(label) for label in labels)
        if len(set(labels)) != len(labels):
            raise GraphError("node labels must be unique")
        n = len(labels)
        seen_pairs = set()
        directed_set = set()
        undirected_set = set()
        for u, v in directed:
            u, v = int(u), int(v)
            pair = _check_pair(u, v, n, labels)
            if pair in seen_pairs:
                raise GraphError(f"more than one edge between {labels[u]} and {labels[v]}")
            seen_pairs.add(pair)
            directed_set.add((u, v))
        for u, v in undirected:
            pair = _check_pair(int(u), int(v), n, labels)
            if pair in seen_pairs:
                raise GraphError(f"more than one edge between {labels[pair[0]]} and {labels[pair[1]]}")
            seen_pairs.add(pair)
            undirected_set.add(pair)
        self._labels = labels
        self._directed: FrozenSet[Arc] = frozenset(directed_set)
        self._undirected: FrozenSet[Tuple[int, int]] = frozenset(undirected_set)
        self._index = {label: i for i, label in enumerate(labels)}

    @classmethod
    def from_dag(cls, dag: Dag) -> "Pdag":
        return cls(dag.labels, dag.arcs)

    @classmethod
    def from_label_edges(cls, labels: Sequence[str], directed: Iterable[Tuple[str, str]] = (),
                         undirected: Iterable[Tuple[str, str]] = ()) -> "Pdag":
        index = {label: i for i, label in enumerate(labels)}
        try:
            return cls(labels,
                       [(index[u], index[v]) for u, v in directed],
                       [(index[u], index[v]) for u, v in undirected])
        except KeyError as exc:
            raise GraphError(f"edge refers to unknown node {exc.args[0]!r}") from exc

    @property
    def labels(self) -> Tuple[str, ...]:
        return self._labels

    @property
    def n(self) -> int:
        return len(self._labels)

    @property
    def nodes(self) -> Tuple[NodeId, ...]:
        return tuple(NodeId(i, label) for i, label in enumerate(self._labels))

    @property
    def directed_edges(self) -> FrozenSet[Arc]:
        return self._directed

    @property
    def undirected_edges(self) -> FrozenSet[Tuple[int, int]]:
        return self._undirected

    @property
    def n_edges(self) -> int:
        return len(self._directed) + len(self._undirected)

    def index_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError as exc:
            raise GraphError(f"unknown node {label!r}") from exc

    def edge(self, a: int, b: int) -> Optional[str]:
        """Edge between a and b seen from a: '->', '<-', '--' or None."""
        if (a, b) in self._directed:
            return "->"
        if (b, a) in self._directed:
            return "<-"
        if (min(a, b), max(a, b)) in self._undirected:
            return "--"
        return None

    def skeleton(self) -> FrozenSet[Tuple[int, int]]:
        return frozenset((min(u, v), max(u, v)) for u, v in self._directed) | self._undirected

    def relabel(self, mapping: Mapping[str, str]) -> "Pdag":
        return Pdag([mapping.get(label, label) for label in self._labels], self._directed, self._undirected)

    def reindexed(self, labels: Sequence[str]) -> "Pdag":
        if sorted(labels) != sorted(self._labels):
            raise GraphError("reindexing needs exactly the same label set")
        old = self._labels
        return Pdag.from_label_edges(
            labels,
            [(old[u], old[v]) for u, v in sorted(self._directed)],
            [(old[u], old[v]) for u, v in sorted(self._undirected)],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pdag):
            return NotImplemented
        return (self._labels == other._labels and self._directed == other._directed
                and self._undirected == other._undirected)

    def __hash__(self) -> int:
        return hash((self._labels, self._directed, self._undirected))

    def __repr__(self) -> str:
        return f"Pdag({serialize_graph(self)!r})"


def _check_pair(u: int, v: int, n: int, labels: Sequence[str]) -> Tuple[int, int]:
    if not (0 <= u < n and 0 <= v < n):
        raise GraphError(f"edge ({u}, {v}) refers to a node outside [0, {n})")
    if u == v:
        raise GraphError(f"self-loop on {labels[u]}")
    return (min(u, v), max(u, v))


def _check_applicable(dag: Dag, change: DagChange) -> None:
    n = dag.n
    if not (0 <= change.parent < n and 0 <= change.child < n) or change.parent == change.child:
        raise InvalidChangeError(f"change {change} does not name two distinct nodes of the graph")
    present = dag.has_arc(change.parent, change.child)
    if change.kind is ChangeKind.ADD and present:
        raise InvalidChangeError(f"cannot add existing arc {change.describe(dag.labels)}")
    if change.kind is not ChangeKind.ADD and not present:
        raise InvalidChangeError(f"cannot {change.kind.value} missing arc {change.describe(dag.labels)}")


NodeRef = Union[int, str, NodeId]


def _to_indices(dag: Union[Dag, Pdag], order: Sequence[NodeRef]) -> List[int]:
    indices = []
    for ref in order:
        if isinstance(ref, NodeId):
            indices.append(ref.index)
        elif isinstance(ref, str):
            indices.append(dag.index_of(ref))
        else:
            indices.append(int(ref))
    if sorted(indices) != list(range(dag.n)):
        raise GraphError("tie-break order must be a permutation of the graph's nodes")
    return indices


# Operations ----------------------------------------------------------------

def is_acyclic(dag: Dag) -> bool:
    return nx.is_directed_acyclic_graph(dag.to_networkx())


def would_create_cycle(dag: Dag, change: DagChange) -> bool:
    """True iff applying the change leaves a cyclic graph. Reversal is checked as delete-then-add."""
    _check_applicable(dag, change)
    if change.kind is ChangeKind.DELETE:
        return False
    graph = dag.to_networkx()
    if change.kind is ChangeKind.REVERSE:
        graph.remove_edge(change.parent, change.child)
        return nx.has_path(graph, change.parent, change.child)
    return nx.has_path(graph, change.child, change.parent)


def topological_order(dag: Dag, tie_break: Sequence[NodeRef]) -> List[NodeId]:
    """Kahn's order where, among available nodes, the earliest in tie_break goes first."""
    rank = {node: pos for pos, node in enumerate(_to_indices(dag, tie_break))}
    try:
        order = list(nx.lexicographical_topological_sort(dag.to_networkx(), key=rank.__getitem__))
    except nx.NetworkXUnfeasible as exc:
        raise CycleError("graph contains a cycle") from exc
    nodes = dag.nodes
    return [nodes[i] for i in order]


def label_order(dag: Union[Dag, Pdag]) -> List[int]:
    """Node indices sorted by label."""
    return sorted(range(dag.n), key=lambda i: dag.labels[i])


def dag_to_cpdag(dag: Dag) -> Pdag:
    """Completed PDAG of the DAG's Markov equivalence class (compelled-edge labelling)."""
    topo = topological_order(dag, label_order(dag))
    position = {node.index: pos for pos, node in enumerate(topo)}

    # Edge order: lowest child first, then highest parent first
    ordered: List[Arc] = []
    for node in topo:
        for x in sorted(dag.parents(node.index), key=position.__getitem__, reverse=True):
            ordered.append((x, node.index))

    compelled: Dict[Arc, bool] = {}
    for x, y in ordered:
        if (x, y) in compelled:
            continue
        parents_y = dag.parents(y)
        parents_x = set(dag.parents(x))
        settled = False
        for w in dag.parents(x):
            if compelled.get((w, x)) is not True:
                continue
            if w not in parents_y:
                for z in parents_y:
                    compelled[(z, y)] = True
                settled = True
                break
            compelled[(w, y)] = True
        if settled:
            continue
        label = any(z != x and z not in parents_x for z in parents_y)
        for z in parents_y:
            compelled.setdefault((z, y), label)

    directed = [arc for arc, is_compelled in compelled.items() if is_compelled]
    undirected = [arc for arc, is_compelled in compelled.items() if not is_compelled]
    return Pdag(dag.labels, directed, undirected)


def skeleton(dag: Dag) -> FrozenSet[Tuple[int, int]]:
    return frozenset((min(u, v), max(u, v)) for u, v in dag.arcs)


def v_structures(dag: Dag) -> FrozenSet[Tuple[int, int, int]]:
    """Triples (a, c, b) with a -> c <- b, a < b and a, b nonadjacent."""
    found = set()
    for c in range(dag.n):
        parents = dag.parents(c)
        for i, a in enumerate(parents):
            for b in parents[i + 1:]:
                if not dag.adjacent(a, b):
                    found.add((a, c, b))
    return frozenset(found)


def mean_node_degree(graph: Union[Dag, Pdag]) -> float:
    if graph.n == 0:
        return 0.0
    n_edges = len(graph.arcs) if isinstance(graph, Dag) else graph.n_edges
    return 2.0 * n_edges / graph.n


# Text format ---------------------------------------------------------------

def serialize_graph(graph: Union[Dag, Pdag]) -> str:
    labels = graph.labels
    lines = ["nodes: " + ",".join(labels)]
    edges: List[Tuple[str, str, str]] = []
    if isinstance(graph, Dag):
        edges.extend((labels[u], "->", labels[v]) for u, v in graph.arcs)
    else:
        edges.extend((labels[u], "->", labels[v]) for u, v in graph.directed_edges)
        for u, v in graph.undirected_edges:
            a, b = sorted((labels[u], labels[v]))
            edges.append((a, "--", b))
    lines.extend(f"{a} {mark} {b}" for a, mark, b in sorted(edges, key=lambda e: (e[0], e[2], e[1])))
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> Union[Dag, Pdag]:
    """Parse the text format. Returns a Pdag if any undirected edge is present, else an acyclic Dag."""
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith("nodes:"):
        raise GraphError("graph text must start with a 'nodes:' line")
    body = lines[0][len("nodes:"):].strip()
    labels = [label.strip() for label in body.split(",")] if body else []
    directed: List[Tuple[str, str]] = []
    undirected: List[Tuple[str, str]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if " -> " in line:
            u, v = line.split(" -> ", 1)
            directed.append((u.strip(), v.strip()))
        elif " -- " in line:
            u, v = line.split(" -- ", 1)
            undirected.append((u.strip(), v.strip()))
        else:
            raise GraphError(f"line {lineno}: expected 'u -> v' or 'u -- v', got {line!r}")
    if undirected:
        return Pdag.from_label_edges(labels, directed, undirected)
    dag = Dag.from_label_arcs(labels, directed)
    if not is_acyclic(dag):
        raise CycleError("graph text describes a cyclic graph")
    return dag


def read_graph(path: str) -> Union[Dag, Pdag]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_graph(f.read())


def write_graph(path: str, graph: Union[Dag, Pdag]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_graph(graph))


def graph_fingerprint(graph: Union[Dag, Pdag]) -> str:
    return hashlib.sha256(serialize_graph(graph).encode("utf-8")).hexdigest()[:16]


__all__ = [
    "Arc", "ChangeKind", "CycleError", "Dag", "DagChange", "GraphError", "InvalidChangeError",
    "KIND_RANK", "NodeId", "Pdag", "dag_to_cpdag", "graph_fingerprint", "is_acyclic", "label_order",
    "mean_node_degree", "parse_graph", "read_graph", "serialize_graph", "skeleton", "topological_order",
    "v_structures", "would_create_cycle", "write_graph",
]
