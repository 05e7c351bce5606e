"""
Network Models
Ground-truth Bayesian networks: categorical CPTs or linear-Gaussian nodes.

Model JSON:
    {
      "name": "asia",                                  (optional, defaults to file stem)
      "kind": "categorical" | "continuous",
      "nodes": [...],
      "arcs": [[parent, child], ...],
      "cpts": {node: {"states": [...], "rows": {parent-combo-key: [probs]}}},
      "generate": {"seed": 7, "concentration": 1.0},   (optional, fills CPTs that omit "rows")
      "lingauss": {node: {"intercept": x, "coeffs": {parent: b}, "sd": s}}
    }

A parent-combo key is the '|'-joined parent states in alphabetical parent-label order
('' for a root). Probabilities follow the node's declared state order.
"""
from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from dataset import CATEGORICAL, CONTINUOUS, Dataset, VariableMeta
from graph import Dag, GraphError, is_acyclic, label_order, topological_order

ROW_SUM_TOLERANCE = 1e-9


class ModelValidationError(ValueError):
    """Model file or parameters inconsistent with the declared structure."""

    def __init__(self, message: str, node: Optional[str] = None):
        super().__init__(f"node {node!r}: {message}" if node is not None else message)
        self.node = node


@dataclass(frozen=True)
class LinearGaussianNode:
    intercept: float
    coeffs: Dict[str, float]
    sd: float


@dataclass(frozen=True)
class FreeParameterCount:
    per_node: Dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.per_node.values())


@dataclass
class NetworkModel:
    """Declared ground truth: structure plus parameters for one of the two kinds."""
    name: str
    kind: str
    dag: Dag
    states: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    cpts: Dict[str, np.ndarray] = field(default_factory=dict)
    lingauss: Dict[str, LinearGaussianNode] = field(default_factory=dict)

    @property
    def labels(self) -> Tuple[str, ...]:
        return self.dag.labels

    def parent_labels(self, node: str) -> List[str]:
        dag = self.dag
        return sorted(dag.labels[p] for p in dag.parents(dag.index_of(node)))

    def combo_keys(self, node: str) -> List[str]:
        """Parent-combination keys in CPT row order."""
        parent_states = [self.states[p] for p in self.parent_labels(node)]
        return ["|".join(combo) for combo in itertools.product(*parent_states)]

    def empty_graph(self) -> Dag:
        return Dag.empty(self.labels)

    def true_graph(self) -> Dag:
        return self.dag

    def validate(self) -> "NetworkModel":
        if self.kind not in (CATEGORICAL, CONTINUOUS):
            raise ModelValidationError(f"unknown model kind {self.kind!r}")
        if not is_acyclic(self.dag):
            raise ModelValidationError("model structure contains a cycle")
        if self.kind == CATEGORICAL:
            self._validate_categorical()
        else:
            self._validate_continuous()
        return self

    def _validate_categorical(self) -> None:
        for node in self.labels:
            states = self.states.get(node)
            if not states:
                raise ModelValidationError("no states declared", node)
            if len(set(states)) != len(states):
                raise ModelValidationError("duplicate state labels", node)
            if any("|" in s for s in states):
                raise ModelValidationError("state labels may not contain '|'", node)
            table = self.cpts.get(node)
            if table is None:
                raise ModelValidationError("missing CPT", node)
            q = len(self.combo_keys(node))
            if table.shape != (q, len(states)):
                raise ModelValidationError(f"CPT shape {table.shape} does not match ({q}, {len(states)})", node)
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise ModelValidationError("CPT entries must be finite and non-negative", node)
            sums = table.sum(axis=1)
            bad = np.abs(sums - 1.0) > ROW_SUM_TOLERANCE
            if bad.any():
                key = self.combo_keys(node)[int(np.argmax(bad))]
                raise ModelValidationError(f"CPT row {key!r} sums to {sums[bad][0]:.12g}", node)

    def _validate_continuous(self) -> None:
        for node in self.labels:
            params = self.lingauss.get(node)
            if params is None:
                raise ModelValidationError("missing linear-Gaussian parameters", node)
            if set(params.coeffs) != set(self.parent_labels(node)):
                raise ModelValidationError("coefficients do not match the parent set", node)
            if not (math.isfinite(params.sd) and params.sd > 0):
                raise ModelValidationError(f"noise sd must be positive, got {params.sd}", node)
            if not math.isfinite(params.intercept) or not all(math.isfinite(b) for b in params.coeffs.values()):
                raise ModelValidationError("parameters must be finite", node)

    def to_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {
            "name": self.name,
            "kind": self.kind,
            "nodes": list(self.labels),
            "arcs": [list(arc) for arc in self.dag.label_arcs()],
        }
        if self.kind == CATEGORICAL:
            data["cpts"] = {
                node: {
                    "states": list(self.states[node]),
                    "rows": {key: [float(p) for p in row]
                             for key, row in zip(self.combo_keys(node), self.cpts[node])},
                }
                for node in self.labels
            }
        else:
            data["lingauss"] = {
                node: {"intercept": p.intercept, "coeffs": dict(sorted(p.coeffs.items())), "sd": p.sd}
                for node, p in self.lingauss.items()
            }
        return data


# Construction ----------------------------------------------------------------

def generate_cpts(dag: Dag, states: Mapping[str, Sequence[str]], seed: int,
                  concentration: float = 1.0) -> Dict[str, np.ndarray]:
    """Seeded Dirichlet CPTs; nodes are visited alphabetically, rows in combo-key order."""
    if concentration <= 0:
        raise ModelValidationError(f"concentration must be positive, got {concentration}")
    rng = np.random.default_rng(seed)
    shell = NetworkModel(name="", kind=CATEGORICAL, dag=dag,
                         states={k: tuple(v) for k, v in states.items()})
    cpts: Dict[str, np.ndarray] = {}
    for node in sorted(dag.labels):
        r = len(states[node])
        q = len(shell.combo_keys(node))
        table = rng.dirichlet(np.full(r, float(concentration)), size=q)
        cpts[node] = table / table.sum(axis=1, keepdims=True)
    return cpts


def model_from_dict(data: Mapping[str, object], name: Optional[str] = None) -> NetworkModel:
    try:
        kind = str(data["kind"])
        nodes = [str(n) for n in data["nodes"]]
        arcs = [(str(u), str(v)) for u, v in data.get("arcs", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelValidationError(f"malformed model header: {exc}") from exc
    try:
        dag = Dag.from_label_arcs(nodes, arcs)
    except GraphError as exc:
        raise ModelValidationError(str(exc)) from exc
    model = NetworkModel(name=str(data.get("name") or name or "model"), kind=kind, dag=dag)

    if kind == CATEGORICAL:
        cpt_specs = data.get("cpts") or {}
        missing = [n for n in nodes if n not in cpt_specs]
        if missing:
            raise ModelValidationError("missing CPT", missing[0])
        extra = sorted(set(cpt_specs) - set(nodes))
        if extra:
            raise ModelValidationError("CPT for a node not in the structure", extra[0])
        model.states = {n: tuple(str(s) for s in cpt_specs[n].get("states", [])) for n in nodes}
        generate = data.get("generate")
        generated = (generate_cpts(dag, model.states, int(generate.get("seed", 0)),
                                   float(generate.get("concentration", 1.0))) if generate else {})
        for node in nodes:
            rows = cpt_specs[node].get("rows")
            if rows is None:
                if node not in generated:
                    raise ModelValidationError("CPT has no rows and no 'generate' block", node)
                model.cpts[node] = generated[node]
                continue
            keys = model.combo_keys(node)
            extra_rows = sorted(set(rows) - set(keys))
            if extra_rows:
                raise ModelValidationError(f"unexpected CPT row {extra_rows[0]!r}", node)
            table = []
            for key in keys:
                if key not in rows:
                    raise ModelValidationError(f"missing CPT row {key!r}", node)
                row = [float(p) for p in rows[key]]
                if len(row) != len(model.states[node]):
                    raise ModelValidationError(f"CPT row {key!r} has {len(row)} entries", node)
                table.append(row)
            model.cpts[node] = np.asarray(table, dtype=np.float64).reshape(len(keys), len(model.states[node]))
    elif kind == CONTINUOUS:
        specs = data.get("lingauss") or {}
        for node in nodes:
            if node not in specs:
                raise ModelValidationError("missing linear-Gaussian parameters", node)
            spec = specs[node]
            model.lingauss[node] = LinearGaussianNode(
                intercept=float(spec.get("intercept", 0.0)),
                coeffs={str(k): float(v) for k, v in (spec.get("coeffs") or {}).items()},
                sd=float(spec.get("sd", 1.0)),
            )
    return model.validate()


def load_model(path: str) -> NetworkModel:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise ModelValidationError(f"model file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"model file is not valid JSON: {exc}") from exc
    stem = os.path.splitext(os.path.basename(path))[0]
    return model_from_dict(data, name=stem)


def save_model(model: NetworkModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model.to_dict(), f, indent=2)


def random_model(n_nodes: int, seed: int, edge_prob: float = 0.5, max_parents: int = 2,
                 cardinalities: Sequence[int] = (2, 3), concentration: float = 1.0) -> NetworkModel:
    """Small random categorical network (used for oracle benchmarks)."""
    rng = np.random.default_rng(seed)
    labels = [f"X{i}" for i in range(n_nodes)]
    arcs = []
    for child in range(n_nodes):
        for parent in range(child):
            if len([a for a in arcs if a[1] == child]) < max_parents and rng.random() < edge_prob:
                arcs.append((parent, child))
    dag = Dag(labels, arcs)
    states = {label: tuple(f"s{k}" for k in range(int(rng.choice(cardinalities)))) for label in labels}
    cpts = generate_cpts(dag, states, int(rng.integers(0, 2**31 - 1)), concentration)
    return NetworkModel(name=f"random{n_nodes}_{seed}", kind=CATEGORICAL, dag=dag,
                        states=states, cpts=cpts).validate()


# Sampling --------------------------------------------------------------------

def sample(model: NetworkModel, n_rows: int, seed: int) -> Dataset:
    """Forward sampling in topological order (alphabetical tie-break)."""
    if n_rows < 1:
        raise ValueError(f"n_rows must be >= 1, got {n_rows}")
    rng = np.random.default_rng(seed)
    order = [node.label for node in topological_order(model.dag, label_order(model.dag))]
    columns: Dict[str, np.ndarray] = {}

    for label in order:
        parents = model.parent_labels(label)
        if model.kind == CATEGORICAL:
            table = model.cpts[label]
            row_index = np.zeros(n_rows, dtype=np.int64)
            for p in parents:
                row_index = row_index * len(model.states[p]) + columns[p]
            cumulative = np.cumsum(table, axis=1)
            u = rng.random(n_rows)
            draws = (u[:, None] >= cumulative[row_index]).sum(axis=1)
            columns[label] = np.minimum(draws, table.shape[1] - 1)
        else:
            params = model.lingauss[label]
            x = np.full(n_rows, params.intercept, dtype=np.float64)
            for p in parents:
                x = x + params.coeffs[p] * columns[p]
            columns[label] = x + rng.normal(0.0, params.sd, size=n_rows)

    if model.kind == CONTINUOUS:
        return Dataset([VariableMeta(label) for label in model.labels],
                       np.column_stack([columns[label] for label in model.labels]), CONTINUOUS)

    variables = []
    codes = []
    for label in model.labels:
        declared = model.states[label]
        canonical = tuple(sorted(declared))
        remap = np.array([canonical.index(s) for s in declared], dtype=np.int64)
        codes.append(remap[columns[label]])
        variables.append(VariableMeta(label, canonical))
    return Dataset(variables, np.column_stack(codes), CATEGORICAL)


# Parameter accounting --------------------------------------------------------

def _count_for(kind: str, n_parents: int, q: int, r: int) -> int:
    if kind == CONTINUOUS:
        return n_parents + 2
    return q * (r - 1)


def free_parameters(model: NetworkModel) -> FreeParameterCount:
    per_node = {}
    for node in model.labels:
        parents = model.parent_labels(node)
        q = int(np.prod([len(model.states[p]) for p in parents])) if model.kind == CATEGORICAL else 1
        r = len(model.states[node]) if model.kind == CATEGORICAL else 0
        per_node[node] = _count_for(model.kind, len(parents), q, r)
    return FreeParameterCount(per_node)


def free_parameters_for(dag: Dag, data: Dataset) -> FreeParameterCount:
    """Free parameters of a structure given the data's cardinalities (structure labels must match data)."""
    cards = {v.label: v.cardinality for v in data.variables}
    per_node = {}
    for i, node in enumerate(dag.labels):
        parents = [dag.labels[p] for p in dag.parents(i)]
        q = int(np.prod([cards[p] for p in parents])) if data.is_categorical else 1
        per_node[node] = _count_for(data.kind, len(parents), q, cards.get(node, 0))
    return FreeParameterCount(per_node)


__all__ = [
    "FreeParameterCount", "LinearGaussianNode", "ModelValidationError", "NetworkModel", "free_parameters",
    "free_parameters_for", "generate_cpts", "load_model", "model_from_dict", "random_model", "sample",
    "save_model",
]
