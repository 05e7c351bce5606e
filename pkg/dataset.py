"""
Dataset Module
Loads, validates and perturbs categorical and continuous data tables.

Categorical columns are stored as integer codes into a canonically sorted state list, so
that the same data always yields the same codes regardless of first-appearance order.
"""
from __future__ import annotations

import hashlib
import re
import string
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
KINDS = (CATEGORICAL, CONTINUOUS)

NAME_LENGTH = 8
NAME_ALPHABET = string.ascii_lowercase + string.digits


class DatasetError(ValueError):
    """Invalid dataset content or request."""


class DatasetParseError(DatasetError):
    """CSV input that cannot be turned into a dataset; carries the offending location."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(location)})" if location else message)
        self.row = row
        self.column = column


class UnsupportedVariableError(DatasetError):
    """Operation not defined for this variable kind."""


@dataclass(frozen=True)
class VariableMeta:
    label: str
    states: Tuple[str, ...] = ()

    @property
    def cardinality(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class Perturbation:
    """How a dataset was perturbed.

    New column i holds old column column_permutation[i]; new row i holds old row
    row_permutation[i]; name_map maps old labels to new ones.
    """
    seed: int
    column_permutation: Tuple[int, ...]
    row_permutation: Tuple[int, ...]
    name_map: Dict[str, str]

    def inverse_name_map(self) -> Dict[str, str]:
        return {new: old for old, new in self.name_map.items()}


class Dataset:
    """Immutable column-labelled table of categorical codes or finite reals."""

    def __init__(self, variables: Sequence[VariableMeta], values: np.ndarray, kind: str):
        if kind not in KINDS:
            raise DatasetError(f"unknown dataset kind {kind!r}")
        variables = tuple(variables)
        labels = [v.label for v in variables]
        if len(set(labels)) != len(labels):
            raise DatasetError("variable labels must be unique")
        values = np.asarray(values)
        if values.ndim != 2 or values.shape[1] != len(variables):
            raise DatasetError(f"values must be an N x {len(variables)} array")
        if values.shape[0] < 1:
            raise DatasetError("dataset must have at least one row")

        if kind == CATEGORICAL:
            values = values.astype(np.int64, copy=True)
            for j, meta in enumerate(variables):
                if meta.cardinality < 1:
                    raise DatasetError(f"variable {meta.label!r} has no states")
                if list(meta.states) != sorted(meta.states) or len(set(meta.states)) != meta.cardinality:
                    raise DatasetError(f"states of {meta.label!r} must be unique and sorted")
                column = values[:, j]
                if column.min() < 0 or column.max() >= meta.cardinality:
                    raise DatasetError(f"variable {meta.label!r} holds an undeclared state")
        else:
            values = values.astype(np.float64, copy=True)
            if not np.all(np.isfinite(values)):
                raise DatasetError("continuous cells must be finite reals")
            variables = tuple(replace(v, states=()) for v in variables)

        values.setflags(write=False)
        self._variables = variables
        self._values = values
        self._kind = kind
        self._index = {label: i for i, label in enumerate(labels)}
        self._content_rank: Optional[Tuple[int, ...]] = None

    # Construction ----------------------------------------------------------
    @classmethod
    def from_columns(cls, labels: Sequence[str], columns: Sequence[Sequence], kind: str,
                     states: Optional[Mapping[str, Sequence[str]]] = None) -> "Dataset":
        """Build from raw columns. Categorical states are the sorted union of declared and observed values."""
        if len(labels) != len(columns):
            raise DatasetError("one column per label is required")
        if kind == CONTINUOUS:
            values = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns]) if columns else None
            if values is None:
                raise DatasetError("dataset must have at least one column")
            return cls([VariableMeta(label) for label in labels], values, kind)

        variables = []
        codes = []
        for label, column in zip(labels, columns):
            column = [str(value) for value in column]
            declared = list(states.get(label, ())) if states else []
            state_list = tuple(sorted(set(declared) | set(column)))
            codes.append(pd.Categorical(column, categories=list(state_list)).codes.astype(np.int64))
            variables.append(VariableMeta(label, state_list))
        if not codes:
            raise DatasetError("dataset must have at least one column")
        return cls(variables, np.column_stack(codes), kind)

    # Accessors -------------------------------------------------------------
    @property
    def kind(self) -> str:
        return self._kind

    @property
    def is_categorical(self) -> bool:
        return self._kind == CATEGORICAL

    @property
    def variables(self) -> Tuple[VariableMeta, ...]:
        return self._variables

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(v.label for v in self._variables)

    @property
    def n(self) -> int:
        return len(self._variables)

    @property
    def n_rows(self) -> int:
        return int(self._values.shape[0])

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def cardinalities(self) -> Tuple[int, ...]:
        return tuple(v.cardinality for v in self._variables)

    def column(self, index: int) -> np.ndarray:
        return self._values[:, index]

    def index_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError as exc:
            raise DatasetError(f"unknown variable {label!r}") from exc

    def resolve(self, variable: Union[int, str, object]) -> int:
        """Accept an index, a label or anything with an `index` attribute."""
        if isinstance(variable, str):
            return self.index_of(variable)
        index = int(getattr(variable, "index", variable))
        if not 0 <= index < self.n:
            raise DatasetError(f"variable index {index} out of range")
        return index

    @property
    def content_rank(self) -> Tuple[int, ...]:
        """Rank of each column by a digest of its sorted content; ties fall back to column order.

        Invariant under row order, column order and renaming except between columns with
        equal sorted content.
        """
        if self._content_rank is None:
            digests = []
            for j, meta in enumerate(self._variables):
                h = hashlib.sha256()
                if self.is_categorical:
                    h.update("\x1f".join(meta.states).encode("utf-8"))
                h.update(np.sort(self._values[:, j]).tobytes())
                digests.append(h.hexdigest())
            order = sorted(range(self.n), key=lambda j: (digests[j], j))
            rank = [0] * self.n
            for pos, j in enumerate(order):
                rank[j] = pos
            self._content_rank = tuple(rank)
        return self._content_rank

    # Derived datasets --------------------------------------------------------
    def reorder_columns(self, labels: Sequence[str]) -> "Dataset":
        if sorted(labels) != sorted(self.labels):
            raise DatasetError("column reorder needs exactly the dataset's labels")
        idx = [self.index_of(label) for label in labels]
        return Dataset([self._variables[j] for j in idx], self._values[:, idx], self._kind)

    def shuffle_columns(self, seed: int) -> Tuple["Dataset", Tuple[int, ...]]:
        """Column-only permutation (rows and names untouched)."""
        permutation = tuple(int(j) for j in np.random.default_rng(seed).permutation(self.n))
        return Dataset([self._variables[j] for j in permutation], self._values[:, list(permutation)],
                       self._kind), permutation

    def relabel(self, mapping: Mapping[str, str]) -> "Dataset":
        return Dataset([replace(v, label=mapping.get(v.label, v.label)) for v in self._variables],
                       self._values, self._kind)

    def to_frame(self) -> pd.DataFrame:
        data = {}
        for j, meta in enumerate(self._variables):
            if self.is_categorical:
                data[meta.label] = np.asarray(meta.states, dtype=object)[self._values[:, j]]
            else:
                data[meta.label] = self._values[:, j]
        return pd.DataFrame(data, columns=list(self.labels))

    def save_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    def fingerprint(self) -> Dict[str, object]:
        return {
            "n": self.n,
            "N": self.n_rows,
            "kind": self._kind,
            "variables": [
                {"label": v.label, "cardinality": v.cardinality} if self.is_categorical else {"label": v.label}
                for v in self._variables
            ],
            "duplicates": [list(group) for group in find_duplicate_variables(self)],
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self._kind == other._kind and self._variables == other._variables
                and np.array_equal(self._values, other._values))

    def __repr__(self) -> str:
        return f"Dataset(kind={self._kind}, n={self.n}, N={self.n_rows})"


# Loading -------------------------------------------------------------------

_LINE_RE = re.compile(r"line (\d+)")


def load_csv(path: str, kind: str = CATEGORICAL) -> Dataset:
    """Read a comma-separated UTF-8 file with a header row."""
    if kind not in KINDS:
        raise DatasetError(f"unknown dataset kind {kind!r}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except FileNotFoundError as exc:
        raise DatasetError(f"file not found: {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DatasetParseError("empty file", row=1) from exc
    except pd.errors.ParserError as exc:
        match = _LINE_RE.search(str(exc))
        raise DatasetParseError("ragged rows", row=int(match.group(1)) if match else None) from exc

    labels = [str(c) for c in frame.columns]
    if frame.shape[0] == 0:
        raise DatasetParseError("no data rows", row=2)

    # Short rows come back padded with missing cells
    missing = frame.isna() | (frame == "")
    if missing.to_numpy().any():
        r, c = np.argwhere(missing.to_numpy())[0]
        raise DatasetParseError("ragged row or empty cell", row=int(r) + 2, column=labels[int(c)])

    if kind == CATEGORICAL:
        return Dataset.from_columns(labels, [frame[c].tolist() for c in frame.columns], CATEGORICAL)

    columns = []
    for label in frame.columns:
        numeric = pd.to_numeric(frame[label], errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(numeric)
        if bad.any():
            r = int(np.argmax(bad))
            raise DatasetParseError(f"non-numeric or non-finite cell {frame[label].iloc[r]!r}",
                                    row=r + 2, column=str(label))
        columns.append(numeric)
    return Dataset.from_columns(labels, columns, CONTINUOUS)


# Perturbation --------------------------------------------------------------

def _random_names(rng: np.random.Generator, count: int) -> List[str]:
    names: List[str] = []
    used = set()
    alphabet = np.array(list(NAME_ALPHABET))
    while len(names) < count:
        name = "".join(alphabet[rng.integers(0, len(alphabet), size=NAME_LENGTH)])
        if name in used:
            continue
        used.add(name)
        names.append(name)
    return names


def perturb(data: Dataset, seed: int) -> Tuple[Dataset, Perturbation]:
    """Permute columns and rows and replace every label with a random name, all from one seeded generator."""
    rng = np.random.default_rng(seed)
    column_permutation = rng.permutation(data.n)
    row_permutation = rng.permutation(data.n_rows)
    new_names = _random_names(rng, data.n)
    name_map = {old: new for old, new in zip(data.labels, new_names)}

    variables = [replace(data.variables[j], label=name_map[data.variables[j].label]) for j in column_permutation]
    values = data.values[np.ix_(row_permutation, column_permutation)]
    perturbation = Perturbation(
        seed=int(seed),
        column_permutation=tuple(int(j) for j in column_permutation),
        row_permutation=tuple(int(i) for i in row_permutation),
        name_map=name_map,
    )
    return Dataset(variables, values, data.kind), perturbation


def restore(perturbed: Dataset, perturbation: Perturbation) -> Dataset:
    """Undo a perturbation."""
    inverse_names = perturbation.inverse_name_map()
    inv_cols = np.argsort(np.asarray(perturbation.column_permutation))
    inv_rows = np.argsort(np.asarray(perturbation.row_permutation))
    variables = [replace(perturbed.variables[i], label=inverse_names[perturbed.variables[i].label])
                 for i in inv_cols]
    return Dataset(variables, perturbed.values[np.ix_(inv_rows, inv_cols)], perturbed.kind)


# Inspection ----------------------------------------------------------------

def value_counts_rendition(data: Dataset, variable) -> str:
    """Text of observed state counts, count descending then state label, e.g. 'a=4,c=2'."""
    if not data.is_categorical:
        raise UnsupportedVariableError("value counts rendition needs a categorical variable")
    j = data.resolve(variable)
    meta = data.variables[j]
    counts = np.bincount(data.column(j), minlength=meta.cardinality)
    pairs = sorted(((int(c), s) for s, c in zip(meta.states, counts) if c > 0), key=lambda p: (-p[0], p[1]))
    return ",".join(f"{state}={count}" for count, state in pairs)


def find_duplicate_variables(data: Dataset) -> List[Tuple[str, ...]]:
    """Groups of columns whose value sequences are cell-for-cell identical."""
    groups: Dict[str, List[str]] = {}
    for j, meta in enumerate(data.variables):
        h = hashlib.sha256()
        if data.is_categorical:
            cells = np.asarray(meta.states, dtype=object)[data.column(j)]
            h.update("\x1f".join(cells).encode("utf-8"))
        else:
            h.update(np.ascontiguousarray(data.column(j)).tobytes())
        groups.setdefault(h.hexdigest(), []).append(meta.label)
    return sorted(tuple(g) for g in groups.values() if len(g) > 1)


__all__ = [
    "CATEGORICAL", "CONTINUOUS", "Dataset", "DatasetError", "DatasetParseError", "Perturbation",
    "UnsupportedVariableError", "VariableMeta", "find_duplicate_variables", "load_csv", "perturb",
    "restore", "value_counts_rendition",
]
