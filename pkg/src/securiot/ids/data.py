"""Flow-record ingestion, cleaning, feature analysis and train/test splitting."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

LABEL_COLUMN = "Label"

# Normalized name fragments of features explicitly eliminated as weak/redundant.
NAMED_DROPS = ("flowid", "pshflag", "urgflag", "bulkrate")
IDENTIFIERS = frozenset({
    "flowid", "sourceip", "srcip", "destinationip", "dstip", "sourceport", "srcport",
    "destinationport", "dstport", "timestamp",
})
CORRELATION_THRESHOLD = 0.95


class DataError(Exception):
    pass


class MissingFile(DataError):
    pass


class HeaderMismatch(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class SchemaMismatch(DataError):
    pass


def normalize_name(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", name.lower())


@lru_cache(maxsize=1)
def _label_table() -> dict:
    text = resources.files("securiot.data").joinpath("labels.json").read_text(encoding="utf-8")
    return json.loads(text)


def reference_counts() -> dict[str, int]:
    return dict(_label_table()["reference_counts"])


def normalize_label(raw: str) -> str | None:
    """Canonical class name for a raw label spelling, or None if unknown."""
    return _label_table()["aliases"].get(normalize_name(str(raw)))


@dataclass(frozen=True)
class LabelMap:
    classes: tuple[str, ...]

    @classmethod
    def default(cls) -> LabelMap:
        return cls(tuple(_label_table()["classes"]))

    @property
    def index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.classes)}

    def __len__(self) -> int:
        return len(self.classes)

    def encode(self, names: Iterable[str]) -> np.ndarray:
        idx = self.index
        return np.array([idx[n] for n in names], dtype=np.int64)


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]
    dropped: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        overlap = set(self.names) & set(self.dropped)
        if overlap:
            raise ValueError(f"features both kept and dropped: {sorted(overlap)}")

    def __len__(self) -> int:
        return len(self.names)

    def check(self, names: Sequence[str]) -> None:
        if tuple(names) != self.names:
            raise SchemaMismatch("feature names/order differ from the training schema")


@dataclass
class FlowRecord:
    features: np.ndarray
    label: str


@dataclass
class RawTable:
    """Parsed flow records before feature selection.

    ``X`` holds numeric columns (NaN where a cell was missing or unparsable);
    ``invalid`` flags unparsable cells; ``text`` keeps identifier columns
    verbatim; ``labels`` are canonical class names (None when unrecognized).
    """

    names: list[str]
    X: np.ndarray
    invalid: np.ndarray
    labels: np.ndarray
    text: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.X.shape[0]

    def take(self, rows: np.ndarray) -> RawTable:
        return RawTable(list(self.names), self.X[rows], self.invalid[rows], self.labels[rows],
                        {k: v[rows] for k, v in self.text.items()})

    @property
    def all_names(self) -> list[str]:
        return list(self.text) + list(self.names)


@dataclass
class CleanReport:
    input_rows: int
    removed: dict[str, int]
    replaced_infinite: int = 0

    @property
    def retained(self) -> int:
        return self.input_rows - sum(self.removed.values())


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    schema: FeatureSchema
    labels: LabelMap

    def __post_init__(self) -> None:
        if self.X.ndim != 2 or self.X.shape[1] != len(self.schema):
            raise SchemaMismatch("feature matrix width does not match the schema")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y lengths differ")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def per_class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.y, minlength=len(self.labels))
        return {c: int(n) for c, n in zip(self.labels.classes, counts)}

    @property
    def records(self) -> list[FlowRecord]:
        return [FlowRecord(self.X[i], self.labels.classes[self.y[i]]) for i in range(len(self))]

    def subset(self, rows: np.ndarray) -> Dataset:
        return Dataset(self.X[rows], self.y[rows], self.schema, self.labels)


# -- ingestion ---------------------------------------------------------------------------

def read_header(path: str | Path) -> list[str]:
    with open(path, newline="", encoding="utf-8", errors="replace") as fh:
        row = next(csv.reader(fh), None)
    if row is None:
        raise HeaderMismatch(f"{path}: empty file")
    return [c.strip() for c in row]


def ingest_csv(path: str | Path, raw_schema: Sequence[str] | None = None) -> RawTable:
    """Parse a CICIDS2017-style CSV; unparsable feature cells are flagged, not zeroed."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    header = read_header(path)
    if raw_schema is not None and header != [c.strip() for c in raw_schema]:
        raise HeaderMismatch(f"{path}: header does not match the expected schema")
    if LABEL_COLUMN not in header:
        raise HeaderMismatch(f"{path}: no {LABEL_COLUMN!r} column")
    names = _dedupe(header)
    text_cols = [n for n in names if _is_text_identifier(n)]
    df = pd.read_csv(path, header=None, skiprows=1, names=names, low_memory=False,
                     dtype={n: str for n in text_cols + [LABEL_COLUMN]},
                     encoding="utf-8", encoding_errors="replace", skipinitialspace=True,
                     float_precision="round_trip")
    return _table_from_frame(df, names)


def _is_text_identifier(name: str) -> bool:
    norm = normalize_name(name)
    return norm in IDENTIFIERS and norm not in ("destinationport", "sourceport")


def _dedupe(names: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for n in names:
        if n in seen:
            seen[n] += 1
            out.append(f"{n}.{seen[n]}")
        else:
            seen[n] = 0
            out.append(n)
    return out


def _table_from_frame(df: pd.DataFrame, names: list[str]) -> RawTable:
    raw_labels = df[LABEL_COLUMN].fillna("").astype(str).str.strip()
    mapping = {v: normalize_label(v) for v in raw_labels.unique()}
    labels = raw_labels.map(mapping).to_numpy(dtype=object)
    text: dict[str, np.ndarray] = {}
    numeric: list[str] = []
    for n in names:
        if n == LABEL_COLUMN:
            continue
        if _is_text_identifier(n):
            text[n] = df[n].fillna("").astype(str).str.strip().to_numpy(dtype=object)
        else:
            numeric.append(n)
    X = np.empty((len(df), len(numeric)), dtype=np.float64)
    invalid = np.zeros(X.shape, dtype=bool)
    for j, n in enumerate(numeric):
        col = df[n]
        if col.dtype.kind in "fiub":
            X[:, j] = col.to_numpy(dtype=np.float64)
            continue
        # mixed column: parse cell by cell, flag what does not parse
        present = col.notna().to_numpy()
        stripped = col.astype(str).str.strip()
        vals = pd.to_numeric(stripped.where(present), errors="coerce").to_numpy(dtype=np.float64)
        nan_literal = stripped.str.lower().isin(["nan", "na", "null", ""]).to_numpy()
        invalid[:, j] = present & np.isnan(vals) & ~nan_literal
        X[:, j] = vals
    return RawTable(numeric, X, invalid, labels, text)


def table_from_arrays(names: Sequence[str], X: np.ndarray, labels: Sequence[str | None],
                      text: dict[str, Sequence[str]] | None = None) -> RawTable:
    X = np.asarray(X, dtype=np.float64)
    return RawTable(list(names), X, np.zeros(X.shape, dtype=bool),
                    np.asarray(list(labels), dtype=object),
                    {k: np.asarray(list(v), dtype=object) for k, v in (text or {}).items()})


def write_csv(table: RawTable, path: str | Path) -> None:
    """Write ``table`` in the ingest format (label column last)."""
    cols = {k: v for k, v in table.text.items()}
    for j, n in enumerate(table.names):
        cols[n] = [_fmt(x) for x in table.X[:, j]]
    cols[LABEL_COLUMN] = ["" if lab is None else lab for lab in table.labels]
    pd.DataFrame(cols).to_csv(path, index=False, lineterminator="\n")


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return repr(float(x))


# -- cleaning ----------------------------------------------------------------------------

def clean(table: RawTable, policy: str = "strict") -> tuple[RawTable, CleanReport]:
    """Remove corrupted rows.

    ``strict`` removes rows with unknown labels, invalid or missing cells,
    +-infinity, and exact duplicates. ``lenient`` removes unknown-label, invalid
    and missing rows, replaces +-infinity by the column's finite extreme, and
    keeps duplicates (the accounting that reproduces the published class counts).
    """
    if policy not in ("strict", "lenient"):
        raise ValueError(f"unknown cleaning policy {policy!r}")
    n = len(table)
    removed: dict[str, int] = {}
    keep = np.ones(n, dtype=bool)

    def drop(reason: str, mask: np.ndarray) -> None:
        hit = mask & keep
        removed[reason] = removed.get(reason, 0) + int(hit.sum())
        keep[hit] = False

    drop("unknown-label", np.array([lab is None for lab in table.labels], dtype=bool))
    drop("invalid-cell", table.invalid.any(axis=1))
    drop("missing-value", np.isnan(table.X).any(axis=1))
    replaced = 0
    if policy == "strict":
        drop("non-finite", np.isinf(table.X).any(axis=1))
    out = table.take(np.flatnonzero(keep))
    if policy == "lenient":
        inf = np.isinf(out.X)
        replaced = int(inf.any(axis=1).sum())
        if replaced:
            X = out.X.copy()
            for j in np.flatnonzero(inf.any(axis=0)):
                col = X[:, j]
                finite = col[np.isfinite(col)]
                hi = finite.max() if finite.size else 0.0
                lo = finite.min() if finite.size else 0.0
                col[col == np.inf] = hi
                col[col == -np.inf] = lo
            out.X = X
    if policy == "strict" and len(out):
        dup = _duplicate_rows(out)
        removed["duplicate"] = int(dup.sum())
        out = out.take(np.flatnonzero(~dup))
    else:
        removed.setdefault("duplicate", 0)
    removed.setdefault("non-finite", 0)
    return out, CleanReport(n, removed, replaced)


def _duplicate_rows(table: RawTable) -> np.ndarray:
    frame = pd.DataFrame(table.X)
    for k, v in table.text.items():
        frame["t:" + k] = v
    frame["label"] = table.labels
    return frame.duplicated(keep="first").to_numpy()


# -- correlation and selection ---------------------------------------------------------------

@dataclass
class Correlation:
    matrix: np.ndarray
    constant: np.ndarray  # True where a feature has zero variance (row/column undefined)


def correlation_matrix(X: np.ndarray, chunk: int = 200_000) -> Correlation:
    """Pearson correlation of the columns of ``X``, accumulated in row chunks."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise DataError("correlation needs at least 2 records")
    mean = X.mean(axis=0)
    cov = np.zeros((d, d))
    for start in range(0, n, chunk):
        Z = X[start:start + chunk] - mean
        cov += Z.T @ Z
    var = np.diag(cov).copy()
    constant = var <= 0.0
    # a column is constant iff every value equals the first; guards float noise in var
    constant |= np.all(X == X[0], axis=0)
    std = np.sqrt(np.where(constant, 1.0, var))
    corr = cov / np.outer(std, std)
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    corr[constant, :] = np.nan
    corr[:, constant] = np.nan
    return Correlation(corr, constant)


@dataclass(frozen=True)
class SelectionPolicy:
    threshold: float = CORRELATION_THRESHOLD
    named_drops: tuple[str, ...] = NAMED_DROPS


def select_features(table: RawTable, policy: SelectionPolicy = SelectionPolicy()) -> FeatureSchema:
    """Drop identifiers, named weak features, constant and highly correlated columns."""
    dropped: dict[str, str] = {}
    for name in table.text:
        norm = normalize_name(name)
        dropped[name] = ("named-drop" if any(p in norm for p in policy.named_drops)
                         else "identifier")
    candidates = []
    for j, name in enumerate(table.names):
        norm = normalize_name(name)
        if any(p in norm for p in policy.named_drops):
            dropped[name] = "named-drop"
        elif norm in IDENTIFIERS:
            dropped[name] = "identifier"
        else:
            candidates.append(j)
    if not candidates:
        return FeatureSchema((), dropped)
    corr = correlation_matrix(table.X[:, candidates])
    live = []
    for k, j in enumerate(candidates):
        if corr.constant[k]:
            dropped[table.names[j]] = "zero-variance"
        else:
            live.append(k)
    high = set()
    for a_pos, a in enumerate(live):
        for b in live[a_pos + 1:]:
            if abs(corr.matrix[a, b]) > policy.threshold:
                high.add(b)
    kept = []
    for k in live:
        name = table.names[candidates[k]]
        if k in high:
            dropped[name] = "high-correlation"
        else:
            kept.append(name)
    return FeatureSchema(tuple(kept), dropped)


def build_dataset(table: RawTable, schema: FeatureSchema,
                  labels: LabelMap | None = None) -> Dataset:
    labels = labels or LabelMap.default()
    col = {n: j for j, n in enumerate(table.names)}
    missing = [n for n in schema.names if n not in col]
    if missing:
        raise SchemaMismatch(f"columns missing from table: {missing}")
    X = table.X[:, [col[n] for n in schema.names]] if schema.names else np.empty((len(table), 0))
    y = labels.encode(table.labels)
    return Dataset(np.ascontiguousarray(X), y, schema, labels)


# -- splitting -----------------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(dataset: Dataset, test_fraction: float, seed: int,
          stratified: bool = True) -> tuple[Dataset, Dataset]:
    """Seeded train/test split; stratified keeps each class within one record of its share."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    n = len(dataset)
    if not stratified:
        perm = rng.permutation(n)
        n_test = _round_half_up(n * test_fraction)
        test_idx, train_idx = perm[:n_test], perm[n_test:]
    else:
        test_parts, train_parts = [], []
        for k in range(len(dataset.labels)):
            idx = np.flatnonzero(dataset.y == k)
            if idx.size == 0:
                continue
            if idx.size < 2:
                raise ClassTooSmall(f"class {dataset.labels.classes[k]!r} has {idx.size} record(s)")
            n_test = min(max(_round_half_up(idx.size * test_fraction), 1), idx.size - 1)
            perm = idx[rng.permutation(idx.size)]
            test_parts.append(perm[:n_test])
            train_parts.append(perm[n_test:])
        test_idx = np.sort(np.concatenate(test_parts))
        train_idx = np.sort(np.concatenate(train_parts))
    return dataset.subset(np.sort(train_idx)), dataset.subset(np.sort(test_idx))


def subsample(dataset: Dataset, fraction: float, seed: int, min_per_class: int = 2) -> Dataset:
    """Stratified subsample keeping ``fraction`` of each class (at least ``min_per_class``)."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    if fraction == 1.0:
        return dataset
    rng = np.random.default_rng(seed)
    parts = []
    for k in range(len(dataset.labels)):
        idx = np.flatnonzero(dataset.y == k)
        if idx.size == 0:
            continue
        m = min(idx.size, max(_round_half_up(idx.size * fraction), min_per_class))
        parts.append(idx[rng.permutation(idx.size)[:m]])
    return dataset.subset(np.sort(np.concatenate(parts)))
