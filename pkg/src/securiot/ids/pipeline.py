"""ingest -> clean -> select -> subsample -> split, as one reproducible call."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (CleanReport, Dataset, FeatureSchema, HeaderMismatch, MissingFile, RawTable,
                   build_dataset, clean, ingest_csv, select_features, split, subsample,
                   reference_counts)
from .synthetic import synthetic_corpus


def concat_tables(tables: list[RawTable]) -> RawTable:
    if not tables:
        raise MissingFile("no tables to combine")
    first = tables[0]
    for t in tables[1:]:
        if t.names != first.names or list(t.text) != list(first.text):
            raise HeaderMismatch("input files disagree on their columns")
    if len(tables) == 1:
        return first
    return RawTable(list(first.names), np.vstack([t.X for t in tables]),
                    np.vstack([t.invalid for t in tables]),
                    np.concatenate([t.labels for t in tables]),
                    {k: np.concatenate([t.text[k] for t in tables]) for k in first.text})


def csv_files(path: str | Path) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".csv")
        if not files:
            raise MissingFile(f"{path}: no .csv files")
        return files
    if not path.is_file():
        raise MissingFile(str(path))
    return [path]


def ingest_path(path: str | Path) -> RawTable:
    """One CSV file, or every ``*.csv`` in a directory (sorted by name)."""
    return concat_tables([ingest_csv(p) for p in csv_files(path)])


@dataclass
class Prepared:
    report: CleanReport
    schema: FeatureSchema
    dataset: Dataset
    train: Dataset
    test: Dataset

    def summary_text(self) -> str:
        lines = [f"input_rows={self.report.input_rows}", f"retained_rows={self.report.retained}"]
        lines += [f"removed.{k}={v}" for k, v in self.report.removed.items()]
        lines.append(f"replaced_infinite={self.report.replaced_infinite}")
        lines.append(f"features_kept={len(self.schema.names)}")
        lines += [f"kept.{n}" for n in self.schema.names]
        lines += [f"dropped.{n}={why}" for n, why in self.schema.dropped.items()]
        for part, ds in (("cleaned", self.dataset), ("train", self.train), ("test", self.test)):
            lines += [f"count.{part}.{c}={n}" for c, n in ds.per_class_counts.items()]
        return "\n".join(lines) + "\n"


def prepare(table: RawTable, seed: int, scale: float = 1.0, test_fraction: float = 0.3,
            policy: str = "strict") -> Prepared:
    cleaned, report = clean(table, policy)
    schema = select_features(cleaned)
    ds = build_dataset(cleaned, schema)
    sub = subsample(ds, scale, seed) if scale < 1.0 else ds
    train, test = split(sub, test_fraction, seed)
    return Prepared(report, schema, ds, train, test)


def prepare_synthetic(seed: int, scale: float = 1.0, test_fraction: float = 0.3) -> Prepared:
    """The bundled synthetic corpus; ``scale`` subsamples it like a real dataset."""
    return prepare(synthetic_corpus(seed), seed, scale, test_fraction)


def count_diff(actual: dict[str, int], expected: dict[str, int] | None = None) -> list[str]:
    """Per-class differences against the published counts; empty when they agree."""
    expected = expected or reference_counts()
    out = []
    for c in expected:
        a, e = actual.get(c, 0), expected[c]
        if a != e:
            out.append(f"{c}: got {a}, expected {e} ({a - e:+d})")
    ta, te = sum(actual.values()), sum(expected.values())
    if ta != te:
        out.append(f"total: got {ta}, expected {te} ({ta - te:+d})")
    return out
