"""Confusion matrices and accuracy / macro precision, recall and F1.

Zero denominators contribute 0 to a per-class metric and set that class's
``undefined`` flag so rare classes are visible in every report. Macro
averages run over the classes that occur in the truth or the predictions;
a class absent from both has nothing to measure and is listed in
``excluded`` instead of dragging every macro value towards zero.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .ids.data import LabelMap


class EvaluationError(ValueError):
    pass


class LengthMismatch(EvaluationError):
    pass


class UnknownClass(EvaluationError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray
    labels: LabelMap

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(y_true, y_pred, labels: LabelMap) -> ConfusionMatrix:
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape or t.ndim != 1:
        raise LengthMismatch(f"y_true has shape {t.shape}, y_pred has shape {p.shape}")
    K = len(labels)
    for name, v in (("y_true", t), ("y_pred", p)):
        if v.size and (not np.issubdtype(v.dtype, np.integer) or v.min() < 0 or v.max() >= K):
            raise UnknownClass(f"{name} holds values outside 0..{K - 1}")
    counts = np.bincount(t.astype(np.int64) * K + p.astype(np.int64), minlength=K * K)
    return ConfusionMatrix(counts.reshape(K, K), labels)


@dataclass(frozen=True)
class Normalized:
    rows: np.ndarray
    empty_rows: tuple[int, ...]


def normalize(cm: ConfusionMatrix) -> Normalized:
    """Row-stochastic matrix; all-zero rows stay zero and are listed in ``empty_rows``."""
    sums = cm.counts.sum(axis=1, keepdims=True).astype(np.float64)
    rows = np.divide(cm.counts, sums, out=np.zeros(cm.counts.shape), where=sums > 0)
    return Normalized(rows, tuple(int(i) for i in np.flatnonzero(sums[:, 0] == 0)))


@dataclass
class MetricsReport:
    labels: LabelMap
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    support: np.ndarray
    undefined: dict[str, list[str]] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)

    def records(self) -> dict:
        per_class = {}
        for i, c in enumerate(self.labels.classes):
            per_class[c] = {"precision": round(float(self.precision[i]), 4),
                            "recall": round(float(self.recall[i]), 4),
                            "f1": round(float(self.f1[i]), 4),
                            "support": int(self.support[i])}
        return {"accuracy": round(self.accuracy, 4), "macro_precision": round(self.macro_precision, 4),
                "macro_recall": round(self.macro_recall, 4), "macro_f1": round(self.macro_f1, 4),
                "per_class": per_class, "undefined": self.undefined, "excluded": self.excluded}

    def to_text(self) -> str:
        """Key=value lines, values fixed at four decimals."""
        lines = [f"accuracy={self.accuracy:.4f}", f"macro_precision={self.macro_precision:.4f}",
                 f"macro_recall={self.macro_recall:.4f}", f"macro_f1={self.macro_f1:.4f}"]
        for i, c in enumerate(self.labels.classes):
            lines.append(f"per_class.{c}.precision={self.precision[i]:.4f}")
            lines.append(f"per_class.{c}.recall={self.recall[i]:.4f}")
            lines.append(f"per_class.{c}.f1={self.f1[i]:.4f}")
            lines.append(f"per_class.{c}.support={int(self.support[i])}")
        for metric in ("precision", "recall", "f1"):
            names = self.undefined.get(metric, [])
            lines.append(f"undefined.{metric}={','.join(names)}")
        lines.append(f"excluded={','.join(self.excluded)}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.records(), indent=2, sort_keys=False) + "\n"


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {n}: expected key=value")
        out[key] = value
    return out


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    c = cm.counts.astype(np.float64)
    diag = np.diag(c)
    col = c.sum(axis=0)
    row = c.sum(axis=1)
    total = c.sum()
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(diag), where=denom > 0)
    names = cm.labels.classes
    active = (row + col) > 0
    undefined = {
        "precision": [names[i] for i in np.flatnonzero(col == 0)],
        "recall": [names[i] for i in np.flatnonzero(row == 0)],
        "f1": [names[i] for i in np.flatnonzero(denom == 0)],
    }

    def macro(v: np.ndarray) -> float:
        return float(v[active].mean()) if active.any() else 0.0

    return MetricsReport(
        labels=cm.labels,
        accuracy=float(diag.sum() / total) if total > 0 else 0.0,
        precision=precision, recall=recall, f1=f1,
        macro_precision=macro(precision), macro_recall=macro(recall), macro_f1=macro(f1),
        support=row.astype(np.int64), undefined=undefined,
        excluded=[names[i] for i in np.flatnonzero(~active)])


def evaluate(y_true, y_pred, labels: LabelMap) -> tuple[ConfusionMatrix, MetricsReport]:
    cm = confusion(y_true, y_pred, labels)
    return cm, metrics(cm)


_SHADES = " .:-=+*#%@"


def heatmap_text(norm: Normalized, labels: LabelMap) -> str:
    """Plain-text grid: one shade character per cell (10 levels) plus the diagonal value."""
    width = max(len(c) for c in labels.classes)
    lines = [" " * width + " | " + "".join(str(j % 10) for j in range(len(labels))) + " | diag"]
    for i, c in enumerate(labels.classes):
        cells = "".join(_SHADES[min(int(v * 10), 9)] if v > 0 else " " for v in norm.rows[i])
        tag = "  (no samples)" if i in norm.empty_rows else ""
        lines.append(f"{c:>{width}} | {cells} | {norm.rows[i, i]:.4f}{tag}")
    return "\n".join(lines) + "\n"


def confusion_csv(cm: ConfusionMatrix, normalized: bool = False) -> str:
    """Long-form CSV (true,predicted,value) for external plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["true", "predicted", "value"])
    values = normalize(cm).rows if normalized else cm.counts
    for i, a in enumerate(cm.labels.classes):
        for j, b in enumerate(cm.labels.classes):
            v = values[i, j]
            w.writerow([a, b, f"{v:.6f}" if normalized else int(v)])
    return buf.getvalue()
