"""Uniform classifier container shared by the four model families."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..ids.data import ClassTooSmall, Dataset, FeatureSchema, LabelMap, SchemaMismatch

FAMILIES = ("gnb", "tree", "gbt", "mlp")

__all__ = [
    "FAMILIES", "ClassifierModel", "ModelError", "SchemaMismatch", "ClassTooSmall", "EmptyNode",
    "DegenerateData", "NonFiniteLoss", "softmax", "predict", "predict_proba",
]


class ModelError(Exception):
    pass


class EmptyNode(ModelError, ValueError):
    pass


class NonFiniteLoss(ModelError, FloatingPointError):
    pass


class DegenerateData(UserWarning):
    """Rows share identical features but carry mixed labels; a majority leaf is fitted."""


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ClassifierModel:
    family: str
    schema: FeatureSchema
    labels: LabelMap
    params: dict[str, np.ndarray]
    train_config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")

    def _features(self, data: Dataset | np.ndarray, names: Sequence[str] | None) -> np.ndarray:
        if isinstance(data, Dataset):
            self.schema.check(data.schema.names)
            X = data.X
        else:
            X = np.asarray(data, dtype=np.float64)
            if X.ndim == 1:
                X = X[None, :]
            if names is not None:
                self.schema.check(names)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise SchemaMismatch(f"expected {len(self.schema)} features, got shape {X.shape}")
        return X

    def scores(self, X: np.ndarray) -> np.ndarray:
        from . import gbt, gnb, mlp, tree
        forward = {"gnb": gnb.forward, "tree": tree.forward, "gbt": gbt.forward, "mlp": mlp.forward}
        return forward[self.family](self, X)

    def predict_proba(self, data, names: Sequence[str] | None = None) -> np.ndarray:
        """Row-wise class probabilities, each row non-negative and summing to one."""
        X = self._features(data, names)
        return self.scores(X)

    def predict(self, data, names: Sequence[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(class indices, probability matrix); argmax ties go to the lowest index."""
        proba = self.predict_proba(data, names)
        return np.argmax(proba, axis=1), proba


def predict(model: ClassifierModel, data, names=None) -> tuple[np.ndarray, np.ndarray]:
    return model.predict(data, names)


def predict_proba(model: ClassifierModel, data, names=None) -> np.ndarray:
    return model.predict_proba(data, names)


def require_classes(ds: Dataset, minimum: int = 2) -> np.ndarray:
    present = np.flatnonzero(np.bincount(ds.y, minlength=len(ds.labels)))
    if present.size < minimum:
        raise ModelError(f"training data has {present.size} class(es); need at least {minimum}")
    return present
