"""CART classification tree with Gini splits over exact thresholds."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..ids.data import Dataset
from .base import ClassifierModel, DegenerateData
from .growth import TreeArrays, gini_scorer, grow

DEFAULTS = {"max_depth": 32, "min_samples_split": 2}


@dataclass
class TreeNode:
    split_feature: int
    threshold: float
    left: "TreeNode | None"
    right: "TreeNode | None"
    leaf_distribution: np.ndarray | None


def tree_arrays(model: ClassifierModel) -> TreeArrays:
    p = model.params
    return TreeArrays(p["feature"], p["threshold"], p["left"], p["right"], p["counts"])


def as_nodes(arrays: TreeArrays, i: int = 0) -> TreeNode:
    if arrays.feature[i] < 0:
        return TreeNode(-1, 0.0, None, None, arrays.value[i].copy())
    return TreeNode(int(arrays.feature[i]), float(arrays.threshold[i]),
                    as_nodes(arrays, int(arrays.left[i])), as_nodes(arrays, int(arrays.right[i])), None)


def fit_counts(X: np.ndarray, y: np.ndarray, n_classes: int, max_depth: int,
               min_samples_split: int) -> TreeArrays:
    onehot = np.zeros((y.shape[0], n_classes))
    onehot[np.arange(y.shape[0]), y] = 1.0

    def should_split(rows, node_stats, depth):
        if depth >= max_depth or rows.size < min_samples_split:
            return False
        return np.count_nonzero(node_stats.sum(axis=0)) > 1

    return grow(X, onehot, gini_scorer, lambda s: s, should_split)


def train_tree(train: Dataset, config: dict | None = None) -> ClassifierModel:
    cfg = {**DEFAULTS, **(config or {})}
    if cfg["max_depth"] < 0 or cfg["min_samples_split"] < 2:
        raise ValueError("max_depth must be >= 0 and min_samples_split >= 2")
    arrays = fit_counts(train.X, train.y, len(train.labels), int(cfg["max_depth"]),
                        int(cfg["min_samples_split"]))
    if arrays.n_nodes == 1 and np.count_nonzero(arrays.value[0]) > 1:
        warnings.warn(DegenerateData("no split separates the training rows; "
                                     "fitted a single majority leaf"), stacklevel=2)
    params = {"feature": arrays.feature, "threshold": arrays.threshold, "left": arrays.left,
              "right": arrays.right, "counts": arrays.value}
    return ClassifierModel("tree", train.schema, train.labels, params, cfg)


def forward(model: ClassifierModel, X: np.ndarray) -> np.ndarray:
    arrays = tree_arrays(model)
    counts = arrays.value[arrays.apply(X)]
    return counts / counts.sum(axis=1, keepdims=True)
