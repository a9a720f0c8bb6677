"""Multiclass gradient-boosted regression trees under softmax cross-entropy.

Each round fits one tree per class to the gradient ``p_k - y_k`` and hessian
``p_k (1 - p_k)`` of the current scores. Splits maximize the second-order gain
``GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)`` (strictly positive,
children holding at least ``min_child_weight`` hessian); leaves take
``-G/(H+lambda)``, stored pre-multiplied by the learning rate.
"""

from __future__ import annotations

import numpy as np

from ..ids.data import Dataset
from .base import ClassifierModel, ModelError, require_classes, softmax
from .growth import TreeArrays, grow

DEFAULTS = {"n_rounds": 100, "learning_rate": 0.1, "max_depth": 6, "lambda": 1.0,
            "min_child_weight": 1.0}


def gradients(scores: np.ndarray, onehot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = softmax(scores)
    return p - onehot, p * (1.0 - p)


def cross_entropy(scores: np.ndarray, y: np.ndarray) -> float:
    z = scores - scores.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_p[np.arange(y.shape[0]), y].mean())


def _scorer(lam: float, min_child_weight: float):
    def score(cum, total, n_left):
        gl, hl = cum[..., 0], cum[..., 1]
        gr, hr = total[0] - gl, total[1] - hl
        gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - total[0] ** 2 / (total[1] + lam)
        ok = (hl >= min_child_weight) & (hr >= min_child_weight)
        return np.where(ok, gain, -np.inf)
    return score


def fit_regression_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, max_depth: int,
                        lam: float, min_child_weight: float, scale: float = 1.0) -> TreeArrays:
    stats = np.column_stack([g, h])
    arrays = grow(
        X, stats, _scorer(lam, min_child_weight),
        lambda s: np.array([-scale * s[0] / (s[1] + lam)]),
        lambda rows, st, depth: depth < max_depth and rows.size >= 2,
        accept=lambda gain, st: gain > 0.0,
    )
    arrays.value = arrays.value[:, 0]
    return arrays


def _pack(trees: list[TreeArrays]) -> dict[str, np.ndarray]:
    offsets = np.cumsum([0] + [t.n_nodes for t in trees]).astype(np.int64)
    return {
        "offsets": offsets,
        "feature": np.concatenate([t.feature for t in trees]),
        "threshold": np.concatenate([t.threshold for t in trees]),
        "left": np.concatenate([t.left for t in trees]),
        "right": np.concatenate([t.right for t in trees]),
        "value": np.concatenate([t.value for t in trees]),
    }


def unpack(params: dict[str, np.ndarray]) -> list[TreeArrays]:
    off = params["offsets"]
    return [TreeArrays(*(params[k][off[i]:off[i + 1]]
                         for k in ("feature", "threshold", "left", "right", "value")))
            for i in range(off.shape[0] - 1)]


def train_gbt(train: Dataset, config: dict | None = None, on_round=None) -> ClassifierModel:
    """``on_round(r, scores)`` is called after every round (used for loss tracking)."""
    cfg = {**DEFAULTS, **(config or {})}
    require_classes(train)
    if cfg["n_rounds"] < 0 or cfg["learning_rate"] <= 0 or cfg["lambda"] < 0:
        raise ModelError("invalid boosting configuration")
    X, y = train.X, train.y
    n, K = X.shape[0], len(train.labels)
    onehot = np.zeros((n, K))
    onehot[np.arange(n), y] = 1.0
    scores = np.zeros((n, K))
    trees: list[TreeArrays] = []
    for r in range(int(cfg["n_rounds"])):
        g, h = gradients(scores, onehot)
        step = np.zeros_like(scores)
        for k in range(K):
            t = fit_regression_tree(X, g[:, k], h[:, k], int(cfg["max_depth"]), float(cfg["lambda"]),
                                    float(cfg["min_child_weight"]), float(cfg["learning_rate"]))
            step[:, k] = t.value[t.apply(X)]
            trees.append(t)
        scores = scores + step
        if on_round is not None:
            on_round(r, scores)
    params = _pack(trees) if trees else {
        "offsets": np.zeros(1, dtype=np.int64), "feature": np.zeros(0, dtype=np.int64),
        "threshold": np.zeros(0), "left": np.zeros(0, dtype=np.int64),
        "right": np.zeros(0, dtype=np.int64), "value": np.zeros(0)}
    params["n_classes"] = np.array([K], dtype=np.int64)
    return ClassifierModel("gbt", train.schema, train.labels, params, cfg)


def raw_scores(model: ClassifierModel, X: np.ndarray) -> np.ndarray:
    K = int(model.params["n_classes"][0])
    scores = np.zeros((X.shape[0], K))
    for i, t in enumerate(unpack(model.params)):
        scores[:, i % K] += t.value[t.apply(X)]
    return scores


def forward(model: ClassifierModel, X: np.ndarray) -> np.ndarray:
    return softmax(raw_scores(model, X))
