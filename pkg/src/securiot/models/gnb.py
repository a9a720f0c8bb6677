"""Gaussian Naive Bayes with a variance floor."""

from __future__ import annotations

import numpy as np

from ..ids.data import ClassTooSmall, Dataset
from .base import ClassifierModel, softmax

DEFAULTS = {"var_smoothing": 1e-9}


def train_gnb(train: Dataset, config: dict | None = None) -> ClassifierModel:
    cfg = {**DEFAULTS, **(config or {})}
    X, y = train.X, train.y
    K, d = len(train.labels), X.shape[1]
    counts = np.bincount(y, minlength=K)
    for k in np.flatnonzero((counts > 0) & (counts < 2)):
        raise ClassTooSmall(f"class {train.labels.classes[k]!r} has a single training row")
    feature_var = X.var(axis=0)
    top = float(feature_var.max()) if d else 0.0
    # all-constant data would give a zero floor; fall back to the smoothing constant itself
    floor = cfg["var_smoothing"] * top if top > 0 else cfg["var_smoothing"]
    mean = np.zeros((K, d))
    var = np.ones((K, d))
    for k in np.flatnonzero(counts):
        rows = X[y == k]
        mean[k] = rows.mean(axis=0)
        var[k] = np.maximum(rows.var(axis=0), floor)
    with np.errstate(divide="ignore"):
        log_prior = np.log(counts / counts.sum())
    params = {"log_prior": log_prior, "mean": mean, "var": var}
    return ClassifierModel("gnb", train.schema, train.labels, params, cfg)


def joint_log_likelihood(model: ClassifierModel, X: np.ndarray) -> np.ndarray:
    p = model.params
    mean, var = p["mean"], p["var"]
    norm = -0.5 * np.log(2.0 * np.pi * var).sum(axis=1)
    out = np.empty((X.shape[0], mean.shape[0]))
    for k in range(mean.shape[0]):
        out[:, k] = norm[k] - 0.5 * (((X - mean[k]) ** 2) / var[k]).sum(axis=1)
    return out + p["log_prior"]


def forward(model: ClassifierModel, X: np.ndarray) -> np.ndarray:
    return softmax(joint_log_likelihood(model, X))
