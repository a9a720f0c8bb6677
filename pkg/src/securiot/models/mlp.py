"""Fully connected ReLU network with a softmax output, trained by mini-batch Adam.

Initialization: He normal, ``W ~ N(0, 2/fan_in)`` drawn from
``numpy.random.default_rng(seed)`` layer by layer, biases zero. Inputs are
z-scored with training-set statistics kept in the model (zero spread -> 1).
Each epoch visits the rows in a fresh seeded permutation.
"""

from __future__ import annotations

import numpy as np

from ..ids.data import Dataset
from .base import ClassifierModel, ModelError, NonFiniteLoss, softmax

DEFAULTS = {"hidden_sizes": [64, 32], "epochs": 20, "batch_size": 256, "learning_rate": 0.01,
            "seed": 0, "optimizer": "adam"}
ADAM = (0.9, 0.999, 1e-8)


def init_params(sizes: list[int], rng: np.random.Generator) -> list[np.ndarray]:
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        params.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def logits(params: list[np.ndarray], X: np.ndarray) -> np.ndarray:
    a = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        a = a @ params[2 * i] + params[2 * i + 1]
        if i < n_layers - 1:
            a = np.maximum(a, 0.0)
    return a


def loss_and_grads(params: list[np.ndarray], X: np.ndarray, y: np.ndarray
                   ) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy and its analytic gradient with respect to every parameter."""
    n_layers = len(params) // 2
    acts = [X]
    pre = []
    a = X
    for i in range(n_layers):
        z = a @ params[2 * i] + params[2 * i + 1]
        pre.append(z)
        a = np.maximum(z, 0.0) if i < n_layers - 1 else z
        acts.append(a)
    z = acts[-1] - acts[-1].max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = X.shape[0]
    loss = float(-log_p[np.arange(n), y].mean())
    delta = np.exp(log_p)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads: list[np.ndarray] = [np.empty(0)] * len(params)
    for i in reversed(range(n_layers)):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = (delta @ params[2 * i].T) * (pre[i - 1] > 0)
    return loss, grads


def train_mlp(train: Dataset, config: dict | None = None) -> ClassifierModel:
    cfg = {**DEFAULTS, **(config or {})}
    cfg["hidden_sizes"] = [int(h) for h in cfg["hidden_sizes"]]
    if cfg["optimizer"] not in ("adam", "sgd"):
        raise ModelError(f"unknown optimizer {cfg['optimizer']!r}")
    rng = np.random.default_rng(int(cfg["seed"]))
    mu = train.X.mean(axis=0)
    sd = train.X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (train.X - mu) / sd
    y = train.y
    sizes = [Xs.shape[1], *cfg["hidden_sizes"], len(train.labels)]
    params = init_params(sizes, rng)
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps = ADAM
    lr, bs, t = float(cfg["learning_rate"]), int(cfg["batch_size"]), 0
    for epoch in range(int(cfg["epochs"])):
        perm = rng.permutation(Xs.shape[0])
        for start in range(0, Xs.shape[0], bs):
            rows = perm[start:start + bs]
            loss, grads = loss_and_grads(params, Xs[rows], y[rows])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}, batch starting {start}; "
                                    f"try a smaller learning_rate (now {lr})")
            t += 1
            for i, g in enumerate(grads):
                if cfg["optimizer"] == "sgd":
                    params[i] = params[i] - lr * g
                    continue
                m[i] = b1 * m[i] + (1 - b1) * g
                v[i] = b2 * v[i] + (1 - b2) * g * g
                mhat = m[i] / (1 - b1 ** t)
                vhat = v[i] / (1 - b2 ** t)
                params[i] = params[i] - lr * mhat / (np.sqrt(vhat) + eps)
    named = {"mean": mu, "scale": sd}
    for i, p in enumerate(params):
        named[f"{'W' if i % 2 == 0 else 'b'}{i // 2}"] = p
    return ClassifierModel("mlp", train.schema, train.labels, named, cfg)


def layer_params(model: ClassifierModel) -> list[np.ndarray]:
    out = []
    i = 0
    while f"W{i}" in model.params:
        out += [model.params[f"W{i}"], model.params[f"b{i}"]]
        i += 1
    return out


def forward(model: ClassifierModel, X: np.ndarray) -> np.ndarray:
    Xs = (X - model.params["mean"]) / model.params["scale"]
    return softmax(logits(layer_params(model), Xs))
