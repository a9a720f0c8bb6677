"""Seeded synthetic flow corpus standing in for CICIDS2017 in tests and demos.

Each class is a two-component Gaussian mixture in a latent space of
``N_LATENT`` dimensions; observed features are affine maps of the latent
coordinates. Class sizes follow the published per-class proportions at a
configurable scale (default 1/1000) with a floor so that every class can be
split. Extra columns exercise the cleaning and selection steps: a text flow
identifier, a destination port, flag and bulk-rate columns named for
elimination, a constant column, an exact duplicate and a near-duplicate.
"""

from __future__ import annotations

import numpy as np

from .data import LabelMap, RawTable, reference_counts, table_from_arrays

N_LATENT = 12
INFORMATIVE = (
    "Flow Duration", "Total Fwd Packets", "Total Backward Packets",
    "Total Length of Fwd Packets", "Total Length of Bwd Packets", "Fwd Packet Length Max",
    "Bwd Packet Length Max", "Flow Bytes/s", "Flow Packets/s", "Flow IAT Mean",
    "Flow IAT Std", "Fwd IAT Mean", "Bwd IAT Mean", "SYN Flag Count", "ACK Flag Count",
    "Down/Up Ratio", "Init_Win_bytes_forward", "Init_Win_bytes_backward", "Active Mean",
    "Idle Mean",
)
FEATURE_NAMES = (
    "Destination Port", *INFORMATIVE, "Fwd PSH Flags", "URG Flag Count", "Fwd Avg Bulk Rate",
    "Bwd Avg Bulk Rate", "Subflow Fwd Packets", "Fwd Packet Length Mean",
)
CLASS_SEPARATION = 9.0


def class_sizes(scale: float = 1e-3, min_per_class: int = 8,
                labels: LabelMap | None = None) -> dict[str, int]:
    labels = labels or LabelMap.default()
    counts = reference_counts()
    return {c: max(int(round(counts[c] * scale)), min_per_class) for c in labels.classes}


class SyntheticFlows:
    """Generator with fixed class geometry; draws are reproducible per seed."""

    def __init__(self, seed: int = 0, labels: LabelMap | None = None) -> None:
        self.labels = labels or LabelMap.default()
        geo = np.random.default_rng([seed, 0x5EC107])
        k = len(self.labels)
        self.centers = geo.uniform(-CLASS_SEPARATION, CLASS_SEPARATION, size=(k, 2, N_LATENT))
        self.centers[:, 1] = self.centers[:, 0] + geo.normal(0.0, 1.5, size=(k, N_LATENT))
        self.spread = geo.uniform(0.4, 0.9, size=(k, 2, N_LATENT))
        self.mixing = geo.uniform(0.3, 0.7, size=k)
        d = len(INFORMATIVE)
        self.loadings = geo.normal(0.0, 1.0, size=(N_LATENT, d)) * (geo.random((N_LATENT, d)) < 0.35)
        self.loadings[np.arange(d) % N_LATENT, np.arange(d)] += 3.0
        self.scales = 10.0 ** geo.uniform(0.0, 4.0, size=d)
        self.offsets = self.scales * geo.uniform(5.0, 20.0, size=d)
        self.ports = geo.choice([21, 22, 80, 443, 444, 8080], size=k)
        self.seed = seed

    def latent(self, class_index: int, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = (rng.random(n) >= self.mixing[class_index]).astype(int)
        z = rng.standard_normal((n, N_LATENT))
        return self.centers[class_index, comp] + z * self.spread[class_index, comp]

    def features(self, class_index: int, n: int, rng: np.random.Generator) -> np.ndarray:
        """Observed feature rows (``FEATURE_NAMES`` order) for ``n`` flows of one class."""
        z = self.latent(class_index, n, rng)
        info = (z @ self.loadings) * (self.scales / 10.0) + self.offsets
        psh = (rng.random(n) < 0.3).astype(float)
        urg = (rng.random(n) < 0.05).astype(float)
        bulk = np.zeros(n)
        subflow = info[:, 1].copy()
        fwd_mean = info[:, 5] * 0.6 + rng.normal(0.0, 1e-3, n) * self.scales[5]
        port = np.full(n, float(self.ports[class_index]))
        return np.column_stack([port, info, psh, urg, bulk, bulk, subflow, fwd_mean])

    def sample(self, class_name: str, n: int = 1, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = rng or np.random.default_rng([self.seed, 1])
        return self.features(self.labels.index[class_name], n, rng)


def synthetic_corpus(seed: int = 0, scale: float = 1e-3, min_per_class: int = 8,
                     corrupt: int = 0) -> RawTable:
    """A raw table of synthetic flows; ``corrupt`` adds that many bad rows of each kind."""
    gen = SyntheticFlows(seed)
    rng = np.random.default_rng([seed, 2])
    blocks, labels = [], []
    for k, (cls, n) in enumerate(class_sizes(scale, min_per_class, gen.labels).items()):
        blocks.append(gen.features(k, n, rng))
        labels += [cls] * n
    X = np.vstack(blocks)
    perm = rng.permutation(X.shape[0])
    X = X[perm]
    labels = [labels[i] for i in perm]
    flow_ids = [f"192.168.{i % 250}.{i // 250 % 250}-flow-{i}" for i in range(X.shape[0])]
    if corrupt:
        bad = X[:corrupt].copy()
        inf_rows = bad.copy()
        inf_rows[:, 8] = np.inf
        nan_rows = bad.copy()
        nan_rows[:, 3] = np.nan
        X = np.vstack([X, inf_rows, nan_rows, bad])
        labels += labels[:corrupt] * 3
        flow_ids += [f"bad-inf-{i}" for i in range(corrupt)]
        flow_ids += [f"bad-nan-{i}" for i in range(corrupt)]
        flow_ids += flow_ids[:corrupt]
    return table_from_arrays(FEATURE_NAMES, X, labels, {"Flow ID": flow_ids})
