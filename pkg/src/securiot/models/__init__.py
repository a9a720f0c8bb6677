"""Classifier families behind one train/predict interface."""

from __future__ import annotations

from ..ids.data import Dataset
from .base import (FAMILIES, ClassifierModel, ClassTooSmall, DegenerateData, EmptyNode, ModelError,
                   NonFiniteLoss, SchemaMismatch, predict, predict_proba)
from .gbt import train_gbt
from .gnb import train_gnb
from .growth import gini
from .mlp import train_mlp
from .serialize import BadMagic, Corrupt, VersionMismatch, load_model, read_model, save_model, serialize_model
from .tree import train_tree

TRAINERS = {"gnb": train_gnb, "tree": train_tree, "gbt": train_gbt, "mlp": train_mlp}


def train(family: str, data: Dataset, config: dict | None = None) -> ClassifierModel:
    if family not in TRAINERS:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    return TRAINERS[family](data, config)


__all__ = [
    "FAMILIES", "TRAINERS", "ClassifierModel", "ModelError", "SchemaMismatch", "ClassTooSmall",
    "DegenerateData", "EmptyNode", "NonFiniteLoss", "BadMagic", "Corrupt", "VersionMismatch",
    "gini", "predict", "predict_proba", "train", "train_tree", "train_gnb", "train_gbt",
    "train_mlp", "serialize_model", "load_model", "save_model", "read_model",
]
