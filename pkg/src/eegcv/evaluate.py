"""Accuracy and confusion-matrix evaluation of a trained model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .encoders import ModelParams, decode
from .errors import ContractError
from .train import FeatureSet, encode_features
from .views import Montage, build_topology_graph

Array = np.ndarray


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with true classes on rows and predicted classes on columns."""

    counts: Array

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ContractError(f"ConfusionMatrix: expected square counts, got {counts.shape}")
        if (counts < 0).any():
            raise ContractError("ConfusionMatrix: negative counts")

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    def to_text(self, class_names: tuple[str, ...] | None = None) -> str:
        names = class_names or tuple(str(i) for i in range(self.n_classes))
        width = max(len(n) for n in names) + 2
        lines = [" " * width + "".join(f"{n:>{width}}" for n in names)]
        for i, name in enumerate(names):
            row = "".join(f"{int(v):>{width}}" for v in self.counts[i])
            lines.append(f"{name:>{width}}" + row)
        return "\n".join(lines)


def confusion_from_predictions(true: Array, pred: Array, n_classes: int) -> ConfusionMatrix:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(true), np.asarray(pred)), 1)
    return ConfusionMatrix(counts=counts)


def predict(model: ModelParams, fs: FeatureSet, montage: Montage,
            neighborhood: int = 4, batch_size: int = 256) -> Array:
    """Argmax class predictions; ties resolve to the lowest class index."""
    graph = build_topology_graph(montage, neighborhood)
    reps = encode_features(model, fs.features, montage, graph, batch_size)
    logits = decode(Tensor(reps), model.decoder).data
    return logits.argmax(axis=1)


def evaluate(model: ModelParams, fs: FeatureSet, montage: Montage,
             neighborhood: int = 4, batch_size: int = 256) -> tuple[float, ConfusionMatrix]:
    """Accuracy (trace over total) plus the full confusion matrix."""
    if fs.labels is None:
        raise ContractError("evaluate: labels required")
    if len(fs) == 0:
        raise ContractError("evaluate: empty dataset")
    n_classes = model.decoder.out_b.shape[0]
    if len(fs.class_names) != n_classes:
        raise ContractError(f"evaluate: dataset has {len(fs.class_names)} classes, "
                            f"decoder expects {n_classes}")
    pred = predict(model, fs, montage, neighborhood, batch_size)
    cm = confusion_from_predictions(fs.labels, pred, n_classes)
    return cm.accuracy(), cm
