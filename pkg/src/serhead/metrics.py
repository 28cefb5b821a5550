"""Per-class and macro F1 evaluation."""

from __future__ import annotations

import numpy as np

from .dataset import EMOTIONS
from .errors import ContractError


def confusion_matrix(predictions, references, num_classes: int) -> np.ndarray:
    """counts[r, p] = number of samples with reference r predicted as p."""
    predictions = np.asarray(predictions, dtype=np.int64)
    references = np.asarray(references, dtype=np.int64)
    if predictions.shape != references.shape:
        raise ContractError("predictions and references differ in length")
    if predictions.size and (predictions.min() < 0 or predictions.max() >= num_classes):
        raise ContractError("prediction id out of range")
    if references.size and (references.min() < 0 or references.max() >= num_classes):
        raise ContractError("reference id out of range")
    flat = references * num_classes + predictions
    return np.bincount(flat, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def f1_scores(predictions, references, num_classes: int) -> tuple[np.ndarray, float]:
    """Per-class F1 and the macro average.

    A zero precision+recall denominator gives F1 = 0, so classes absent from
    both predictions and references contribute 0 -- never NaN.
    """
    cm = confusion_matrix(predictions, references, num_classes)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    per_class = np.divide(2 * tp, denom, out=np.zeros(num_classes), where=denom > 0)
    return per_class, float(per_class.mean())


def f1_macro(predictions, references, num_classes: int) -> float:
    return f1_scores(predictions, references, num_classes)[1]


def metrics_dict(predictions, references) -> dict:
    """The metrics document: macro F1 plus per-class F1 keyed by class name."""
    per_class, macro = f1_scores(predictions, references, len(EMOTIONS))
    return {
        "f1_macro": macro,
        "f1_per_class": {name: float(v) for name, v in zip(EMOTIONS, per_class)},
    }
