"""Class-weighted cross-entropy with label smoothing, and the class weights.

Two weighting rules ship. ``literal_eq11`` is w_i = N_total * N_class_i / m,
which weights frequent classes more; ``inverse_frequency`` is the standard
balancing rule w_i = N_total / (m * N_class_i) and is the default, since the
literal rule works against the purpose of weighting. Both are exposed so
either behaviour is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DomainError

WEIGHT_MODES = ("literal_eq11", "inverse_frequency")


@dataclass
class ClassWeightSpec:
    counts: np.ndarray
    mode: str = "inverse_frequency"

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if self.mode not in WEIGHT_MODES:
            raise ContractError(f"unknown weight mode {self.mode!r}")
        if self.counts.ndim != 1 or len(self.counts) < 2:
            raise ContractError("need per-class counts for at least two classes")
        if np.any(self.counts < 0):
            raise ContractError("class counts must be non-negative")


def class_weights(spec: ClassWeightSpec) -> np.ndarray:
    total = spec.counts.sum()
    m = len(spec.counts)
    if spec.mode == "literal_eq11":
        return total * spec.counts / m
    if np.any(spec.counts == 0):
        raise DomainError("inverse_frequency weights need every class count > 0")
    return total / (m * spec.counts)


@dataclass
class SmoothedTarget:
    """A label-smoothed target distribution that remembers its true class."""

    label: int
    dist: np.ndarray


def smooth_labels(label: int, num_classes: int, gamma: float) -> SmoothedTarget:
    """1 - gamma on the true class, gamma spread uniformly over the others."""
    if not 0.0 <= gamma < 1.0:
        raise ContractError(f"gamma must be in [0, 1), got {gamma}")
    if num_classes < 2:
        raise ContractError("label smoothing needs at least two classes")
    if not 0 <= label < num_classes:
        raise ContractError(f"label {label} out of range for {num_classes} classes")
    dist = np.full(num_classes, gamma / (num_classes - 1))
    dist[label] = 1.0 - gamma
    return SmoothedTarget(label, dist)


def cross_entropy_vec(logits: Tensor, target: SmoothedTarget) -> Tensor:
    """- sum(target * log softmax(logits)) for one rank-1 logits vector.

    Stable via max subtraction; the shift constant needs no gradient because
    log-softmax is invariant to it.
    """
    shifted = ad.sub(logits, float(logits.data.max()))
    lse = ad.log(ad.tensor_sum(ad.exp(shifted)))
    log_probs = ad.sub(shifted, lse)
    return ad.scale(ad.tensor_sum(ad.mul(Tensor(target.dist), log_probs)), -1.0)


def weighted_cross_entropy(logits: Tensor, targets: list[SmoothedTarget],
                           weights: np.ndarray, reduction: str = "mean") -> Tensor:
    """Batch loss: per-sample CE scaled by the true class's weight.

    ``mean`` divides by the summed applied weights, so uniformly rescaling
    all class weights leaves the loss unchanged; ``sum`` skips the division.
    """
    if logits.ndim != 2 or logits.shape[0] != len(targets):
        raise ContractError(f"logits {logits.shape} do not match {len(targets)} targets")
    if not np.isfinite(logits.data).all():
        raise DomainError("non-finite logits")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (logits.shape[1],) or np.any(weights <= 0):
        raise ContractError("need one positive weight per class")
    if reduction not in ("mean", "sum"):
        raise ContractError(f"unknown reduction {reduction!r}")

    total = None
    applied = 0.0
    for i, target in enumerate(targets):
        w = float(weights[target.label])
        term = ad.scale(cross_entropy_vec(ad.take_row(logits, i), target), w)
        total = term if total is None else total + term
        applied += w
    if reduction == "mean":
        return ad.scale(total, 1.0 / applied)
    return total
