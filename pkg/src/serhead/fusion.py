"""Constrained fusion of several models' class-probability predictions.

For one utterance with prediction matrix M (one row of class probabilities
per model), the fused class is argmax_j sum_i M[i,j] * w[i,j]. The weight
matrix is fitted by derivative-free search maximizing macro F1 on a fit set,
under one of two constraint modes:

* per_class_simplex (default): each class column of w is a simplex over
  models (non-negative, sums to 1). Always satisfiable and interpretable.
* global_sums: the literal whole-matrix reading -- all entries of w sum to
  1; entries may be negative.

The fit can never come back worse than its uniform initialization: every
candidate is evaluated, and the best feasible one (projected exactly onto
the constraint set) is returned, falling back to the uniform weights.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cobyla import cobyla_minimize
from .dataset import EMOTIONS, NUM_CLASSES
from .errors import ContractError, DimensionError
from .metrics import f1_scores

CONSTRAINT_MODES = ("per_class_simplex", "global_sums")
EQUALITY_TOL = 1e-6

PREDICTION_HEADER = ["utterance_id", "label"] + [f"p_{name}" for name in EMOTIONS]


@dataclass
class PredictionSet:
    """Aligned predictions: probs[u, i, j] = model i's probability of class j."""

    utterance_ids: list[str]
    labels: np.ndarray            # [n_utts]
    probs: np.ndarray             # [n_utts, n_models, NUM_CLASSES]
    model_names: list[str]

    def __post_init__(self):
        if self.probs.ndim != 3 or self.probs.shape[2] != NUM_CLASSES:
            raise DimensionError(f"probs must be [n, n_models, {NUM_CLASSES}]")
        if self.probs.shape[0] != len(self.labels) or self.probs.shape[1] < 1:
            raise DimensionError("probs do not match labels/models")
        row_sums = self.probs.sum(axis=2)
        if np.abs(row_sums - 1.0).max() > 1e-4:
            raise ContractError("model probability rows must sum to 1 within 1e-4")

    @property
    def n_models(self) -> int:
        return self.probs.shape[1]


@dataclass
class FusionWeights:
    w: np.ndarray                 # [n_models, NUM_CLASSES]
    mode: str = "per_class_simplex"

    def residual(self) -> float:
        if self.mode == "per_class_simplex":
            col = np.abs(self.w.sum(axis=0) - 1.0).max()
            neg = max(0.0, float(-self.w.min()))
            return max(float(col), neg)
        return abs(float(self.w.sum()) - 1.0)


def fuse_predict(M: np.ndarray, weights: FusionWeights) -> int:
    """Fused class id for one utterance; ties break to the lowest class index."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape != weights.w.shape:
        raise DimensionError(f"predictions {M.shape} vs weights {weights.w.shape}")
    scores = (M * weights.w).sum(axis=0)
    return int(np.argmax(scores))


def fuse_predict_all(preds: PredictionSet, weights: FusionWeights) -> np.ndarray:
    if weights.w.shape != (preds.n_models, NUM_CLASSES):
        raise DimensionError(f"weights {weights.w.shape} do not fit {preds.n_models} models")
    scores = np.einsum("nij,ij->nj", preds.probs, weights.w)
    return scores.argmax(axis=1)


def _fused_f1(preds: PredictionSet, w: np.ndarray) -> float:
    scores = np.einsum("nij,ij->nj", preds.probs, w)
    return f1_scores(scores.argmax(axis=1), preds.labels, NUM_CLASSES)[1]


def _project(w: np.ndarray, mode: str) -> np.ndarray:
    if mode == "per_class_simplex":
        return np.stack([_project_simplex(w[:, j]) for j in range(w.shape[1])], axis=1)
    return w + (1.0 - w.sum()) / w.size


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    r = idx[cond][-1]
    theta = css[r - 1] / r
    return np.maximum(v - theta, 0.0)


def _constraints(mode: str, n_models: int):
    cons = []
    if mode == "per_class_simplex":
        for j in range(NUM_CLASSES):
            def lo(x, j=j):
                return x.reshape(n_models, NUM_CLASSES)[:, j].sum() - 1.0 + EQUALITY_TOL

            def hi(x, j=j):
                return 1.0 - x.reshape(n_models, NUM_CLASSES)[:, j].sum() + EQUALITY_TOL

            cons.extend([lo, hi])
        for k in range(n_models * NUM_CLASSES):
            cons.append(lambda x, k=k: x[k])
    else:
        cons.append(lambda x: x.sum() - 1.0 + EQUALITY_TOL)
        cons.append(lambda x: 1.0 - x.sum() + EQUALITY_TOL)
    return cons


def fit_fusion_weights(preds: PredictionSet, mode: str = "per_class_simplex",
                       rho_beg: float = 0.2, rho_end: float = 1e-4,
                       max_evals: int = 5000) -> tuple[FusionWeights, dict]:
    """Fit the fusion weight matrix to maximize macro F1 on ``preds``.

    Starts from uniform weights (feasible in both modes), negates F1 for
    minimization, and returns exactly-projected weights whose fit-set F1 is
    never below the initialization's.
    """
    if mode not in CONSTRAINT_MODES:
        raise ContractError(f"unknown constraint mode {mode!r}")
    if len(preds.labels) == 0:
        raise ContractError("empty prediction set")
    n_models = preds.n_models
    shape = (n_models, NUM_CLASSES)

    w_init = np.full(shape, 1.0 / n_models)
    if mode == "global_sums":
        w_init = _project(w_init, mode)
    f1_init = _fused_f1(preds, w_init)

    def objective(x):
        return -_fused_f1(preds, x.reshape(shape))

    result = cobyla_minimize(objective, _constraints(mode, n_models), w_init.reshape(-1),
                             rho_beg=rho_beg, rho_end=rho_end, max_evals=max_evals)

    candidate = _project(result.x.reshape(shape), mode)
    f1_candidate = _fused_f1(preds, candidate)
    if f1_candidate >= f1_init:
        best_w, f1_best = candidate, f1_candidate
    else:
        best_w, f1_best = w_init, f1_init

    weights = FusionWeights(best_w, mode)
    before, _ = f1_scores(fuse_predict_all(preds, FusionWeights(w_init, mode)),
                          preds.labels, NUM_CLASSES)
    after, _ = f1_scores(fuse_predict_all(preds, weights), preds.labels, NUM_CLASSES)
    report = {
        "constraint_mode": mode,
        "models": list(preds.model_names),
        "n_utterances": int(len(preds.labels)),
        "evaluations": result.evals,
        "f1_macro_before": f1_init,
        "f1_macro_after": f1_best,
        "f1_per_class_before": {n: float(v) for n, v in zip(EMOTIONS, before)},
        "f1_per_class_after": {n: float(v) for n, v in zip(EMOTIONS, after)},
        "no_gain": bool(f1_best <= f1_init + 1e-12),
        "constraint_residual": weights.residual(),
    }
    return weights, report


# -- CSV interfaces ------------------------------------------------------------


def write_predictions_csv(path, utterance_ids, labels, probs: np.ndarray) -> None:
    """Per-model predictions: utterance_id, label, p_<class> ... in class order."""
    probs = np.asarray(probs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTION_HEADER)
        for uid, label, row in zip(utterance_ids, labels, probs):
            writer.writerow([uid, int(label)] + [f"{p:.9f}" for p in row])


def read_predictions_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PREDICTION_HEADER:
            raise ContractError(f"{path}: expected header {','.join(PREDICTION_HEADER)}")
        ids, labels, probs = [], [], []
        for row in reader:
            if len(row) != len(PREDICTION_HEADER):
                raise ContractError(f"{path}: row with {len(row)} fields")
            ids.append(row[0])
            labels.append(int(row[1]))
            probs.append([float(v) for v in row[2:]])
    return ids, np.array(labels, dtype=np.int64), np.array(probs, dtype=np.float64)


def load_prediction_set(paths, model_names=None) -> PredictionSet:
    """Align per-model prediction CSVs by utterance id (first file fixes order)."""
    if not paths:
        raise ContractError("need at least one predictions CSV")
    model_names = model_names or [Path(p).stem for p in paths]
    base_ids, base_labels, first = read_predictions_csv(paths[0])
    n = len(base_ids)
    probs = np.zeros((n, len(paths), NUM_CLASSES))
    probs[:, 0, :] = first
    order = {uid: i for i, uid in enumerate(base_ids)}
    for k, path in enumerate(paths[1:], start=1):
        ids, labels, p = read_predictions_csv(path)
        if set(ids) != set(base_ids):
            raise ContractError(f"{path}: utterance ids do not match {paths[0]}")
        for uid, label, row in zip(ids, labels, p):
            i = order[uid]
            if label != base_labels[i]:
                raise ContractError(f"{path}: label mismatch for {uid}")
            probs[i, k, :] = row
    return PredictionSet(base_ids, base_labels, probs, list(model_names))


def write_fused_csv(path, utterance_ids, predictions) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["utterance_id", "predicted_class"])
        for uid, pred in zip(utterance_ids, predictions):
            writer.writerow([uid, int(pred)])


def write_fusion_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))
