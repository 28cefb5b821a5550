"""Training loop: AdamW, random temporal cropping, per-epoch dev F1.

All randomness flows from one seed through named sub-streams (data, crop,
dropout, init) so changing one component never shifts the others. Training
is single-threaded and bitwise reproducible for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import NUM_CLASSES, Manifest
from .errors import ContractError, DivergenceError, DomainError
from .losses import ClassWeightSpec, class_weights, smooth_labels, weighted_cross_entropy
from .metrics import metrics_dict
from .model import Architecture, HeadModel
from .tensorfile import read_tensor

STREAMS = {"data": 0, "crop": 1, "dropout": 2, "init": 3}


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named randomness stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[name]]))


@dataclass
class TrainConfig:
    lr: float = 1e-5
    weight_decay: float = 0.01
    epochs: int = 20
    batch_size: int = 32
    crop_frames: int = 50
    seed: int = 0
    eval_every_epoch: bool = True

    def validate(self) -> None:
        if self.lr <= 0 or self.weight_decay < 0:
            raise ContractError("lr must be > 0 and weight_decay >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.crop_frames < 1:
            raise ContractError("epochs, batch_size and crop_frames must be positive")


def random_crop(feats: Tensor, cap: int, rng: np.random.Generator) -> Tensor:
    """Keep at most ``cap`` consecutive frames, same window for every layer."""
    if cap < 1:
        raise ContractError("crop cap must be >= 1")
    m = feats.shape[1]
    if m <= cap:
        return feats
    start = int(rng.integers(0, m - cap + 1))
    return Tensor(feats.data[:, start:start + cap, :].copy())


class AdamW:
    """Adam with decoupled weight decay: the shrink is applied to the
    parameter separately from the moment-based step."""

    def __init__(self, params: dict[str, Tensor], lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise DivergenceError(f"non-finite gradient in {name}")
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            if self.weight_decay:
                p.data = p.data - self.lr * self.weight_decay * p.data
            denom = np.sqrt(self.v[name] / bc2) + self.eps
            p.data = p.data - self.lr * (self.m[name] / bc1) / denom

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


@dataclass
class LoadedUtterance:
    utt_id: str
    feats: np.ndarray
    gender_id: int
    label_id: int
    text: np.ndarray


def load_utterances(manifest: Manifest) -> list[LoadedUtterance]:
    out = []
    for r in manifest.records:
        out.append(LoadedUtterance(
            r.utt_id,
            read_tensor(r.feature_path).data,
            r.gender_id,
            r.label_id,
            read_tensor(r.text_embedding_path).data,
        ))
    return out


@dataclass
class TrainResult:
    log: list[dict] = field(default_factory=list)
    best_state: dict | None = None
    best_epoch: int = -1
    best_dev_f1: float = -1.0
    diverged: bool = False


def train(model: HeadModel, train_manifest: Manifest, dev_manifest: Manifest,
          config: TrainConfig) -> TrainResult:
    """Run the full recipe and keep the best-dev-F1 parameter snapshot.

    A non-finite loss aborts the remaining epochs; the result then carries
    the last good best-checkpoint and ``diverged=True``.
    """
    config.validate()
    train_set = load_utterances(train_manifest)
    dev_set = load_utterances(dev_manifest)
    if not train_set or not dev_set:
        raise ContractError("train and dev manifests must be non-empty")

    weights = class_weights(ClassWeightSpec(train_manifest.class_histogram(),
                                            model.arch.weight_mode))
    data_rng = stream_rng(config.seed, "data")
    crop_rng = stream_rng(config.seed, "crop")
    dropout_rng = stream_rng(config.seed, "dropout")

    params = model.parameters()
    optimizer = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    gamma = model.arch.label_smoothing

    result = TrainResult()
    for epoch in range(1, config.epochs + 1):
        order = data_rng.permutation(len(train_set))
        epoch_loss = 0.0
        num_batches = 0
        try:
            for start in range(0, len(order), config.batch_size):
                batch = [train_set[i] for i in order[start:start + config.batch_size]]
                optimizer.zero_grad()
                logit_rows = []
                targets = []
                for utt in batch:
                    feats = random_crop(Tensor(utt.feats), config.crop_frames, crop_rng)
                    text = Tensor(utt.text) if model.arch.uses_text else None
                    logit_rows.append(model.forward(feats, utt.gender_id, text,
                                                    training=True, rng=dropout_rng))
                    targets.append(smooth_labels(utt.label_id, NUM_CLASSES, gamma))
                loss = weighted_cross_entropy(ad.stack_rows(logit_rows), targets, weights)
                loss_val = loss.item()
                if not math.isfinite(loss_val):
                    raise DivergenceError(f"loss became {loss_val} in epoch {epoch}")
                ad.backward(loss)
                optimizer.step()
                epoch_loss += loss_val
                num_batches += 1
        except (DivergenceError, DomainError):
            # non-finite loss, gradient, or logits: keep the last good checkpoint
            result.diverged = True
            break

        entry = {"epoch": epoch, "train_loss": epoch_loss / max(num_batches, 1)}
        if config.eval_every_epoch or epoch == config.epochs:
            _, dev_metrics, _ = evaluate_loaded(model, dev_set)
            entry["dev_f1_macro"] = dev_metrics["f1_macro"]
            if entry["dev_f1_macro"] > result.best_dev_f1:
                result.best_dev_f1 = entry["dev_f1_macro"]
                result.best_epoch = epoch
                result.best_state = model.state_arrays()
        result.log.append(entry)

    if result.best_state is None:
        result.best_state = model.state_arrays()
        result.best_epoch = len(result.log)
    return result


def evaluate(model: HeadModel, manifest: Manifest):
    """Crop-free, dropout-off evaluation over a manifest.

    Returns (probabilities [n x NUM_CLASSES], metrics dict, utterance ids).
    """
    return evaluate_loaded(model, load_utterances(manifest))


def evaluate_loaded(model: HeadModel, utterances: list[LoadedUtterance]):
    probs = np.zeros((len(utterances), NUM_CLASSES))
    refs = np.zeros(len(utterances), dtype=np.int64)
    ids = []
    for i, utt in enumerate(utterances):
        text = Tensor(utt.text) if model.arch.uses_text else None
        probs[i] = model.predict_proba(Tensor(utt.feats), utt.gender_id, text)
        refs[i] = utt.label_id
        ids.append(utt.utt_id)
    preds = probs.argmax(axis=1)
    return probs, metrics_dict(preds, refs), ids
