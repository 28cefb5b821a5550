"""Layer-weighted aggregation, framewise projection, and temporal pooling.

The pipeline order is fixed as aggregate -> project -> pool so that model
configurations differ only in the pooling operator. Pooled sizes are d for
average pooling and 2d (mean plus standard deviation) for the other two.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError

PROJECTION_SIZES = (16, 32, 64, 128, 256)

# Keeps the gradient of sqrt finite when a variance collapses to zero.
VAR_FLOOR = 1e-12


class LayerWeights:
    """Trainable per-layer mixing weights; softmax mode keeps them convex."""

    def __init__(self, num_layers: int, mode: str = "softmax"):
        if mode not in ("raw", "softmax"):
            raise ContractError(f"unknown layer-weight mode {mode!r}")
        self.mode = mode
        self.w = Tensor(np.zeros(num_layers), requires_grad=True)

    def effective(self) -> Tensor:
        return ad.softmax(self.w) if self.mode == "softmax" else self.w


class Projection:
    """Single affine map applied to every frame."""

    def __init__(self, hidden: int, size: int, rng: np.random.Generator):
        if size not in PROJECTION_SIZES:
            raise ContractError(f"projection size {size} not in {PROJECTION_SIZES}")
        bound = np.sqrt(6.0 / (hidden + size))
        self.weight = Tensor(rng.uniform(-bound, bound, size=(hidden, size)), requires_grad=True)
        self.bias = Tensor(np.zeros(size), requires_grad=True)
        self.size = size


class AttentionParams:
    """Probe vector for frame attention, sized to the post-projection dim."""

    MODES = ("paper_literal", "attentive_stats")

    def __init__(self, size: int, rng: np.random.Generator, mode: str = "paper_literal"):
        if mode not in self.MODES:
            raise ContractError(f"unknown attention mode {mode!r}")
        self.mode = mode
        self.p = Tensor(0.01 * rng.standard_normal(size), requires_grad=True)


def layer_aggregate(feats: Tensor, lw: LayerWeights) -> Tensor:
    """Collapse [l x m x h] to [m x h] with the (normalized) layer weights."""
    if feats.ndim != 3:
        raise DimensionError(f"expected rank-3 features, got {feats.shape}")
    l, m, h = feats.shape
    if lw.w.shape != (l,):
        raise DimensionError(f"{l} layers but {lw.w.shape[0]} layer weights")
    eff = ad.reshape(lw.effective(), (1, l))
    flat = ad.reshape(feats, (l, m * h))
    return ad.reshape(eff @ flat, (m, h))


def project_frames(frames: Tensor, proj: Projection) -> Tensor:
    """Affine map per frame: [m x h] -> [m x d]."""
    if frames.ndim != 2:
        raise DimensionError(f"expected [m x h], got {frames.shape}")
    return frames @ proj.weight + proj.bias


def average_pool(frames: Tensor) -> Tensor:
    """Framewise mean: [m x d] -> [d]."""
    return ad.frame_mean(frames)


def std_pool(frames: Tensor) -> Tensor:
    """Framewise mean and population standard deviation, concatenated: [m x d] -> [2d]."""
    mean = ad.frame_mean(frames)
    std = ad.sqrt(ad.clamp_min(ad.frame_var(frames), VAR_FLOOR))
    return ad.concat(mean, std)


def attention_weights(frames: Tensor, ap: AttentionParams) -> Tensor:
    """Softmax over frames of p . tanh(frames): an [m] vector."""
    d = frames.shape[1]
    if ap.p.shape != (d,):
        raise DimensionError(f"probe has length {ap.p.shape[0]}, frames have {d} features")
    scores = ad.tanh(frames) @ ad.reshape(ap.p, (d, 1))
    return ad.softmax(ad.reshape(scores, (frames.shape[0],)))


def attention_pool(frames: Tensor, ap: AttentionParams) -> Tensor:
    """Attention-weighted statistics: [m x d] -> [2d].

    paper_literal scales each frame by its attention weight and then takes
    plain mean/std statistics (divisor m). attentive_stats computes the
    attention-weighted mean and the attention-weighted variance around it.
    """
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise DimensionError(f"expected [m x d] with m >= 1, got {frames.shape}")
    w_att = attention_weights(frames, ap)
    if ap.mode == "paper_literal":
        weighted = ad.transpose(ad.mul(ad.transpose(frames), w_att))
        return std_pool(weighted)
    # attentive_stats: weighted first and second moments over frames
    m = frames.shape[0]
    d = frames.shape[1]
    w_row = ad.reshape(w_att, (1, m))
    mean = ad.reshape(w_row @ frames, (d,))
    centered = ad.sub(frames, mean)
    var = ad.reshape(w_row @ ad.mul(centered, centered), (d,))
    std = ad.sqrt(ad.clamp_min(var, VAR_FLOOR))
    return ad.concat(mean, std)


def pooled_size(pooling: str, projection_size: int) -> int:
    if pooling == "average":
        return projection_size
    if pooling in ("std", "attention"):
        return 2 * projection_size
    raise ContractError(f"unknown pooling type {pooling!r}")


def pool(frames: Tensor, pooling: str, ap: AttentionParams | None = None) -> Tensor:
    if pooling == "average":
        return average_pool(frames)
    if pooling == "std":
        return std_pool(frames)
    if pooling == "attention":
        if ap is None:
            raise ContractError("attention pooling needs AttentionParams")
        return attention_pool(frames, ap)
    raise ContractError(f"unknown pooling type {pooling!r}")
