"""Gender and text conditioning of the pooled representation.

Gender modes: none, sum, sum_half, multiplication, stack_linear, cln.
Text modes (all of which also fold in the gender embedding): sum_third
(the three-way average), multiplication, and cln via a concatenate-reduce
step.

The conditional layer normalization here divides by sqrt(var + eps) --
standard layer-norm semantics -- with mean/var taken over the feature axis
of the pooled vector, never over a batch.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError

LN_EPS = 1e-5

GENDER_MODES = ("none", "sum", "sum_half", "multiplication", "stack_linear", "cln")
TEXT_MODES = ("sum_third", "multiplication", "cln")


def affine_vec(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    n_in = x.shape[0]
    out = ad.reshape(ad.reshape(x, (1, n_in)) @ weight, (weight.shape[1],))
    return out + bias


def glorot_uniform(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_in, n_out))


class GenderEmbeddingTable:
    """Two trainable rows, one per gender id; sized to the pooled vector."""

    def __init__(self, size: int, rng: np.random.Generator):
        self.table = Tensor(rng.uniform(-0.1, 0.1, size=(2, size)), requires_grad=True)

    def lookup(self, gender_id: int) -> Tensor:
        if gender_id not in (0, 1):
            raise ContractError(f"gender_id must be 0 or 1, got {gender_id}")
        return ad.take_row(self.table, gender_id)


class StackLinearParams:
    """Affine reduction of [pooled; condition] back to the pooled size."""

    def __init__(self, size: int, rng: np.random.Generator):
        self.weight = Tensor(glorot_uniform(rng, 2 * size, size), requires_grad=True)
        self.bias = Tensor(np.zeros(size), requires_grad=True)


class CLNParams:
    """Linear maps turning a condition vector into per-feature gain and shift.

    The gain map's bias starts at one so the conditioned normalization is
    near-neutral at init.
    """

    def __init__(self, cond_size: int, size: int, rng: np.random.Generator, eps: float = LN_EPS):
        self.gain_weight = Tensor(glorot_uniform(rng, cond_size, size), requires_grad=True)
        self.gain_bias = Tensor(np.ones(size), requires_grad=True)
        self.shift_weight = Tensor(glorot_uniform(rng, cond_size, size), requires_grad=True)
        self.shift_bias = Tensor(np.zeros(size), requires_grad=True)
        self.eps = eps


class TextProjector:
    """Maps a raw 384-dim text embedding to the pooled size.

    Linear -> layer normalization (trainable gain/bias) -> ReLU -> dropout.
    Dropout is active only in training mode.
    """

    def __init__(self, text_dim: int, size: int, rng: np.random.Generator,
                 dropout_rate: float = 0.1):
        self.weight = Tensor(glorot_uniform(rng, text_dim, size), requires_grad=True)
        self.bias = Tensor(np.zeros(size), requires_grad=True)
        self.ln_gain = Tensor(np.ones(size), requires_grad=True)
        self.ln_bias = Tensor(np.zeros(size), requires_grad=True)
        self.dropout_rate = dropout_rate

    def apply(self, text: Tensor, rng: np.random.Generator | None = None,
              training: bool = False) -> Tensor:
        h = affine_vec(text, self.weight, self.bias)
        h = normalize_features(h, LN_EPS)
        h = ad.mul(h, self.ln_gain) + self.ln_bias
        h = ad.relu(h)
        if training and self.dropout_rate > 0.0:
            if rng is None:
                raise ContractError("training-mode TextProjector needs an rng for dropout")
            h = ad.dropout(h, self.dropout_rate, rng, training=True)
        return h


def normalize_features(x: Tensor, eps: float) -> Tensor:
    """(x - mean) / sqrt(var + eps) with scalar moments over the feature axis."""
    q = x.shape[0]
    mean = ad.scale(ad.tensor_sum(x), 1.0 / q)
    centered = ad.sub(x, mean)
    var = ad.scale(ad.tensor_sum(ad.mul(centered, centered)), 1.0 / q)
    return ad.div(centered, ad.sqrt(var + eps))


def cln(x: Tensor, condition: Tensor, params: CLNParams) -> Tensor:
    """Normalize x, then scale and shift it by affine functions of the condition."""
    gain = affine_vec(condition, params.gain_weight, params.gain_bias)
    shift = affine_vec(condition, params.shift_weight, params.shift_bias)
    return ad.mul(gain, normalize_features(x, params.eps)) + shift


def gender_condition(x_pooled: Tensor, e_gender: Tensor, mode: str,
                     stack_params: StackLinearParams | None = None,
                     cln_params: CLNParams | None = None) -> Tensor:
    """Combine the pooled vector with a gender embedding of the same length."""
    if mode not in GENDER_MODES:
        raise ContractError(f"unknown gender conditioning mode {mode!r}")
    if mode == "none":
        return x_pooled
    if x_pooled.shape != e_gender.shape:
        raise DimensionError(f"pooled {x_pooled.shape} vs embedding {e_gender.shape}")
    if mode == "sum":
        return x_pooled + e_gender
    if mode == "sum_half":
        return ad.scale(x_pooled + e_gender, 0.5)
    if mode == "multiplication":
        return ad.mul(x_pooled, e_gender)
    if mode == "stack_linear":
        if stack_params is None:
            raise ContractError("stack_linear mode needs StackLinearParams")
        return affine_vec(ad.concat(x_pooled, e_gender), stack_params.weight, stack_params.bias)
    if cln_params is None:
        raise ContractError("cln mode needs CLNParams")
    return cln(x_pooled, e_gender, cln_params)


def text_condition(x_pooled: Tensor, e_gender: Tensor, e_text_raw: Tensor,
                   projector: TextProjector, mode: str,
                   reduce_weight: Tensor | None = None,
                   reduce_bias: Tensor | None = None,
                   cln_params: CLNParams | None = None,
                   rng: np.random.Generator | None = None,
                   training: bool = False) -> Tensor:
    """Condition on gender and projected text together.

    sum_third averages the three summands; multiplication is the pointwise
    triple product; cln concatenates the two condition vectors, reduces them
    back to the pooled size with a trainable affine map, and applies
    conditional layer normalization with the result.
    """
    if mode not in TEXT_MODES:
        raise ContractError(f"unknown text conditioning mode {mode!r}")
    if x_pooled.shape != e_gender.shape:
        raise DimensionError(f"pooled {x_pooled.shape} vs embedding {e_gender.shape}")
    f_text = projector.apply(e_text_raw, rng=rng, training=training)
    if f_text.shape != x_pooled.shape:
        raise DimensionError(f"projected text {f_text.shape} vs pooled {x_pooled.shape}")
    if mode == "sum_third":
        return ad.scale(x_pooled + e_gender + f_text, 1.0 / 3.0)
    if mode == "multiplication":
        return ad.mul(ad.mul(x_pooled, e_gender), f_text)
    if reduce_weight is None or reduce_bias is None or cln_params is None:
        raise ContractError("text cln mode needs the reduction affine and CLNParams")
    condition = affine_vec(ad.concat(e_gender, f_text), reduce_weight, reduce_bias)
    return cln(x_pooled, condition, cln_params)
