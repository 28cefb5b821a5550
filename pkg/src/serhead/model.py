"""The trainable classification head and its architecture descriptor.

Forward pass: aggregate layers -> project frames -> pool over time ->
condition -> linear classifier. Which parameter blocks exist follows from
the descriptor, so checkpoints are exactly one tensor file per parameter
plus a JSON descriptor.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import conditioning as cond
from . import pooling
from .autodiff import Tensor
from .dataset import NUM_CLASSES, TEXT_DIM
from .errors import ContractError
from .tensorfile import read_tensor, write_tensor

POOLING_TYPES = ("average", "std", "attention")

# Conditioning surface: "sum_third" is the gender+text three-way average;
# the text_* modes cover the remaining text-conditioning mechanisms.
CONDITIONING_MODES = (
    "none", "sum", "sum_half", "multiplication", "stack_linear", "cln",
    "sum_third", "text_multiplication", "text_cln",
)
TEXT_CONDITIONED = ("sum_third", "text_multiplication", "text_cln")


@dataclass
class Architecture:
    pooling: str = "std"
    attention_mode: str = "paper_literal"
    conditioning: str = "none"
    projection_size: int = 256
    label_smoothing: float = 0.0
    weight_mode: str = "inverse_frequency"
    dropout_rate: float = 0.1
    layer_weight_mode: str = "softmax"

    def validate(self) -> None:
        if self.pooling not in POOLING_TYPES:
            raise ContractError(f"unknown pooling {self.pooling!r}")
        if self.attention_mode not in pooling.AttentionParams.MODES:
            raise ContractError(f"unknown attention mode {self.attention_mode!r}")
        if self.conditioning not in CONDITIONING_MODES:
            raise ContractError(f"unknown conditioning {self.conditioning!r}")
        if self.projection_size not in pooling.PROJECTION_SIZES:
            raise ContractError(f"projection size {self.projection_size} not in "
                                f"{pooling.PROJECTION_SIZES}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ContractError("label_smoothing must be in [0, 1)")
        if self.weight_mode not in ("literal_eq11", "inverse_frequency"):
            raise ContractError(f"unknown weight mode {self.weight_mode!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractError("dropout_rate must be in [0, 1)")
        if self.layer_weight_mode not in ("raw", "softmax"):
            raise ContractError(f"unknown layer_weight_mode {self.layer_weight_mode!r}")

    @property
    def uses_text(self) -> bool:
        return self.conditioning in TEXT_CONDITIONED

    @property
    def uses_gender(self) -> bool:
        return self.conditioning != "none"

    def pooled_size(self) -> int:
        return pooling.pooled_size(self.pooling, self.projection_size)


def table5_architectures(projection_size: int | None = None) -> dict[str, Architecture]:
    """The five submission model configurations; pooled size may be overridden."""
    def size(default):
        return default if projection_size is None else projection_size

    return {
        "model1": Architecture(pooling="attention", projection_size=size(256)),
        "model2": Architecture(pooling="std", projection_size=size(32)),
        "model3": Architecture(pooling="std", projection_size=size(256),
                               conditioning="multiplication"),
        "model4": Architecture(pooling="std", projection_size=size(256),
                               conditioning="sum_third"),
        "model5": Architecture(pooling="std", projection_size=size(256),
                               conditioning="sum_third", label_smoothing=0.1),
    }


class HeadModel:
    """Parameter container plus the forward pass for one architecture."""

    def __init__(self, arch: Architecture, num_layers: int, hidden: int,
                 rng: np.random.Generator):
        arch.validate()
        self.arch = arch
        self.num_layers = num_layers
        self.hidden = hidden
        q = arch.pooled_size()

        self.layer_weights = pooling.LayerWeights(num_layers, arch.layer_weight_mode)
        self.projection = pooling.Projection(hidden, arch.projection_size, rng)
        self.attention = (pooling.AttentionParams(arch.projection_size, rng, arch.attention_mode)
                          if arch.pooling == "attention" else None)
        self.gender_table = cond.GenderEmbeddingTable(q, rng) if arch.uses_gender else None
        self.stack_linear = (cond.StackLinearParams(q, rng)
                             if arch.conditioning == "stack_linear" else None)
        self.cln_params = (cond.CLNParams(q, q, rng)
                           if arch.conditioning in ("cln", "text_cln") else None)
        self.text_projector = (cond.TextProjector(TEXT_DIM, q, rng, arch.dropout_rate)
                               if arch.uses_text else None)
        if arch.conditioning == "text_cln":
            self.text_reduce_weight = Tensor(cond.glorot_uniform(rng, 2 * q, q), requires_grad=True)
            self.text_reduce_bias = Tensor(np.zeros(q), requires_grad=True)
        else:
            self.text_reduce_weight = None
            self.text_reduce_bias = None
        bound = np.sqrt(6.0 / (q + NUM_CLASSES))
        self.classifier_weight = Tensor(rng.uniform(-bound, bound, size=(q, NUM_CLASSES)),
                                        requires_grad=True)
        self.classifier_bias = Tensor(np.zeros(NUM_CLASSES), requires_grad=True)

    # -- parameters ------------------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        params = {
            "layer_weights.w": self.layer_weights.w,
            "projection.weight": self.projection.weight,
            "projection.bias": self.projection.bias,
        }
        if self.attention is not None:
            params["attention.p"] = self.attention.p
        if self.gender_table is not None:
            params["gender.table"] = self.gender_table.table
        if self.stack_linear is not None:
            params["stack_linear.weight"] = self.stack_linear.weight
            params["stack_linear.bias"] = self.stack_linear.bias
        if self.cln_params is not None:
            params["cln.gain_weight"] = self.cln_params.gain_weight
            params["cln.gain_bias"] = self.cln_params.gain_bias
            params["cln.shift_weight"] = self.cln_params.shift_weight
            params["cln.shift_bias"] = self.cln_params.shift_bias
        if self.text_projector is not None:
            params["text.weight"] = self.text_projector.weight
            params["text.bias"] = self.text_projector.bias
            params["text.ln_gain"] = self.text_projector.ln_gain
            params["text.ln_bias"] = self.text_projector.ln_bias
        if self.text_reduce_weight is not None:
            params["text_reduce.weight"] = self.text_reduce_weight
            params["text_reduce.bias"] = self.text_reduce_bias
        params["classifier.weight"] = self.classifier_weight
        params["classifier.bias"] = self.classifier_bias
        return params

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters().values())

    # -- forward ---------------------------------------------------------------

    def forward(self, feats: Tensor, gender_id: int, text: Tensor | None = None,
                training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Logits [NUM_CLASSES] for a single utterance's [l x m x h] features."""
        frames = pooling.layer_aggregate(feats, self.layer_weights)
        frames = pooling.project_frames(frames, self.projection)
        pooled = pooling.pool(frames, self.arch.pooling, self.attention)
        x = self._condition(pooled, gender_id, text, training, rng)
        return cond.affine_vec(x, self.classifier_weight, self.classifier_bias)

    def _condition(self, pooled, gender_id, text, training, rng):
        mode = self.arch.conditioning
        if mode == "none":
            return pooled
        e_gender = self.gender_table.lookup(gender_id)
        if mode in ("sum", "sum_half", "multiplication", "stack_linear", "cln"):
            return cond.gender_condition(pooled, e_gender, mode,
                                         stack_params=self.stack_linear,
                                         cln_params=self.cln_params)
        if text is None:
            raise ContractError(f"conditioning {mode!r} needs a text embedding")
        text_mode = {"sum_third": "sum_third",
                     "text_multiplication": "multiplication",
                     "text_cln": "cln"}[mode]
        return cond.text_condition(pooled, e_gender, text, self.text_projector, text_mode,
                                   reduce_weight=self.text_reduce_weight,
                                   reduce_bias=self.text_reduce_bias,
                                   cln_params=self.cln_params,
                                   rng=rng, training=training)

    def predict_proba(self, feats: Tensor, gender_id: int, text: Tensor | None = None) -> np.ndarray:
        logits = self.forward(feats, gender_id, text, training=False)
        return ad.softmax(logits).data.copy()

    # -- checkpointing -----------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(state) != set(params):
            raise ContractError("checkpoint parameters do not match the architecture")
        for name, p in params.items():
            if state[name].shape != p.data.shape:
                raise ContractError(f"{name}: checkpoint shape {state[name].shape} "
                                    f"!= model shape {p.data.shape}")
            p.data = np.asarray(state[name], dtype=np.float64)

    def save(self, ckpt_dir) -> None:
        ckpt_dir = Path(ckpt_dir)
        (ckpt_dir / "params").mkdir(parents=True, exist_ok=True)
        descriptor = {
            "architecture": asdict(self.arch),
            "num_layers": self.num_layers,
            "hidden": self.hidden,
            "parameters": sorted(self.parameters()),
        }
        (ckpt_dir / "descriptor.json").write_text(json.dumps(descriptor, indent=2, sort_keys=True))
        for name, p in self.parameters().items():
            write_tensor(p, ckpt_dir / "params" / f"{name}.sert")

    @staticmethod
    def load(ckpt_dir) -> "HeadModel":
        ckpt_dir = Path(ckpt_dir)
        descriptor = json.loads((ckpt_dir / "descriptor.json").read_text())
        arch = Architecture(**descriptor["architecture"])
        model = HeadModel(arch, descriptor["num_layers"], descriptor["hidden"],
                          np.random.default_rng(0))
        state = {name: read_tensor(ckpt_dir / "params" / f"{name}.sert").data
                 for name in descriptor["parameters"]}
        model.load_state_arrays(state)
        return model
