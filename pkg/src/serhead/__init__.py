"""serhead: a speech-emotion-recognition head over precomputed upstream features.

Layer-weighted aggregation, temporal pooling (average / mean+std /
attention-weighted statistics), gender and text conditioning, weighted
cross-entropy training with label smoothing, macro-F1 evaluation, and
constrained fusion of multiple models' predictions.
"""

from .autodiff import Tensor, backward, finite_diff_check
from .cobyla import CobylaResult, cobyla_minimize
from .dataset import (EMOTIONS, NUM_CLASSES, Manifest, SyntheticSpec,
                      generate_synthetic_dataset, load_manifest)
from .fusion import (FusionWeights, PredictionSet, fit_fusion_weights, fuse_predict,
                     load_prediction_set)
from .losses import ClassWeightSpec, class_weights, smooth_labels, weighted_cross_entropy
from .metrics import f1_scores, metrics_dict
from .model import Architecture, HeadModel, table5_architectures
from .tensorfile import read_tensor, write_tensor
from .train import TrainConfig, evaluate, random_crop, train

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "finite_diff_check",
    "CobylaResult", "cobyla_minimize",
    "EMOTIONS", "NUM_CLASSES", "Manifest", "SyntheticSpec",
    "generate_synthetic_dataset", "load_manifest",
    "FusionWeights", "PredictionSet", "fit_fusion_weights", "fuse_predict",
    "load_prediction_set",
    "ClassWeightSpec", "class_weights", "smooth_labels", "weighted_cross_entropy",
    "f1_scores", "metrics_dict",
    "Architecture", "HeadModel", "table5_architectures",
    "read_tensor", "write_tensor",
    "TrainConfig", "evaluate", "random_crop", "train",
    "__version__",
]
