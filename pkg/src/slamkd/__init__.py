"""Student-label mixing distillation at desk scale."""

from slamkd.mixing import MixVariant, mix, slam_example_loss, slam_objective
from slamkd.probvec import cross_entropy, err, hard_label, margin_k, softmax_temp, top_mask

__version__ = "0.1.0"

__all__ = [
    "MixVariant",
    "cross_entropy",
    "err",
    "hard_label",
    "margin_k",
    "mix",
    "slam_example_loss",
    "slam_objective",
    "softmax_temp",
    "top_mask",
]
