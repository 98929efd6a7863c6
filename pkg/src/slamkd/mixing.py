"""Student-label mixing: pushing the teacher's noise model onto the student.

``mix`` blends the student's prediction with a distractor distribution
restricted to the teacher's top-k classes. Training the mixed student
against noisy teacher labels drives the un-mixed student toward the truth.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from slamkd.probvec import cross_entropy


class MixVariant(str, Enum):
    """Whether the distractor mass is divided by ``k - 1``."""

    NORMALIZED = "normalized"
    UNNORMALIZED = "unnormalized"

    @classmethod
    def parse(cls, value) -> "MixVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown mix variant {value!r}") from None


def distractor_scale(k, variant: MixVariant) -> np.ndarray:
    """Per-example divisor applied to the distractor term (``k-1`` or 1)."""
    variant = MixVariant.parse(variant)
    k = np.asarray(k, dtype=float)
    if variant is MixVariant.UNNORMALIZED:
        return np.ones_like(k)
    if np.any(k < 2):
        raise ValueError("normalized mixing needs k >= 2 (divides by k - 1)")
    return k - 1.0


def mix(f, alpha, k, mask, variant=MixVariant.NORMALIZED) -> np.ndarray:
    """``alpha*f + (1 - alpha) * mask * (1 - f) / (k - 1)``.

    ``f`` and ``mask`` have shape ``(..., L)``; ``alpha`` and ``k`` broadcast
    over the leading axes. The unnormalized variant drops the ``k - 1``
    divisor. The result is not renormalized.
    """
    f = np.asarray(f, dtype=float)
    mask = np.asarray(mask, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0) or np.any(alpha > 1):
        raise ValueError("alpha must lie in [0, 1]")
    if mask.shape != f.shape:
        raise ValueError(f"mask shape {mask.shape} does not match f shape {f.shape}")
    scale = distractor_scale(k, variant)
    a = alpha[..., None]
    return a * f + (1.0 - a) * mask * (1.0 - f) / scale[..., None]


def slam_example_loss(y, f, alpha, k, mask, variant=MixVariant.NORMALIZED):
    """Cross-entropy of the label ``y`` against the mixed student output."""
    return cross_entropy(y, mix(f, alpha, k, mask, variant))


def slam_objective(
    labeled_targets,
    labeled_outputs,
    pseudo_targets,
    pseudo_outputs,
    alpha,
    k,
    mask,
    variant=MixVariant.NORMALIZED,
    weights=None,
) -> float:
    """Average of plain CE over the labeled batch and mixed CE over the pseudo batch.

    ``weights`` (optional, nonnegative) multiply the pseudo-labeled losses only;
    labeled examples always carry weight 1. The normalizer is the total count
    ``|A| + |B|`` regardless of the weights.
    """
    labeled_targets = np.asarray(labeled_targets, dtype=float)
    pseudo_targets = np.asarray(pseudo_targets, dtype=float)
    n_a = labeled_targets.shape[0] if labeled_targets.size else 0
    n_b = pseudo_targets.shape[0] if pseudo_targets.size else 0
    if n_a + n_b == 0:
        raise ValueError("objective over an empty batch")
    total = 0.0
    if n_a:
        total += float(np.sum(cross_entropy(labeled_targets, labeled_outputs)))
    if n_b:
        losses = np.atleast_1d(slam_example_loss(pseudo_targets, pseudo_outputs, alpha, k, mask, variant))
        if weights is None:
            w = np.ones(n_b)
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (n_b,):
                raise ValueError(f"expected {n_b} weights, got shape {w.shape}")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
        total += float(np.dot(w, losses))
    return total / (n_a + n_b)
