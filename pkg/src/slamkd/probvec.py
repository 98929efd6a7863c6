"""Label-space primitives: top-k masks, margins, softmax, cross-entropy.

Every function operates on the last axis, so a single score vector of
shape ``(L,)`` and a batch of shape ``(n, L)`` are handled alike. Ties are
always broken in favour of the lowest index.
"""

from __future__ import annotations

import numpy as np

LOG_FLOOR = 1e-12
SIMPLEX_TOL = 1e-9


def _as_scores(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] < 2:
        raise ValueError(f"score vectors need at least 2 entries, got shape {z.shape}")
    return z


def descending_order(z) -> np.ndarray:
    """Indices sorting ``z`` from largest to smallest, lowest index first on ties."""
    z = _as_scores(z)
    return np.argsort(-z, axis=-1, kind="stable")


def top_mask(z, k: int) -> np.ndarray:
    """0/1 vector marking the ``k`` largest entries of ``z``.

    >>> top_mask([1, 2, 3], 1)
    array([0, 0, 1])
    """
    z = _as_scores(z)
    L = z.shape[-1]
    if not 1 <= k <= L:
        raise ValueError(f"k must lie in [1, {L}], got {k}")
    order = descending_order(z)
    mask = np.zeros(z.shape, dtype=int)
    np.put_along_axis(mask, order[..., :k], 1, axis=-1)
    return mask


def top_masks(z, k) -> np.ndarray:
    """Row-wise ``top_mask`` with a per-row ``k`` (array broadcast over the batch)."""
    z = _as_scores(z)
    L = z.shape[-1]
    k = np.asarray(k, dtype=int)
    if np.any(k < 1) or np.any(k > L):
        raise ValueError(f"every k must lie in [1, {L}]")
    order = descending_order(z)
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(L), axis=-1)
    return (rank < k[..., None]).astype(int)


def margin_k(p, k: int):
    """Sum of the ``k`` largest entries minus the ``(k+1)``-th largest."""
    p = _as_scores(p)
    L = p.shape[-1]
    if not 1 <= k <= L - 1:
        raise ValueError(f"margin_k needs 1 <= k <= {L - 1}, got {k}")
    s = -np.sort(-p, axis=-1)
    out = s[..., :k].sum(axis=-1) - s[..., k]
    return float(out) if out.ndim == 0 else out


def softmax_temp(logits, temperature: float = 1.0) -> np.ndarray:
    """Softmax of ``logits / temperature`` with max-subtraction."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = _as_scores(logits) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(p, q):
    """``-sum(p * log(max(q, 1e-12)))``; ``q`` need not be normalized."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = -(p * np.log(np.maximum(q, LOG_FLOOR))).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def err(v, u):
    """1 when the argmax positions of ``v`` and ``u`` differ, else 0."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    if v.shape != u.shape:
        raise ValueError(f"length mismatch: {v.shape} vs {u.shape}")
    out = (np.argmax(v, axis=-1) != np.argmax(u, axis=-1)).astype(int)
    return int(out) if out.ndim == 0 else out


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    return np.eye(num_classes)[labels]


def hard_label(y_s) -> np.ndarray:
    """One-hot vector at the argmax of ``y_s``."""
    y_s = _as_scores(y_s)
    return one_hot(np.argmax(y_s, axis=-1), y_s.shape[-1])


def is_normalized(p, tol: float = SIMPLEX_TOL) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(np.all(p >= 0) and np.all(np.abs(p.sum(axis=-1) - 1.0) <= tol))
