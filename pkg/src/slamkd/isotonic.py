"""Bounded isotonic regression and teacher accuracy-statistics estimation.

``fit_accuracy_statistics`` maps the teacher's top-j margin to the
probability that the true class is among the teacher's top-j classes, one
monotone step function per ``j``. Those maps give ``alpha_hat(x)`` (j = 1)
and the adaptive confusion width ``k_hat(x)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from slamkd.probvec import margin_k, top_masks

FORMAT_VERSION = 1


@dataclass(frozen=True)
class IsotonicModel:
    breakpoints: np.ndarray
    values: np.ndarray
    lb: float

    def __call__(self, c):
        return predict(self, c)

    def to_dict(self) -> dict:
        return {
            "breakpoints": [float(v) for v in self.breakpoints],
            "values": [float(v) for v in self.values],
            "lb": float(self.lb),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsotonicModel":
        return cls(np.asarray(d["breakpoints"], dtype=float), np.asarray(d["values"], dtype=float), float(d["lb"]))


def pava(y, w) -> np.ndarray:
    """Weighted least-squares nondecreasing fit of ``y`` (already ordered)."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    # stack of pooled blocks: (mean, weight, count)
    means, weights, counts = [], [], []
    for yi, wi in zip(y, w):
        m, wt, c = yi, wi, 1
        while means and means[-1] > m:
            pm, pw, pc = means.pop(), weights.pop(), counts.pop()
            m = (pm * pw + m * wt) / (pw + wt)
            wt += pw
            c += pc
        means.append(m)
        weights.append(wt)
        counts.append(c)
    return np.repeat(means, counts)


def pava_bounded(covariates, responses, lb: float = 0.0) -> IsotonicModel:
    """Least-squares nondecreasing fit of ``responses`` on ``covariates``, boxed to ``[lb, 1]``.

    Duplicate covariates are pooled first (weighted by multiplicity); the
    box constraint is applied by clipping the unconstrained fit, which is
    the exact minimizer of the bounded problem.
    """
    c = np.asarray(covariates, dtype=float).ravel()
    r = np.asarray(responses, dtype=float).ravel()
    if c.size == 0:
        raise ValueError("isotonic regression needs at least one pair")
    if c.shape != r.shape:
        raise ValueError("covariates and responses differ in length")
    if not 0 <= lb <= 1:
        raise ValueError(f"lb must lie in [0, 1], got {lb}")
    uniq, inv, counts = np.unique(c, return_inverse=True, return_counts=True)
    sums = np.bincount(inv, weights=r)
    fit = pava(sums / counts, counts)
    return IsotonicModel(uniq, np.clip(fit, lb, 1.0), float(lb))


def predict(model: IsotonicModel, c):
    """Fitted value at the smallest breakpoint ``>= c``; the last value beyond the range."""
    idx = np.searchsorted(model.breakpoints, np.asarray(c, dtype=float), side="left")
    out = model.values[np.minimum(idx, len(model.values) - 1)]
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AccuracyEstimator:
    """Top-j accuracy models for j = 1..L-1 plus the selection rule for ``k_hat``.

    ``k_mode`` is ``"adaptive"`` or a fixed integer width.
    """

    models: tuple
    lb: float
    t: float
    k_mode: object = "adaptive"

    @property
    def num_classes(self) -> int:
        return len(self.models) + 1

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "lb": float(self.lb),
            "t": float(self.t),
            "k_mode": self.k_mode,
            "models": [m.to_dict() for m in self.models],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AccuracyEstimator":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported estimator format {d.get('format_version')!r}")
        return cls(tuple(IsotonicModel.from_dict(m) for m in d["models"]), float(d["lb"]), float(d["t"]), d["k_mode"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AccuracyEstimator":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_k_mode(k_mode, L):
    if k_mode == "adaptive":
        return k_mode
    try:
        k = int(k_mode)
    except (TypeError, ValueError):
        raise ValueError(f"k_mode must be 'adaptive' or an integer, got {k_mode!r}") from None
    if not 2 <= k <= L:
        raise ValueError(f"fixed k must lie in [2, {L}], got {k}")
    return k


def fit_accuracy_statistics(soft_labels, labels, lb: float = 0.5, t: float = 0.9, k_mode="adaptive") -> AccuracyEstimator:
    """Fit ``alpha_hat_j`` on (top-j margin, true class in top-j) pairs from validation data."""
    soft_labels = np.atleast_2d(np.asarray(soft_labels, dtype=float))
    labels = np.asarray(labels, dtype=int).ravel()
    n, L = soft_labels.shape
    if L < 2:
        raise ValueError("accuracy statistics need at least 2 classes")
    if n < 2:
        raise ValueError("accuracy statistics need at least 2 validation examples")
    if len(labels) != n:
        raise ValueError("soft labels and labels differ in length")
    k_mode = _check_k_mode(k_mode, L)
    rows = np.arange(n)
    models = []
    for j in range(1, L):
        covariate = margin_k(soft_labels, j)
        hit = top_masks(soft_labels, np.full(n, j))[rows, labels].astype(float)
        models.append(pava_bounded(covariate, hit, lb))
    return AccuracyEstimator(tuple(models), float(lb), float(t), k_mode)


def estimate_alpha(est: AccuracyEstimator, y_s):
    return predict(est.models[0], margin_k(y_s, 1))


def top_accuracy_table(est: AccuracyEstimator, y_s) -> np.ndarray:
    """``alpha_hat_r(y_s)`` for r = 1..L as the last axis (``alpha_hat_L = 1``)."""
    y_s = np.asarray(y_s, dtype=float)
    cols = [np.asarray(predict(m, margin_k(y_s, j + 1))) for j, m in enumerate(est.models)]
    cols.append(np.ones(np.shape(cols[0])))
    return np.stack(cols, axis=-1)


def estimate_k(est: AccuracyEstimator, y_s):
    """Smallest ``r`` with ``alpha_hat_r >= t``, clamped to at least 2."""
    y_s = np.asarray(y_s, dtype=float)
    if est.k_mode != "adaptive":
        k = np.full(y_s.shape[:-1], int(est.k_mode))
        return int(k) if k.ndim == 0 else k
    table = top_accuracy_table(est, y_s)
    r = np.argmax(table >= est.t, axis=-1) + 1
    r = np.maximum(r, 2)
    return int(r) if np.ndim(r) == 0 else r
