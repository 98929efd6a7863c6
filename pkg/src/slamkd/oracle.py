"""Synthetic datasets and the structured noisy-teacher simulator.

The simulator realizes the teacher noise model exactly: on example ``x`` the
teacher's top-1 label is the truth with probability ``alpha(x)``, otherwise a
uniformly random *other* class among the top-``k(x)`` entries of its soft
label, and the truth is always inside that top-``k(x)`` set.

Randomness comes from numpy's PCG64 generator; independent streams are
derived with ``SeedSequence.spawn``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from slamkd.mixing import MixVariant, mix
from slamkd.probvec import one_hot, top_masks


class InvalidTeacherSpec(ValueError):
    """The true class is not inside the teacher's top-k set for some example."""


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


@dataclass(frozen=True)
class LabeledExample:
    x: np.ndarray
    g: np.ndarray


@dataclass
class Dataset:
    """Features ``X`` of shape ``(n, d)`` with integer class ``labels``."""

    X: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.X) != len(self.labels):
            raise ValueError("X and labels disagree on the number of examples")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i) -> LabeledExample:
        return LabeledExample(self.X[i], one_hot(self.labels[i], self.num_classes))

    @property
    def onehot(self) -> np.ndarray:
        return one_hot(self.labels, self.num_classes)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.labels[idx], self.num_classes)


@dataclass(frozen=True)
class HalfspaceTruth:
    w_star: np.ndarray
    gamma: float

    def labels(self, X) -> np.ndarray:
        # class 0 iff w*.x > 0
        return (np.asarray(X) @ self.w_star <= 0).astype(int)


# --------------------------------------------------------------------------
# datasets


def _class_means(L: int, d: int, separation: float, rng, max_tries: int = 2000) -> np.ndarray:
    if L <= d:
        q, _ = np.linalg.qr(rng.standard_normal((d, L)))
        return q.T * (separation / math.sqrt(2.0))
    # More classes than dimensions: points on a sphere of radius `separation`,
    # so pairwise distance >= separation means pairwise angle >= 60 degrees.
    means = []
    tries = 0
    while len(means) < L:
        tries += 1
        if tries > max_tries * L:
            raise ValueError(
                f"cannot place {L} class means in {d} dimensions at separation {separation}"
            )
        v = rng.standard_normal(d)
        v *= separation / np.linalg.norm(v)
        if all(np.linalg.norm(v - m) >= separation for m in means):
            means.append(v)
    return np.array(means)


def gen_gaussian_mixture(L: int, d: int, n: int, separation: float, seed, sigma: float = 1.0):
    """Isotropic Gaussian classes with means pairwise ``separation`` apart.

    All points are divided by a fixed scale ``max|mu| + sigma*(sqrt(d)+3)``
    and any remaining outliers are projected onto the unit ball, so every
    ``|x| <= 1``. Returns ``(dataset, means)`` with means in the scaled frame.
    """
    if L < 2 or d < 1 or n < 0:
        raise ValueError(f"need L >= 2, d >= 1, n >= 0 (got L={L}, d={d}, n={n})")
    if not separation > 0 or not sigma > 0:
        raise ValueError("separation and sigma must be positive")
    rng = make_rng(seed)
    means = _class_means(L, d, separation, rng)
    labels = rng.integers(0, L, size=n)
    X = means[labels] + sigma * rng.standard_normal((n, d))
    scale = np.linalg.norm(means, axis=1).max() + sigma * (math.sqrt(d) + 3.0)
    X /= scale
    X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1.0)
    return Dataset(X, labels, L), means / scale


def sample_unit_ball(n: int, d: int, rng) -> np.ndarray:
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * rng.random((n, 1)) ** (1.0 / d)


def sample_margin_points(truth: HalfspaceTruth, n: int, rng) -> np.ndarray:
    """``n`` points uniform on the unit ball conditioned on ``|w*.x| >= gamma``."""
    d = truth.w_star.shape[0]
    out = np.empty((n, d))
    filled = 0
    batch = max(64, n)
    while filled < n:
        cand = sample_unit_ball(batch, d, rng)
        keep = cand[np.abs(cand @ truth.w_star) >= truth.gamma]
        take = min(len(keep), n - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def gen_margin_halfspace(d: int, gamma: float, n: int, seed):
    """A random unit normal ``w*`` and ``n`` labeled points with margin ``gamma``."""
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    rng = make_rng(seed)
    w = rng.standard_normal(d)
    truth = HalfspaceTruth(w / np.linalg.norm(w), float(gamma))
    X = sample_margin_points(truth, n, rng)
    return truth, Dataset(X, truth.labels(X), 2)


# --------------------------------------------------------------------------
# noisy teacher


TEACHER_MODES = ("constant", "margin-correlated", "rcn")


@dataclass
class NoisyTeacherSpec:
    """Per-example accuracy ``alpha``, confusion width ``k`` and reference soft label.

    ``soft_labels`` is the teacher's soft label as if it were right: its
    top-``k`` set fixes the candidate classes, and its argmax is the true
    class. Realized teacher outputs swap the argmax with the sampled class,
    which keeps every top-j margin unchanged.
    """

    alpha: np.ndarray
    k: np.ndarray
    soft_labels: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray = field(default=None)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.k = np.asarray(self.k, dtype=int)
        self.soft_labels = np.asarray(self.soft_labels, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        n, L = self.soft_labels.shape
        if self.alpha.shape != (n,) or self.k.shape != (n,) or self.labels.shape != (n,):
            raise ValueError("alpha, k and labels must have one entry per soft label")
        if np.any(self.alpha < 0) or np.any(self.alpha > 1):
            raise ValueError("alpha must lie in [0, 1]")
        if np.any(self.k < 2) or np.any(self.k > L):
            raise ValueError(f"k must lie in [2, {L}]")

    @property
    def num_classes(self) -> int:
        return self.soft_labels.shape[1]

    def __len__(self) -> int:
        return len(self.labels)

    def masks(self) -> np.ndarray:
        return top_masks(self.soft_labels, self.k)

    def validate(self, idx=None) -> None:
        idx = np.arange(len(self)) if idx is None else np.atleast_1d(idx)
        masks = top_masks(self.soft_labels[idx], self.k[idx])
        inside = masks[np.arange(len(idx)), self.labels[idx]] == 1
        if not np.all(inside):
            bad = idx[~inside][:5]
            raise InvalidTeacherSpec(f"true class outside the top-k set for examples {bad.tolist()}")


def _reference_soft_labels(labels, k, conf, L, rng, out_mass=0.1, jitter=0.1, distractor_scores=None):
    n = len(labels)
    rows = np.arange(n)
    # class order with the true class first: truth, k-1 distractors, rest.
    # Distractors are random, or the highest-scoring other classes when scores are given.
    keys = rng.random((n, L))
    if distractor_scores is not None:
        keys = np.argsort(np.argsort(distractor_scores, axis=1, kind="stable"), axis=1) + 0.5 * keys
        keys = keys / (L + 1.0)
    keys[rows, labels] = 2.0
    order = np.argsort(-keys, axis=1, kind="stable")

    kf = k.astype(float)
    out_total = np.where(k < L, out_mass * (1.0 - conf), 0.0)
    inside = 1.0 - out_total
    share = 0.02 + 0.96 * conf
    p_true = inside * (1.0 / kf + (1.0 - 1.0 / kf) * share)

    rank = np.arange(L)[None, :]
    is_dist = (rank >= 1) & (rank < k[:, None])
    is_out = rank >= k[:, None]
    wts = 1.0 + jitter * rng.random((n, L))
    dist_w = np.where(is_dist, wts, 0.0)
    out_w = np.where(is_out, wts, 0.0)
    vals = np.zeros((n, L))
    vals[:, 0] = p_true
    vals += dist_w / np.maximum(dist_w.sum(1, keepdims=True), 1e-300) * (inside - p_true)[:, None]
    vals += out_w / np.maximum(out_w.sum(1, keepdims=True), 1e-300) * out_total[:, None]

    soft = np.empty((n, L))
    np.put_along_axis(soft, order, vals, axis=1)
    return soft


def cyclic_confusion_scores(labels, num_classes: int, k: int) -> np.ndarray:
    """Distractor scores under which class ``c`` is confused with ``c+1, ..., c+k-1`` (mod L)."""
    labels = np.asarray(labels, dtype=int)
    n = len(labels)
    scores = np.zeros((n, num_classes))
    for off in range(1, k):
        scores[np.arange(n), (labels + off) % num_classes] = float(k - off)
    return scores


def make_teacher_spec(labels, num_classes: int, mode: str, params: dict | None = None, seed=0):
    """Build a noisy-teacher description for the examples with true ``labels``.

    Modes:
      ``constant``           alpha and k fixed (keys ``alpha``, ``k``)
      ``margin-correlated``  confidence ``s ~ U(0,1)`` per example,
                             ``alpha = alpha_min + (alpha_max - alpha_min) * s``,
                             and the soft label's top-1 margin grows with ``s``
      ``rcn``                binary only, constant ``alpha`` and ``k = 2``

    Optional params: ``confidence`` (per-example scores in [0, 1] replacing
    the uniform draw), ``distractor_scores`` (``(n, L)``; the ``k - 1``
    highest-scoring wrong classes become the distractors instead of random
    ones) and ``out_mass`` (soft-label mass outside the top-k set).
    """
    params = dict(params or {})
    labels = np.asarray(getattr(labels, "labels", labels), dtype=int)
    L = int(num_classes)
    n = len(labels)
    rng = make_rng(seed)
    if mode not in TEACHER_MODES:
        raise ValueError(f"unknown teacher mode {mode!r}; expected one of {TEACHER_MODES}")
    out_mass = float(params.pop("out_mass", 0.1))
    scores = params.pop("distractor_scores", None)
    if scores is not None:
        scores = np.asarray(scores, dtype=float)
        if scores.shape != (n, L):
            raise ValueError(f"distractor_scores must have shape {(n, L)}")
    conf = rng.random(n)
    given = params.pop("confidence", None)
    if given is not None:
        conf = np.asarray(given, dtype=float)
        if conf.shape != (n,) or np.any(conf < 0) or np.any(conf > 1):
            raise ValueError("confidence must be one value in [0, 1] per example")
    if mode == "rcn":
        if L != 2:
            raise ValueError("rcn teacher requires exactly 2 classes")
        alpha = np.full(n, float(params.pop("alpha", 0.8)))
        k = np.full(n, 2)
    elif mode == "constant":
        alpha = np.full(n, float(params.pop("alpha", 0.8)))
        k = np.full(n, int(params.pop("k", 2)))
    else:
        lo = float(params.pop("alpha_min", 0.2))
        hi = float(params.pop("alpha_max", 1.0))
        if not 0 <= lo <= hi <= 1:
            raise ValueError("need 0 <= alpha_min <= alpha_max <= 1")
        alpha = lo + (hi - lo) * conf
        k = np.full(n, int(params.pop("k", 2)))
    if params:
        raise ValueError(f"unused teacher parameters: {sorted(params)}")
    if np.any(k < 2) or np.any(k > L):
        raise ValueError(f"k must lie in [2, {L}]")
    soft = _reference_soft_labels(labels, k, conf, L, rng, out_mass=out_mass, distractor_scores=scores)
    spec = NoisyTeacherSpec(alpha, k, soft, labels, conf)
    spec.validate()
    return spec


def sample_noisy_labels(spec: NoisyTeacherSpec, rng, idx=None) -> np.ndarray:
    """One draw of the teacher's hard label (as a class index) per example in ``idx``."""
    idx = np.arange(len(spec)) if idx is None else np.asarray(idx, dtype=int)
    spec.validate(idx)
    rng = make_rng(rng)
    m = len(idx)
    truth = spec.labels[idx]
    cand = top_masks(spec.soft_labels[idx], spec.k[idx])
    cand[np.arange(m), truth] = 0
    # j-th remaining candidate in index order, j uniform in [0, k-2]
    j = np.minimum((rng.random(m) * (spec.k[idx] - 1)).astype(int), spec.k[idx] - 2)
    wrong = np.argmax(np.cumsum(cand, axis=1) > j[:, None], axis=1)
    correct = rng.random(m) < spec.alpha[idx]
    return np.where(correct, truth, wrong)


def sample_noisy_label(spec: NoisyTeacherSpec, i: int, rng) -> np.ndarray:
    """One-hot noisy teacher label for example ``i``."""
    c = sample_noisy_labels(spec, rng, [i])[0]
    return one_hot(c, spec.num_classes)


def sample_noisy_label_batch(spec: NoisyTeacherSpec, i: int, rng, size: int) -> np.ndarray:
    """``size`` independent class draws for the single example ``i``."""
    return sample_noisy_labels(spec, rng, np.full(size, i))


def realize_teacher_labels(spec: NoisyTeacherSpec, rng, idx=None):
    """Sample hard labels and the matching soft labels (argmax = sampled class)."""
    idx = np.arange(len(spec)) if idx is None else np.asarray(idx, dtype=int)
    hard = sample_noisy_labels(spec, rng, idx)
    soft = spec.soft_labels[idx].copy()
    rows = np.arange(len(idx))
    truth = spec.labels[idx]
    top = soft[rows, truth].copy()
    soft[rows, truth] = soft[rows, hard]
    soft[rows, hard] = top
    return hard, soft


def expected_noisy_label(spec: NoisyTeacherSpec, idx=None) -> np.ndarray:
    """Closed-form ``E[y | x]``: the normalized mix of the one-hot truth."""
    idx = np.arange(len(spec)) if idx is None else np.asarray(idx, dtype=int)
    g = one_hot(spec.labels[idx], spec.num_classes)
    masks = top_masks(spec.soft_labels[idx], spec.k[idx])
    return mix(g, spec.alpha[idx], spec.k[idx], masks, MixVariant.NORMALIZED)


# --------------------------------------------------------------------------
# CSV


def write_table_csv(path, X=None, labels=None, probs=None) -> None:
    """One row per example: ``x_1..x_d`` then ``label`` and/or ``p_1..p_L``."""
    cols, blocks = [], []
    if X is not None:
        X = np.asarray(X, dtype=float)
        cols += [f"x_{i + 1}" for i in range(X.shape[1])]
        blocks.append(X)
    if probs is not None:
        probs = np.asarray(probs, dtype=float)
        cols += [f"p_{i + 1}" for i in range(probs.shape[1])]
        blocks.append(probs)
    n = len(blocks[0]) if blocks else len(labels)
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols + (["label"] if labels is not None else []))
            for r in range(n):
                row = [repr(float(v)) for b in blocks for v in b[r]]
                if labels is not None:
                    row.append(str(int(labels[r])))
                w.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_table_csv(path):
    """Inverse of :func:`write_table_csv`; returns ``(X, labels, probs)`` with ``None`` for absent parts."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: missing header row")
    header, body = rows[0], rows[1:]
    xi = [i for i, c in enumerate(header) if c.startswith("x_")]
    pi = [i for i, c in enumerate(header) if c.startswith("p_")]
    li = header.index("label") if "label" in header else None
    known = set(xi) | set(pi) | ({li} if li is not None else set())
    if len(known) != len(header):
        extra = [c for i, c in enumerate(header) if i not in known]
        raise ValueError(f"{path}: unexpected columns {extra}")
    try:
        X = np.array([[float(r[i]) for i in xi] for r in body]) if xi else None
        probs = np.array([[float(r[i]) for i in pi] for r in body]) if pi else None
        labels = np.array([int(r[li]) for r in body]) if li is not None else None
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from exc
    return X, labels, probs
