"""Linear students trained with the mixed loss.

Binary students output ``(sigmoid(w.x), 1 - sigmoid(w.x))``. For them the
mixed cross-entropy has a closed-form gradient, and rescaling it by the
reciprocal of its ``r`` factor gives the update

    w <- w + sgn(2a - 1) * (y0 - mix(f0; a)) * x

which is what :func:`slam_linear_step` applies. Multiclass students are
softmax-linear with an analytic chain-rule gradient through ``ce o mix``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from slamkd.mixing import MixVariant, distractor_scale, mix
from slamkd.oracle import make_rng
from slamkd.probvec import LOG_FLOOR, cross_entropy, softmax_temp

F0_CLAMP = 1e-12


class StreamExhausted(RuntimeError):
    """The label stream ended before the requested number of iterations."""


class NonFiniteLoss(FloatingPointError):
    pass


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def sigmoid_pair(x, w) -> np.ndarray:
    z = float(np.dot(w, x))
    return np.array([sigmoid(z), sigmoid(-z)])


def binary_mix(f0, alpha):
    return alpha * f0 + (1.0 - alpha) * (1.0 - f0)


def r_factor(f0, alpha):
    """Ratio of sigmoid and mixed-sigmoid curvatures times ``|2 alpha - 1|``."""
    f0 = np.clip(f0, F0_CLAMP, 1.0 - F0_CLAMP)
    m = binary_mix(f0, alpha)
    out = f0 * (1.0 - f0) / (m * (1.0 - m)) * np.abs(2.0 * alpha - 1.0)
    return float(out) if np.ndim(out) == 0 else out


def slam_binary_loss(x, y0, w, alpha) -> float:
    f0 = min(max(sigmoid(float(np.dot(w, x))), F0_CLAMP), 1.0 - F0_CLAMP)
    m0 = binary_mix(f0, alpha)
    return cross_entropy([y0, 1.0 - y0], [m0, 1.0 - m0])


def slam_binary_gradient(x, y0, w, alpha) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    f0 = sigmoid(float(np.dot(w, x)))
    m0 = binary_mix(f0, alpha)
    return r_factor(f0, alpha) * np.sign(2.0 * alpha - 1.0) * (m0 - y0) * x


def slam_linear_step(w, x, y0, alpha):
    """One adaptive-step iteration; ``None`` when ``alpha == 1/2`` (step undefined)."""
    if alpha == 0.5:
        return None
    z = float(np.dot(w, x))
    f0 = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    m0 = alpha * f0 + (1.0 - alpha) * (1.0 - f0)
    c = (y0 - m0) if alpha > 0.5 else (m0 - y0)
    return w + c * np.asarray(x)


@dataclass
class SlamTrajectory:
    steps: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    skipped: int = 0
    stopped_at: int | None = None

    @property
    def final(self) -> np.ndarray:
        return self.weights[-1]


def run_slam_linear(
    stream: Iterable,
    T: int,
    dim: int,
    record_every: int | None = None,
    on_snapshot: Callable[[int, np.ndarray], bool] | None = None,
) -> SlamTrajectory:
    """Run ``T`` adaptive iterations from ``w = 0`` over ``(x, y0, alpha)`` items.

    Snapshots are taken at ``t = 0``, every ``record_every`` steps and at
    ``t = T``. ``on_snapshot(t, w)`` may return True to stop early.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    every = record_every or max(1, T)
    traj = SlamTrajectory()
    w = np.zeros(dim)

    def snap(t):
        traj.steps.append(t)
        traj.weights.append(w.copy())
        if on_snapshot is not None and on_snapshot(t, w):
            traj.stopped_at = t
            return True
        return False

    if snap(0):
        return traj
    it = iter(stream)
    for t in range(1, T + 1):
        try:
            x, y0, alpha = next(it)
        except StopIteration:
            raise StreamExhausted(f"stream ended after {t - 1} of {T} items") from None
        new = slam_linear_step(w, x, y0, alpha)
        if new is None:
            traj.skipped += 1
        else:
            w = new
        if t % every == 0 or t == T:
            if snap(t):
                break
    return traj


# --------------------------------------------------------------------------
# softmax students


@dataclass
class SoftmaxStudent:
    W: np.ndarray
    b: np.ndarray | None = None

    @classmethod
    def zeros(cls, L: int, d: int, bias: bool = True) -> "SoftmaxStudent":
        return cls(np.zeros((L, d)), np.zeros(L) if bias else None)

    @property
    def params(self) -> list:
        return [self.W] if self.b is None else [self.W, self.b]

    @classmethod
    def from_params(cls, params) -> "SoftmaxStudent":
        return cls(params[0], params[1] if len(params) > 1 else None)

    def copy(self) -> "SoftmaxStudent":
        return SoftmaxStudent(self.W.copy(), None if self.b is None else self.b.copy())

    def logits(self, X) -> np.ndarray:
        z = np.asarray(X, dtype=float) @ self.W.T
        return z if self.b is None else z + self.b

    def outputs(self, X, temperature: float = 1.0) -> np.ndarray:
        return softmax_temp(self.logits(X), temperature)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=-1)


def softmax_ce_logit_grad(F, Y) -> np.ndarray:
    """Gradient of ``ce(Y, softmax(z))`` with respect to ``z``."""
    return F * Y.sum(axis=-1, keepdims=True) - Y


def slam_logit_grad(F, Y, alpha, k, mask, variant) -> tuple[np.ndarray, np.ndarray]:
    """Per-example mixed losses and their gradients with respect to the logits."""
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), F.shape[:-1])
    M = mix(F, alpha, k, mask, variant)
    loss = cross_entropy(Y, M)
    scale = distractor_scale(np.broadcast_to(np.asarray(k), F.shape[:-1]), variant)
    slope = alpha[:, None] - (1.0 - alpha[:, None]) * np.asarray(mask, dtype=float) / scale[:, None]
    safe = np.where(M > LOG_FLOOR, M, 1.0)
    v = np.where(M > LOG_FLOOR, -Y * slope / safe, 0.0)
    G = F * (v - (F * v).sum(axis=-1, keepdims=True))
    plain = alpha == 1.0
    if np.any(plain):
        G[plain] = softmax_ce_logit_grad(F[plain], Y[plain])
    return np.atleast_1d(loss), G


def slam_loss_and_grad(student: SoftmaxStudent, X, Y, alpha, k, mask, variant=MixVariant.NORMALIZED, weights=None):
    """Mean (optionally weighted) mixed loss over a batch and its parameter gradients."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    mask = np.atleast_2d(mask)
    F = student.outputs(X)
    losses, G = slam_logit_grad(F, Y, np.atleast_1d(alpha), np.atleast_1d(k), mask, variant)
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        losses = losses * weights
        G = G * weights[:, None]
    n = X.shape[0]
    grads = [G.T @ X / n]
    if student.b is not None:
        grads.append(G.sum(axis=0) / n)
    return float(losses.sum() / n), grads


def softmax_slam_gradient(x, y, student: SoftmaxStudent, alpha, k, mask, variant=MixVariant.NORMALIZED):
    """Gradient of the single-example mixed loss: ``(dW, db)`` (``db`` None without bias)."""
    _, grads = slam_loss_and_grad(student, x, y, alpha, k, mask, variant)
    return grads[0], (grads[1] if len(grads) > 1 else None)


@dataclass
class MixedObjective:
    """Training set for :func:`sgd_train`: rows with ``alpha == 1`` reduce to plain CE."""

    X: np.ndarray
    Y: np.ndarray
    alpha: np.ndarray
    k: np.ndarray
    mask: np.ndarray
    variant: MixVariant = MixVariant.NORMALIZED
    weights: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.X)

    @classmethod
    def plain(cls, X, Y) -> "MixedObjective":
        n, L = np.shape(Y)
        return cls(np.asarray(X, float), np.asarray(Y, float), np.ones(n), np.full(n, L), np.ones((n, L)))

    @classmethod
    def concat(cls, parts) -> "MixedObjective":
        parts = list(parts)
        variants = {p.variant for p in parts if np.any(p.alpha != 1.0)} or {parts[0].variant}
        if len(variants) > 1:
            raise ValueError("cannot concatenate objectives with different mix variants")
        weights = None
        if any(p.weights is not None for p in parts):
            weights = np.concatenate([np.ones(len(p)) if p.weights is None else p.weights for p in parts])
        return cls(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.Y for p in parts]),
            np.concatenate([p.alpha for p in parts]),
            np.concatenate([p.k for p in parts]),
            np.concatenate([p.mask for p in parts]),
            variants.pop(),
            weights,
        )

    def __call__(self, params, idx):
        w = None if self.weights is None else self.weights[idx]
        return slam_loss_and_grad(
            SoftmaxStudent.from_params(params),
            self.X[idx], self.Y[idx], self.alpha[idx], self.k[idx], self.mask[idx], self.variant, w,
        )

    def value(self, student: SoftmaxStudent) -> float:
        return self(student.params, np.arange(len(self)))[0]


@dataclass(frozen=True)
class SGDConfig:
    epochs: int = 10
    lr: float = 0.5
    batch_size: int = 64
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError(f"invalid SGD config {self}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


def sgd_train(objective, n: int, params, config: SGDConfig, on_epoch=None):
    """Mini-batch SGD with a fixed step and per-epoch reshuffling.

    ``objective(params, idx)`` returns ``(mean loss, grads)``. Returns the
    trained parameter list and the per-epoch average loss. ``on_epoch(epoch,
    params)`` is called every ``config.eval_every`` epochs.
    """
    params = [np.array(p, dtype=float, copy=True) for p in params]
    rng = make_rng(config.seed)
    curve = []
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = objective(params, idx)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss {loss} at epoch {epoch}, batch offset {start}")
            for p, g in zip(params, grads):
                p -= config.lr * g
            total += loss * len(idx)
        curve.append(total / max(n, 1))
        if on_epoch is not None and epoch % config.eval_every == 0:
            on_epoch(epoch, params)
    return params, curve


# --------------------------------------------------------------------------
# gradient checking


@dataclass(frozen=True)
class FDReport:
    max_rel_error: float
    passed: bool
    analytic: np.ndarray
    numeric: np.ndarray


def finite_diff_check(loss_fn, grad_fn, point, h: float = 1e-6, tol: float = 1e-5, atol: float = 1e-8) -> FDReport:
    """Compare ``grad_fn`` against central differences of ``loss_fn``.

    The error is normwise: ``max_i |a_i - n_i| / max(max|a|, max|n|, atol)``.
    Per-coordinate ratios are meaningless for partials below the
    differencing noise floor (about ``1e-16 * |loss| / h``), so each
    coordinate is measured against the gradient's overall scale.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    point = np.array(point, dtype=float)
    analytic = np.asarray(grad_fn(point), dtype=float).reshape(point.shape)
    numeric = np.empty_like(point)
    flat = point.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn(point)
        flat[i] = orig - h
        down = loss_fn(point)
        flat[i] = orig
        num_flat[i] = (up - down) / (2.0 * h)
    if not point.size:
        return FDReport(0.0, True, analytic, numeric)
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), atol)
    rel = float(np.max(np.abs(analytic - numeric))) / scale
    return FDReport(rel, rel <= tol, analytic, numeric)
