"""End-to-end distillation with unlabeled examples on a Gaussian-mixture task.

Per trial: generate a pool and a test set, split the pool into labeled
``A``, validation ``V`` and unlabeled ``U``, label ``V`` and ``U`` with a
teacher, pre-train a softmax-linear student on ``A``, then train one copy
of it per method on ``A`` (+ ``V``) and the teacher-labeled ``B``.

Two teachers are available. ``simulated`` draws labels from the structured
noise model, so the true per-example ``alpha`` and ``k`` are known and the
``slam-oracle`` method can use them. With ``teacher_confusion = cyclic`` the
teacher confuses class ``c`` only with ``c+1, ..., c+k-1`` (mod L), a fixed
directed confusion pattern; ``random`` draws distractors per example. ``fitted`` trains a softmax-linear model
on ``A`` and takes its predictions as the soft labels.
"""

from __future__ import annotations

import csv
import time
from pathlib import Path

import numpy as np

from slamkd.harness.config import ExperimentConfig, MethodSpec
from slamkd.harness.results import RunResult
from slamkd.isotonic import estimate_alpha, estimate_k, fit_accuracy_statistics
from slamkd.linear import MixedObjective, SGDConfig, SoftmaxStudent, sgd_train
from slamkd.mixing import MixVariant
from slamkd.oracle import cyclic_confusion_scores, gen_gaussian_mixture, make_rng, make_teacher_spec, realize_teacher_labels
from slamkd.probvec import LOG_FLOOR, one_hot, softmax_temp, top_masks


def split_indices(n: int, sizes, seed):
    """Disjoint uniform random ``(A, V, U)`` index arrays; ``U`` is the remainder."""
    n_a, n_v = (int(s) for s in sizes)
    if n_a < 0 or n_v < 0 or n_a + n_v > n:
        raise ValueError(f"split sizes {n_a} + {n_v} exceed pool of {n}")
    perm = make_rng(seed).permutation(n)
    return perm[:n_a], perm[n_a : n_a + n_v], perm[n_a + n_v :]


def split_dataset(pool, sizes, seed):
    a, v, u = split_indices(len(pool), sizes, seed)
    return pool.subset(a), pool.subset(v), pool.subset(u)


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def accuracy(student: SoftmaxStudent, data) -> float:
    return float(np.mean(student.predict(data.X) == data.labels)) if len(data) else float("nan")


def load_weights(path, n_pool: int) -> np.ndarray:
    """Per-example weights: CSV with a ``weight`` column, one row per pool example."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read weight file {path}: {exc}") from exc
    if not rows or "weight" not in rows[0]:
        raise ValueError(f"{path}: needs a 'weight' column")
    w = np.array([float(r["weight"]) for r in rows])
    if len(w) != n_pool:
        raise ValueError(f"{path}: {len(w)} weights for a pool of {n_pool} examples")
    if np.any(w < 0):
        raise ValueError(f"{path}: weights must be nonnegative")
    return w


def _teacher_logits(soft):
    return np.log(np.maximum(soft, LOG_FLOOR))


def _tempered(soft, logits, temperature):
    return soft if temperature == 1.0 else softmax_temp(logits, temperature)


def _pseudo_objective(method: MethodSpec, X_u, soft_u, logits_u, hard_u, L, est, spec_u, weights_u):
    n = len(X_u)
    if method.name == "vanilla-hard" or (method.is_slam and method.slam_label == "hard"):
        Y = one_hot(hard_u, L)
    else:
        Y = _tempered(soft_u, logits_u, method.temperature)
    if method.name == "slam-estimated":
        alpha, k = np.atleast_1d(estimate_alpha(est, soft_u)), np.atleast_1d(estimate_k(est, soft_u))
    elif method.name == "slam-oracle":
        alpha, k = spec_u
    else:
        alpha, k = np.ones(n), np.full(n, L)
    mask = top_masks(soft_u, k) if n else np.zeros((0, L), dtype=int)
    variant = MixVariant.parse(method.mix_variant)
    return MixedObjective(X_u, Y, np.asarray(alpha, float), np.asarray(k), mask, variant, weights_u)


def run_trial(config: ExperimentConfig, seed_seq: np.random.SeedSequence, trial: int, result: RunResult) -> dict:
    s_data, s_split, s_teacher, s_train = seed_seq.spawn(4)
    L, d = config.num_classes, config.dim
    n_pool = config.n_labeled + config.n_validation + config.n_unlabeled
    data, _ = gen_gaussian_mixture(L, d, n_pool + config.n_test, config.separation, s_data, config.sigma)
    pool = data.subset(np.arange(n_pool))
    test = data.subset(np.arange(n_pool, n_pool + config.n_test))
    ia, iv, iu = split_indices(n_pool, (config.n_labeled, config.n_validation), s_split)
    A, V, U = pool.subset(ia), pool.subset(iv), pool.subset(iu)
    train_seed = _int_seed(s_train)

    # teacher labels on V and U
    info: dict = {"trial": trial}
    spec_u = None
    iv_u = np.concatenate([iv, iu])
    if config.teacher == "simulated":
        params = {"k": config.teacher_k}
        if config.teacher_mode == "margin-correlated":
            params.update(alpha_min=config.teacher_alpha_min, alpha_max=config.teacher_alpha_max)
        else:
            params["alpha"] = config.teacher_alpha
            if config.teacher_mode == "rcn":
                params.pop("k")
        if config.teacher_confusion == "cyclic" and config.teacher_mode != "rcn":
            params["distractor_scores"] = cyclic_confusion_scores(pool.labels, L, config.teacher_k)
        t_rng = make_rng(s_teacher)
        spec = make_teacher_spec(pool.labels, L, config.teacher_mode, params, t_rng)
        hard, soft = realize_teacher_labels(spec, t_rng, iv_u)
        spec_u = (spec.alpha[iu], spec.k[iu])
        info["mean_alpha_u"] = float(spec.alpha[iu].mean()) if len(iu) else None
    else:
        teacher = _train_plain(SoftmaxStudent.zeros(L, d), A, config, config.teacher_epochs, _int_seed(s_teacher))
        soft = teacher.outputs(pool.X[iv_u])
        hard = np.argmax(soft, axis=1)
        info["teacher_test_acc"] = accuracy(teacher, test)
    nv = len(iv)
    soft_v, soft_u, hard_u = soft[:nv], soft[nv:], hard[nv:]
    logits_u = _teacher_logits(soft_u)
    info["teacher_acc_u"] = float(np.mean(hard_u == U.labels)) if len(iu) else None

    methods = config.method_specs()
    est = None
    if any(m.name == "slam-estimated" for m in methods):
        k_mode = "adaptive" if config.k_mode == "adaptive" else config.fixed_k
        est = fit_accuracy_statistics(soft_v, V.labels, config.lb, config.threshold, k_mode)
        if len(iu):
            a_hat = np.atleast_1d(estimate_alpha(est, soft_u))
            info["mean_alpha_hat_u"] = float(a_hat.mean())
            if spec_u is not None:
                info["alpha_hat_mae_u"] = float(np.mean(np.abs(a_hat - spec_u[0])))

    pre = _train_plain(SoftmaxStudent.zeros(L, d), A, config, config.pretrain_epochs, train_seed)
    info["pretrained_test_acc"] = accuracy(pre, test)

    labeled = [MixedObjective.plain(A.X, A.onehot)]
    if config.include_validation and nv:
        labeled.append(MixedObjective.plain(V.X, V.onehot))
    info["methods"] = {}
    for m in methods:
        weights_u = load_weights(m.weight_file, n_pool)[iu] if m.weight_file else None
        pseudo = _pseudo_objective(m, U.X, soft_u, logits_u, hard_u, L, est, spec_u, weights_u)
        parts = labeled + ([pseudo] if len(iu) else [])
        objective = MixedObjective.concat(parts)
        accs = []

        def on_epoch(epoch, params, _m=m.name, _accs=accs):
            acc = accuracy(SoftmaxStudent.from_params(params), test)
            _accs.append(acc)
            result.add_curve(trial, _m, epoch, "test_acc", acc)

        cfg = SGDConfig(config.epochs, config.lr, config.batch_size, train_seed)
        params, losses = sgd_train(objective, len(objective), pre.copy().params, cfg, on_epoch)
        for epoch, loss in enumerate(losses, 1):
            result.add_curve(trial, m.name, epoch, "train_loss", loss)
        student = SoftmaxStudent.from_params(params)
        final = accuracy(student, test)
        info["methods"][m.name] = {
            "final_test_acc": final,
            "best_test_acc": max(accs) if accs else final,
            "final_objective": losses[-1] if losses else objective.value(student),
        }
    return info


def _train_plain(student: SoftmaxStudent, data, config: ExperimentConfig, epochs: int, seed: int) -> SoftmaxStudent:
    if not len(data) or epochs == 0:
        return student
    objective = MixedObjective.plain(data.X, data.onehot)
    params, _ = sgd_train(objective, len(data), student.params, SGDConfig(epochs, config.lr, config.batch_size, seed))
    return SoftmaxStudent.from_params(params)


def run_distillation_pipeline(config: ExperimentConfig) -> RunResult:
    if not config.methods:
        raise ValueError("at least one method is required")
    if config.teacher != "simulated" and "slam-oracle" in config.methods:
        raise ValueError("slam-oracle requires the simulated teacher")
    start = time.perf_counter()
    result = RunResult("distill", config.to_dict())
    seeds = np.random.SeedSequence(config.seed).spawn(config.trials)
    for i, ss in enumerate(seeds):
        result.trials.append(run_trial(config, ss, i, result))
    summary = {}
    for m in config.methods:
        final = [t["methods"][m]["final_test_acc"] for t in result.trials]
        best = [t["methods"][m]["best_test_acc"] for t in result.trials]
        summary[m] = {
            "final_acc_mean": float(np.mean(final)),
            "final_acc_std": float(np.std(final)),
            "best_acc_mean": float(np.mean(best)),
            "best_acc_std": float(np.std(best)),
            "n_trials": len(final),
        }
    result.summary = {"methods": summary}
    result.timing = {"seconds": time.perf_counter() - start}
    return result
