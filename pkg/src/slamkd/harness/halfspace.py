"""Convergence of the adaptive-step iteration on gamma-margin halfspaces under RCN."""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from slamkd.harness.config import ExperimentConfig
from slamkd.harness.results import RunResult
from slamkd.linear import run_slam_linear
from slamkd.oracle import HalfspaceTruth, make_rng, sample_margin_points, spawn_seeds

log = logging.getLogger(__name__)

CHUNK = 8192


def theory_steps(alpha: float, gamma: float, eps: float, c: float = 1.0) -> int:
    beta = abs(2.0 * alpha - 1.0)
    return math.ceil(c / (beta**2 * gamma**2 * eps**2))


def rcn_stream(truth: HalfspaceTruth, alpha: float, rng):
    """Endless ``(x, y0, alpha)`` items: margin points with labels flipped w.p. ``1 - alpha``."""
    while True:
        X = sample_margin_points(truth, CHUNK, rng)
        y0 = (truth.labels(X) == 0).astype(float)
        flip = rng.random(CHUNK) >= alpha
        y0 = np.where(flip, 1.0 - y0, y0)
        for x, y in zip(X, y0):
            yield x, float(y), alpha


def heldout_error(w, probe_X, probe_labels) -> float:
    # student predicts class 0 iff sigmoid(w.x) >= 1/2 (ties go to index 0)
    pred = (probe_X @ w < 0).astype(int)
    return float(np.mean(pred != probe_labels))


def lsq_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        return float("nan")
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def halfspace_trial(d, gamma, alpha, eps, T, every, n_probe, seed, stop_at_eps=False) -> dict:
    rng = make_rng(seed)
    w = rng.standard_normal(d)
    truth = HalfspaceTruth(w / np.linalg.norm(w), float(gamma))
    probe_X = sample_margin_points(truth, n_probe, rng)
    probe_y = truth.labels(probe_X)
    errors, norms, corrs = [], [], []

    def on_snapshot(t, w):
        e = heldout_error(w, probe_X, probe_y)
        errors.append(e)
        norms.append(float(np.linalg.norm(w)))
        corrs.append(float(w @ truth.w_star))
        return stop_at_eps and e <= eps

    traj = run_slam_linear(rcn_stream(truth, alpha, rng), T, d, every, on_snapshot)
    steps = traj.steps
    i_min = int(np.argmin(errors))
    hits = [i for i, e in enumerate(errors) if e <= eps]
    first = hits[0] if hits else None
    upto = (first + 1) if first is not None else len(steps)
    return {
        "steps": steps,
        "errors": errors,
        "norms": norms,
        "corrs": corrs,
        "min_error": errors[i_min],
        "argmin_step": steps[i_min],
        "first_hit_step": steps[first] if first is not None else None,
        "success": errors[i_min] <= eps,
        "final_norm": norms[-1],
        "final_step": steps[-1],
        "corr_slope": lsq_slope(steps[:upto], corrs[:upto]),
        "skipped": traj.skipped,
    }


def _check_alpha(alpha):
    if alpha == 0.5:
        raise ValueError("alpha = 1/2 carries no label signal")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")


def run_halfspace_rcn(config: ExperimentConfig) -> RunResult:
    """Independent trials of the adaptive iteration for ``T = ceil(C / (beta gamma eps)^2)`` steps."""
    _check_alpha(config.alpha)
    start = time.perf_counter()
    T = theory_steps(config.alpha, config.gamma, config.eps, config.c_const)
    every = max(1, T // config.snapshots)
    result = RunResult("halfspace-rcn", config.to_dict())
    for i, ss in enumerate(spawn_seeds(config.seed, config.trials)):
        tr = halfspace_trial(config.hs_dim, config.gamma, config.alpha, config.eps, T, every, config.n_probe, ss)
        for s, e, nrm, c in zip(tr["steps"], tr["errors"], tr["norms"], tr["corrs"]):
            result.add_curve(i, "slam-linear", s, "error", e)
            result.add_curve(i, "slam-linear", s, "norm", nrm)
            result.add_curve(i, "slam-linear", s, "corr", c)
        result.trials.append({k: v for k, v in tr.items() if k not in ("steps", "errors", "norms", "corrs")})
    n_ok = sum(t["success"] for t in result.trials)
    norm_bound = 3.0 * math.sqrt(T)
    result.summary = {
        "T": T,
        "beta": abs(2 * config.alpha - 1),
        "snapshot_every": every,
        "successes": n_ok,
        "success_rate": n_ok / config.trials,
        "norm_bound": norm_bound,
        "norm_within_bound": sum(t["final_norm"] <= norm_bound for t in result.trials),
        "corr_slope_positive": sum(t["corr_slope"] > 0 for t in result.trials),
        "median_min_error": float(np.median([t["min_error"] for t in result.trials])),
        "skipped": sum(t["skipped"] for t in result.trials),
    }
    result.timing = {"seconds": time.perf_counter() - start}
    return result


def scaling_study(gammas, eps: float, alpha: float, trials: int, config: ExperimentConfig) -> RunResult:
    """Median hitting time ``T*(gamma)`` and the least-squares slope of log T* on log gamma."""
    gammas = [float(g) for g in gammas]
    if len(set(gammas)) != len(gammas):
        raise ValueError("gamma values must be distinct")
    if len(gammas) < 3:
        raise ValueError("scaling study needs at least 3 gamma values")
    _check_alpha(alpha)
    start = time.perf_counter()
    result = RunResult("scaling", config.to_dict())
    seeds = spawn_seeds(config.seed, len(gammas))
    rows = []
    for gi, g in enumerate(gammas):
        budget = theory_steps(alpha, g, eps, config.budget_factor)
        hits = []
        for ti, ss in enumerate(seeds[gi].spawn(trials)):
            tr = halfspace_trial(config.hs_dim, g, alpha, eps, budget, config.scaling_every, config.n_probe, ss, True)
            hit = tr["first_hit_step"]
            hits.append(hit)
            result.trials.append({"gamma": g, "trial": ti, "hit_step": hit, "budget": budget, "skipped": tr["skipped"]})
            if hit is not None:
                result.add_curve(ti, f"gamma={g!r}", hit, "hit_step", hit)
        med = float(np.median([math.inf if h is None else h for h in hits]))
        censored = not math.isfinite(med)
        if censored:
            log.warning("gamma=%s: median trial never reached eps=%s within %d steps; censored", g, eps, budget)
        rows.append({"gamma": g, "t_star": None if censored else med, "censored": censored, "budget": budget})
    used = [r for r in rows if not r["censored"]]
    slope = intercept = None
    residuals = []
    if len(used) >= 2:
        lx = np.log([r["gamma"] for r in used])
        ly = np.log([max(r["t_star"], 1.0) for r in used])
        slope = lsq_slope(lx, ly)
        intercept = float(ly.mean() - slope * lx.mean())
        residuals = [float(v) for v in ly - (intercept + slope * lx)]
    result.summary = {
        "eps": eps,
        "alpha": alpha,
        "per_gamma": rows,
        "slope": slope,
        "intercept": intercept,
        "residuals": residuals,
        "censored": [r["gamma"] for r in rows if r["censored"]],
    }
    result.timing = {"seconds": time.perf_counter() - start}
    return result
