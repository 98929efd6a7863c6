"""Command-line entry point: ``slamkd <subcommand> [--config PATH] [--seed N] [--out DIR] [--trials N]``.

Exit status is 0 on success, 2 for an invalid config or arguments and 1
for any failure while running.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from slamkd.harness.config import ConfigError, ExperimentConfig, load_config
from slamkd.harness.halfspace import run_halfspace_rcn, scaling_study
from slamkd.harness.pipeline import run_distillation_pipeline
from slamkd.harness.results import emit_results
from slamkd.isotonic import fit_accuracy_statistics
from slamkd.oracle import (
    cyclic_confusion_scores,
    gen_gaussian_mixture,
    gen_margin_halfspace,
    make_rng,
    make_teacher_spec,
    read_table_csv,
    realize_teacher_labels,
    write_table_csv,
)

log = logging.getLogger("slamkd")

SUBCOMMANDS = ("gen", "distill", "halfspace-rcn", "scaling", "isotonic-fit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slamkd", description="Student-label-mixing distillation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--trials", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {"kind": args.command}
    for key in ("seed", "out", "trials"):
        value = getattr(args, key)
        if value is not None:
            changes[key] = value
    try:
        return cfg.replace(**changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_gen(cfg: ExperimentConfig) -> Path:
    """Write a dataset CSV; gaussian datasets also carry simulated teacher soft labels."""
    out = Path(cfg.out) / "gen.csv"
    if cfg.dataset == "halfspace":
        _, data = gen_margin_halfspace(cfg.hs_dim, cfg.gamma, cfg.n_examples, cfg.seed)
        write_table_csv(out, data.X, data.labels)
        return out
    ss_data, ss_teacher = np.random.SeedSequence(cfg.seed).spawn(2)
    data, _ = gen_gaussian_mixture(cfg.num_classes, cfg.dim, cfg.n_examples, cfg.separation, ss_data, cfg.sigma)
    if cfg.teacher_mode == "rcn":
        params = {"alpha": cfg.teacher_alpha}
    elif cfg.teacher_mode == "constant":
        params = {"alpha": cfg.teacher_alpha, "k": cfg.teacher_k}
    else:
        params = {"alpha_min": cfg.teacher_alpha_min, "alpha_max": cfg.teacher_alpha_max, "k": cfg.teacher_k}
    if cfg.teacher_confusion == "cyclic" and cfg.teacher_mode != "rcn":
        params["distractor_scores"] = cyclic_confusion_scores(data.labels, cfg.num_classes, cfg.teacher_k)
    rng = make_rng(ss_teacher)
    spec = make_teacher_spec(data.labels, cfg.num_classes, cfg.teacher_mode, params, rng)
    _, soft = realize_teacher_labels(spec, rng)
    write_table_csv(out, data.X, data.labels, soft)
    return out


def cmd_isotonic_fit(cfg: ExperimentConfig) -> Path:
    if not cfg.input:
        raise ConfigError("isotonic-fit needs 'input' (CSV with p_* and label columns)")
    _, labels, probs = read_table_csv(cfg.input)
    if labels is None or probs is None:
        raise ValueError(f"{cfg.input}: needs p_* and label columns")
    k_mode = "adaptive" if cfg.k_mode == "adaptive" else cfg.fixed_k
    est = fit_accuracy_statistics(probs, labels, cfg.lb, cfg.threshold, k_mode)
    out = Path(cfg.out) / "estimator.json"
    est.save(out)
    return out


def run(cfg: ExperimentConfig) -> Path:
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    if cfg.kind == "gen":
        return cmd_gen(cfg)
    if cfg.kind == "isotonic-fit":
        return cmd_isotonic_fit(cfg)
    if cfg.kind == "distill":
        result = run_distillation_pipeline(cfg)
    elif cfg.kind == "halfspace-rcn":
        result = run_halfspace_rcn(cfg)
    else:
        result = scaling_study(cfg.gammas, cfg.eps, cfg.alpha, cfg.trials, cfg)
    path = Path(cfg.out) / f"{cfg.kind}.json"
    emit_results(result, path)
    return path


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"slamkd: invalid config: {exc}", file=sys.stderr)
        return 2
    try:
        path = run(cfg)
    except ConfigError as exc:
        print(f"slamkd: invalid config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        log.debug("failure", exc_info=True)
        print(f"slamkd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
