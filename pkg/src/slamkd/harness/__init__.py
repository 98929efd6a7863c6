from slamkd.harness.config import ConfigError, ExperimentConfig, MethodSpec, load_config, parse_config_text
from slamkd.harness.halfspace import run_halfspace_rcn, scaling_study, theory_steps
from slamkd.harness.pipeline import run_distillation_pipeline, split_dataset, split_indices
from slamkd.harness.results import RunResult, SchemaVersionError, emit_results, load_results

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MethodSpec",
    "RunResult",
    "SchemaVersionError",
    "emit_results",
    "load_config",
    "load_results",
    "parse_config_text",
    "run_distillation_pipeline",
    "run_halfspace_rcn",
    "scaling_study",
    "split_dataset",
    "split_indices",
    "theory_steps",
]
