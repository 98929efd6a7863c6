"""Experiment configuration and its flat ``key = value`` text format.

Lines are ``key = value``; ``#`` starts a comment; lists are comma
separated. Every key is optional (defaults below) and unknown keys are an
error. Per-method overrides use ``<method>.<key>``, e.g.
``slam-estimated.mix_variant = normalized``; allowed override keys are
``mix_variant``, ``temperature``, ``slam_label`` and ``weight_file``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

KINDS = ("distill", "halfspace-rcn", "scaling", "isotonic-fit", "gen")
METHODS = ("vanilla-soft", "vanilla-hard", "slam-estimated", "slam-oracle")
METHOD_KEYS = ("mix_variant", "temperature", "slam_label", "weight_file")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    name: str
    mix_variant: str = "unnormalized"
    temperature: float = 1.0
    slam_label: str = "soft"
    weight_file: str = ""

    @property
    def is_slam(self) -> bool:
        return self.name.startswith("slam-")


@dataclass
class ExperimentConfig:
    kind: str = "distill"
    seed: int = 0
    trials: int = 1
    out: str = "results"

    # dataset (gaussian mixture)
    dataset: str = "gaussian"
    num_classes: int = 10
    dim: int = 20
    separation: float = 3.0
    sigma: float = 1.0
    n_test: int = 5000

    # A / V / U split sizes
    n_labeled: int = 300
    n_validation: int = 500
    n_unlabeled: int = 10000
    include_validation: bool = True

    # teacher
    teacher: str = "simulated"
    teacher_mode: str = "margin-correlated"
    teacher_alpha: float = 0.8
    teacher_alpha_min: float = 0.2
    teacher_alpha_max: float = 1.0
    teacher_k: int = 3
    teacher_confusion: str = "cyclic"
    teacher_epochs: int = 50

    # methods
    methods: list = field(default_factory=lambda: ["vanilla-soft", "slam-estimated"])
    mix_variant: str = "unnormalized"
    temperature: float = 1.0
    slam_label: str = "soft"
    weight_file: str = ""
    method_overrides: dict = field(default_factory=dict)

    # isotonic estimation
    lb: float = 0.5
    threshold: float = 0.9
    k_mode: str = "adaptive"
    fixed_k: int = 3

    # student SGD
    lr: float = 0.5
    batch_size: int = 64
    epochs: int = 20
    pretrain_epochs: int = 50

    # halfspace / scaling studies
    hs_dim: int = 10
    gamma: float = 0.1
    gammas: list = field(default_factory=lambda: [0.05, 0.1, 0.2])
    alpha: float = 0.85
    eps: float = 0.05
    c_const: float = 1.0
    n_probe: int = 10000
    snapshots: int = 100
    budget_factor: float = 4.0
    scaling_every: int = 1

    # isotonic-fit / gen
    input: str = ""
    n_examples: int = 1000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
        if self.kind == "distill" and not self.methods:
            raise ConfigError("at least one method is required")
        if any(m.startswith("slam-") for m in self.methods) and self.n_validation < 2:
            raise ConfigError("slam methods need n_validation >= 2")
        if self.dataset not in ("gaussian", "halfspace"):
            raise ConfigError("dataset must be 'gaussian' or 'halfspace'")
        if self.teacher not in ("simulated", "fitted"):
            raise ConfigError("teacher must be 'simulated' or 'fitted'")
        if self.teacher == "fitted" and "slam-oracle" in self.methods:
            raise ConfigError("slam-oracle requires the simulated teacher")
        if self.teacher_confusion not in ("cyclic", "random"):
            raise ConfigError("teacher_confusion must be 'cyclic' or 'random'")
        if self.k_mode not in ("adaptive", "fixed"):
            raise ConfigError("k_mode must be 'adaptive' or 'fixed'")
        for name, over in self.method_overrides.items():
            if name not in self.methods:
                raise ConfigError(f"override for method {name!r} which is not in methods")
            for key in over:
                if key not in METHOD_KEYS:
                    raise ConfigError(f"unknown method option {name}.{key}")
        try:
            specs = self.method_specs()
        except ValueError as exc:
            raise ConfigError(f"bad method option: {exc}") from None
        for spec in specs:
            if spec.mix_variant not in ("normalized", "unnormalized"):
                raise ConfigError(f"{spec.name}: bad mix_variant {spec.mix_variant!r}")
            if spec.slam_label not in ("soft", "hard"):
                raise ConfigError(f"{spec.name}: slam_label must be soft or hard")
            if not spec.temperature > 0:
                raise ConfigError(f"{spec.name}: temperature must be positive")

    def method_specs(self) -> list[MethodSpec]:
        out = []
        for m in self.methods:
            over = self.method_overrides.get(m, {})
            out.append(
                MethodSpec(
                    m,
                    mix_variant=str(over.get("mix_variant", self.mix_variant)),
                    temperature=float(over.get("temperature", self.temperature)),
                    slam_label=str(over.get("slam_label", self.slam_label)),
                    weight_file=str(over.get("weight_file", self.weight_file)),
                )
            )
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)


_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    f = _FIELD_TYPES[name]
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if name == "gammas":
                return [float(s) for s in items]
            return items
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict = {}
    overrides: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if "." in key:
            method, opt = key.split(".", 1)
            if method not in METHODS or opt not in METHOD_KEYS:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            overrides.setdefault(method, {})[opt] = raw
            continue
        if key not in _FIELD_TYPES or key == "method_overrides":
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    try:
        return ExperimentConfig(**values, method_overrides=overrides)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))
