"""
Experiment configuration: a YAML file with sections model, data, train and
fine_tune. Every TrainConfig field also gets a --train-<field> flag.
"""

import argparse
from dataclasses import MISSING, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..core.errors import ConfigError
from ..data.mixer import VALIDATION_SEED, VALIDATION_SIZE
from ..data.sampler import PromptSamplerConfig
from ..losses.pit import WEIGHTINGS
from ..model.checkpoint import MODEL_KINDS
from ..model.config import ModelConfig

LARGE_PEAK_LR = 5e-4
SECTIONS = ("model", "data", "train", "fine_tune", "run_dir")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    steps_per_epoch: int = 2500
    batch_size: int = 8
    segment_seconds: float = 6.0
    peak_lr: float = 1e-3
    warmup_steps: int = 10_000
    constant_epochs: int = 75
    plateau_patience: int = 5
    decay_factor: float = 0.5
    weight_decay: float = 1e-2
    grad_clip_norm: float = 5.0
    prompt_dropout: bool = False
    prompt_dropout_prob: float = 0.25
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-8
    loss_weighting: str = "category"
    tau_active: float = 1e-3
    tau_inactive: float = 1e-2
    model_kind: str = "prompted"
    validation_size: int = VALIDATION_SIZE
    validation_seed: int = VALIDATION_SEED
    num_workers: int = 0
    device: str = "cpu"
    progress: bool = True

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        problems = []
        for name in ("epochs", "steps_per_epoch", "batch_size", "warmup_steps",
                     "plateau_patience", "validation_size"):
            if getattr(self, name) <= 0:
                problems.append(f"train.{name} must be positive, got {getattr(self, name)}")
        for name in ("constant_epochs", "num_workers", "weight_decay"):
            if getattr(self, name) < 0:
                problems.append(f"train.{name} must not be negative, got {getattr(self, name)}")
        for name in ("segment_seconds", "peak_lr", "grad_clip_norm", "adam_eps", "tau_active", "tau_inactive"):
            if not getattr(self, name) > 0:
                problems.append(f"train.{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.prompt_dropout_prob <= 1.0:
            problems.append(
                f"train.prompt_dropout_prob must be in [0, 1], got {self.prompt_dropout_prob}"
            )
        if not 0.0 < self.decay_factor <= 1.0:
            problems.append(f"train.decay_factor must be in (0, 1], got {self.decay_factor}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                problems.append(f"train.{name} must be in [0, 1), got {getattr(self, name)}")
        if self.loss_weighting not in WEIGHTINGS:
            problems.append(
                f"train.loss_weighting must be one of {', '.join(WEIGHTINGS)}, got '{self.loss_weighting}'"
            )
        if self.model_kind not in MODEL_KINDS:
            problems.append(
                f"train.model_kind must be one of {', '.join(MODEL_KINDS)}, got '{self.model_kind}'"
            )
        return problems

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class FineTuneConfig:
    base_checkpoint: Path | None = None
    epochs: int = 26
    peak_lr: float = 1.25e-4
    prompt_dropout_prob: float = 0.25

    def problems(self) -> list[str]:
        problems = []
        if self.epochs <= 0:
            problems.append(f"fine_tune.epochs must be positive, got {self.epochs}")
        if not self.peak_lr > 0:
            problems.append(f"fine_tune.peak_lr must be positive, got {self.peak_lr}")
        if not 0.0 <= self.prompt_dropout_prob <= 1.0:
            problems.append(
                f"fine_tune.prompt_dropout_prob must be in [0, 1], got {self.prompt_dropout_prob}"
            )
        return problems

    def apply(self, train: TrainConfig) -> TrainConfig:
        """
        Training settings for the fine-tuning run: fresh schedule, dropout on.
        The base run already passed its constant phase, so plateau decay is
        live from the first fine-tuning epoch.
        """
        return replace(
            train,
            epochs=self.epochs,
            peak_lr=self.peak_lr,
            constant_epochs=0,
            prompt_dropout=True,
            prompt_dropout_prob=self.prompt_dropout_prob,
        )


@dataclass(frozen=True)
class DataConfig:
    manifest: Path
    sampler: PromptSamplerConfig = field(default_factory=PromptSamplerConfig)
    # fixed validation recipes; generated from train.validation_seed when absent
    valid_recipes: Path | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    data: DataConfig
    train: TrainConfig
    fine_tune: FineTuneConfig | None = None
    run_dir: Path = Path("runs/default")


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    return value


def _train_config(values: dict, problems: list[str]) -> TrainConfig | None:
    known = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(values) - known)
    problems.extend(f"train.{key} is not a known field" for key in unknown)
    values = {k: v for k, v in values.items() if k in known}
    try:
        return TrainConfig(**values)
    except ConfigError as e:
        problems.extend(e.problems)
    except TypeError as e:
        problems.append(f"train: {e}")
    return None


def load_experiment_config(
    path: str | Path, train_overrides: dict | None = None
) -> ExperimentConfig:
    """Parse and validate every section, reporting all problems in one ConfigError"""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    problems = [f"'{key}' is not a known section" for key in raw if key not in SECTIONS]

    model = None
    model_section = _section(raw, "model")
    try:
        model = ModelConfig.from_dict(model_section or {"preset": "medium"})
    except ConfigError as e:
        problems.extend(e.problems)

    train_values = dict(_section(raw, "train"))
    if model_section.get("preset") == "large":
        train_values.setdefault("peak_lr", LARGE_PEAK_LR)
    train_values.update(train_overrides or {})
    train = _train_config(train_values, problems)

    data = None
    data_section = dict(_section(raw, "data"))
    if "manifest" not in data_section:
        problems.append("data.manifest is required")
    else:
        try:
            sampler = PromptSamplerConfig.from_dict(data_section.pop("sampler", {}) or {})
            recipes = data_section.pop("valid_recipes", None)
            manifest = _resolve(path, data_section.pop("manifest"))
            problems.extend(f"data.{key} is not a known field" for key in sorted(data_section))
            data = DataConfig(manifest, sampler, _resolve(path, recipes) if recipes else None)
        except ConfigError as e:
            problems.extend(e.problems)
        except ValueError as e:
            problems.append(f"data.sampler: {e}")

    fine_tune = None
    if raw.get("fine_tune"):
        values = dict(_section(raw, "fine_tune"))
        if values.get("base_checkpoint"):
            values["base_checkpoint"] = _resolve(path, values["base_checkpoint"])
        try:
            fine_tune = FineTuneConfig(**values)
            problems.extend(fine_tune.problems())
        except TypeError as e:
            problems.append(f"fine_tune: {e}")

    if problems:
        raise ConfigError(problems)
    run_dir = _resolve(path, raw.get("run_dir", "runs/default"))
    return ExperimentConfig(model, data, train, fine_tune, run_dir)


def _resolve(config_path: Path, value: str | Path) -> Path:
    value = Path(value)
    return value if value.is_absolute() else config_path.parent / value


def add_train_flags(parser: argparse.ArgumentParser):
    """One --train-<field> flag per TrainConfig field, defaulting to None (not given)"""
    group = parser.add_argument_group("training overrides")
    for f in fields(TrainConfig):
        flag = "--train-" + f.name.replace("_", "-")
        default = f.default if f.default is not MISSING else None
        if f.type is bool:
            group.add_argument(
                flag, dest=f"train_{f.name}", action=argparse.BooleanOptionalAction, default=None,
                help=f"(default {default})",
            )
        else:
            group.add_argument(
                flag, dest=f"train_{f.name}", type=f.type, default=None, metavar=f.name.upper(),
                help=f"(default {default})",
            )


def train_overrides(args: argparse.Namespace) -> dict:
    values = {}
    for f in fields(TrainConfig):
        value = getattr(args, f"train_{f.name}", None)
        if value is not None:
            values[f.name] = value
    return values
