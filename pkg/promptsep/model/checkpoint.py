"""
Self-describing checkpoint archive.

A checkpoint holds the model kind and configuration, every parameter by
name (with a shape/dtype index), the prompt table keyed by category name,
and optional training state (schedule and optimizer) for resumption.
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn

from ..core.errors import CheckpointError, ConfigError
from .baseline import FixedOutputSeparator
from .config import ModelConfig
from .separator import PromptSeparator

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "promptsep-checkpoint"
CHECKPOINT_VERSION = 1

MODEL_KINDS: dict[str, type[nn.Module]] = {
    "prompted": PromptSeparator,
    "fixed-output": FixedOutputSeparator,
}

type Separator = PromptSeparator | FixedOutputSeparator


def model_kind(model: nn.Module) -> str:
    for kind, cls in MODEL_KINDS.items():
        if isinstance(model, cls):
            return kind
    raise CheckpointError(f"cannot checkpoint a {type(model).__name__}")


def build_model(kind: str, config: ModelConfig) -> Separator:
    try:
        return MODEL_KINDS[kind](config)
    except KeyError:
        raise CheckpointError(
            f"unknown model kind '{kind}' (known: {', '.join(MODEL_KINDS)})"
        ) from None


@dataclass
class Checkpoint:
    model_kind: str
    model_config: ModelConfig
    parameters: dict[str, torch.Tensor]
    prompt_table: dict[str, torch.Tensor] = field(default_factory=dict)
    training_state: dict = field(default_factory=dict)

    def build_model(self, device: torch.device | str = "cpu") -> Separator:
        model = build_model(self.model_kind, self.model_config)
        try:
            model.load_state_dict(self.parameters)
        except RuntimeError as e:
            raise CheckpointError(f"parameters do not fit the stored configuration: {e}") from e
        return model.to(device)


def save_checkpoint(path: str | Path, model: Separator, training_state: dict | None = None):
    """Write atomically: a partially written file never replaces a good one"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    parameters = {name: t.detach().cpu().clone() for name, t in model.state_dict().items()}
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_kind": model_kind(model),
        "model_config": model.config.to_dict(),
        "parameter_index": {
            name: {"shape": list(t.shape), "dtype": str(t.dtype).removeprefix("torch.")}
            for name, t in parameters.items()
        },
        "parameters": parameters,
        "prompt_table": model.prompts.by_category() if isinstance(model, PromptSeparator) else {},
        "training_state": training_state or {},
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    logger.debug("saved checkpoint %s (%d tensors)", path, len(parameters))


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"{path}: no such checkpoint")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"{path}: unreadable checkpoint ({e})") from e

    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} archive")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {payload.get('version')} "
            f"(expected {CHECKPOINT_VERSION})"
        )
    try:
        config = ModelConfig.from_dict(payload["model_config"])
    except ConfigError as e:
        raise CheckpointError(f"{path}: stored configuration is invalid: {e}") from e

    parameters = payload["parameters"]
    for name, entry in payload.get("parameter_index", {}).items():
        tensor = parameters.get(name)
        if tensor is None or list(tensor.shape) != entry["shape"]:
            raise CheckpointError(f"{path}: parameter '{name}' is missing or has the wrong shape")

    return Checkpoint(
        model_kind=payload["model_kind"],
        model_config=config,
        parameters=parameters,
        prompt_table=payload.get("prompt_table", {}),
        training_state=payload.get("training_state", {}),
    )
