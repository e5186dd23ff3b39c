"""
Training loop: per-example forward and PIT loss, gradients averaged over
the batch, global-norm clipping, AdamW at the scheduled learning rate,
validation and a checkpoint after every epoch.
"""

import logging
import time
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from itertools import batched, cycle, islice
from pathlib import Path
from typing import Protocol

import numpy as np
import torch
from torch.utils.data import DataLoader
from tqdm import tqdm

from ..core.errors import CheckpointError, SignalError, TrainingError
from ..data.dataset import MixtureStream, epoch_rng
from ..data.manifest import load_manifest
from ..data.mixer import MixtureEngine, MixtureExample, load_recipes, replay_recipe, write_recipes
from ..losses.pit import (
    CategoryGrouping,
    LossReport,
    category_pit_loss,
    fixed_output_pit_loss,
    ordered_mean,
)
from ..model.checkpoint import Separator, build_model, load_checkpoint, save_checkpoint
from ..model.config import ModelConfig
from ..model.separator import PromptSeparator
from ..util.logs import JsonLinesWriter
from .config import ExperimentConfig, FineTuneConfig, TrainConfig
from .dropout import apply_prompt_dropout
from .schedule import ScheduleState

logger = logging.getLogger(__name__)

# seed stream id for prompt dropout, kept clear of DataLoader worker ids
DROPOUT_STREAM = 1_000_003


class BatchSource(Protocol):
    def epoch_batches(self, epoch: int) -> Iterable[list[MixtureExample]]: ...


def _identity(example):
    return example


class StreamBatches:
    """Freshly synthesized examples, reproducible per (seed, epoch)"""

    def __init__(self, engine: MixtureEngine, config: TrainConfig):
        self.config = config
        self.stream = MixtureStream(
            engine, config.steps_per_epoch * config.batch_size, seed=config.seed
        )

    def epoch_batches(self, epoch: int) -> Iterator[list[MixtureExample]]:
        self.stream.set_epoch(epoch)
        loader = DataLoader(
            self.stream,
            batch_size=None,
            num_workers=self.config.num_workers,
            collate_fn=_identity,
        )
        for batch in batched(loader, self.config.batch_size):
            yield list(batch)


class FixedBatches:
    """A fixed example list cycled in order; used for overfitting and smoke runs"""

    def __init__(self, examples: Sequence[MixtureExample], config: TrainConfig):
        if not examples:
            raise ValueError("FixedBatches needs at least one example")
        self.examples = list(examples)
        self.config = config

    def epoch_batches(self, epoch: int) -> Iterator[list[MixtureExample]]:
        stream = islice(cycle(self.examples), self.config.steps_per_epoch * self.config.batch_size)
        for batch in batched(stream, self.config.batch_size):
            yield list(batch)


@dataclass
class StepResult:
    loss: float
    reports: list[LossReport]
    grad_norm: float
    lr: float

    def per_category(self) -> dict[str, float]:
        grouped: dict[str, list[float]] = {}
        for report in self.reports:
            for name, value in report.per_category_loss.items():
                grouped.setdefault(name, []).append(float(value))
        return {name: float(np.mean(values)) for name, values in grouped.items()}


class Trainer:
    def __init__(
        self,
        model: Separator,
        config: TrainConfig,
        batches: BatchSource,
        validation: Sequence[MixtureExample] = (),
        run_dir: str | Path | None = None,
    ):
        self.config = config
        self.device = torch.device(config.device)
        self.model = model.to(self.device)
        self.dtype = next(model.parameters()).dtype
        self.batches = batches
        self.validation = list(validation)
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.optimizer = torch.optim.AdamW(
            model.parameters(),
            lr=0.0,
            betas=(config.beta1, config.beta2),
            eps=config.adam_eps,
            weight_decay=config.weight_decay,
        )
        self.schedule = ScheduleState()
        self.schedule.refresh(config)
        self.log = JsonLinesWriter(self.run_dir / "train_log.jsonl") if self.run_dir else None

    @property
    def prompted(self) -> bool:
        return isinstance(self.model, PromptSeparator)

    def _record(self, record: dict):
        if self.log is not None:
            self.log.write(record)

    def example_loss(self, example: MixtureExample) -> LossReport:
        mixture = example.mixture.to_tensor(self.dtype).to(self.device)
        targets = torch.stack([s.to_tensor(self.dtype) for s in example.sources]).to(self.device)
        if self.prompted:
            estimates = self.model(mixture.unsqueeze(0), example.prompts)[0]
            return category_pit_loss(
                targets,
                estimates,
                CategoryGrouping.from_prompts(example.prompts),
                weighting=self.config.loss_weighting,
            )
        estimates = self.model(mixture.unsqueeze(0))[0]
        return fixed_output_pit_loss(
            targets, estimates, mixture, self.config.tau_active, self.config.tau_inactive
        )

    def train_step(self, batch: list[MixtureExample]) -> StepResult:
        state = self.schedule
        if not batch:
            raise TrainingError("empty batch", state.epoch, state.global_step)
        lengths = {example.num_samples for example in batch}
        if len(lengths) > 1:
            raise TrainingError(
                f"batch mixes segment lengths {sorted(lengths)}", state.epoch, state.global_step
            )

        self.model.train()
        self.optimizer.zero_grad(set_to_none=True)
        reports = []
        for example in batch:
            report = self.example_loss(example)
            if not torch.isfinite(report.total):
                self.optimizer.zero_grad(set_to_none=True)
                raise TrainingError(
                    f"non-finite loss for prompts [{example.prompts}]: {report.to_record()}",
                    state.epoch,
                    state.global_step,
                )
            (report.total / len(batch)).backward()
            reports.append(report)

        grad_norm = float(
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.config.grad_clip_norm)
        )
        if not np.isfinite(grad_norm):
            self.optimizer.zero_grad(set_to_none=True)
            raise TrainingError(
                f"non-finite gradient norm ({grad_norm})", state.epoch, state.global_step
            )

        lr = state.current_lr
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        self.optimizer.step()
        state.advance_step(self.config)
        loss = float(ordered_mean([r.total.detach() for r in reports]))
        return StepResult(loss, reports, grad_norm, lr)

    @torch.no_grad()
    def validate(self) -> float:
        """Mean PIT loss over the fixed validation examples, without prompt dropout"""
        if not self.validation:
            return float("nan")
        self.model.eval()
        losses = [self.example_loss(example).total for example in self.validation]
        return float(ordered_mean(losses))

    def run_epoch(self) -> float:
        state = self.schedule
        epoch = state.epoch
        dropout_rng = epoch_rng(self.config.seed, epoch, DROPOUT_STREAM)
        losses = []
        started = time.monotonic()
        progress = tqdm(
            self.batches.epoch_batches(epoch),
            total=self.config.steps_per_epoch,
            desc=f"epoch {epoch + 1}/{self.config.epochs}",
            disable=not self.config.progress,
            leave=False,
        )
        try:
            for batch in progress:
                if self.config.prompt_dropout:
                    batch = [
                        apply_prompt_dropout(ex, dropout_rng, self.config.prompt_dropout_prob)
                        for ex in batch
                    ]
                result = self.train_step(batch)
                losses.append(result.loss)
                progress.set_postfix(loss=f"{result.loss:.3f}", lr=f"{result.lr:.2e}")
                self._record(
                    {
                        "event": "step",
                        "epoch": epoch,
                        "step": state.global_step,
                        "lr": result.lr,
                        "loss": result.loss,
                        "per_category": result.per_category(),
                        "grad_norm": result.grad_norm,
                        "wall_time": time.monotonic() - started,
                    }
                )
        except (SignalError, OSError) as e:
            raise TrainingError(f"data error: {e}", epoch, state.global_step) from e
        finally:
            progress.close()
        return float(np.mean(losses)) if losses else float("nan")

    def training_state(self) -> dict:
        return {
            "schedule": self.schedule.to_dict(),
            "optimizer": self.optimizer.state_dict(),
            "train_config": self.config.to_dict(),
        }

    def save(self, path: Path):
        try:
            save_checkpoint(path, self.model, self.training_state())
        except OSError as e:
            raise TrainingError(
                f"cannot write checkpoint {path}: {e}", self.schedule.epoch, self.schedule.global_step
            ) from e

    def fit(self) -> list[Path]:
        """Train until config.epochs are complete; returns the per-epoch checkpoints written"""
        if self.run_dir is None:
            raise TrainingError("fit needs a run directory for checkpoints", self.schedule.epoch, 0)
        written = []
        logger.info(
            "training %s from epoch %d to %d (%d steps/epoch)",
            type(self.model).__name__, self.schedule.epoch, self.config.epochs,
            self.config.steps_per_epoch,
        )
        try:
            while self.schedule.epoch < self.config.epochs:
                train_loss = self.run_epoch()
                validation_loss = self.validate() if self.validation else train_loss
                improved = self.schedule.end_epoch(validation_loss, self.config)
                path = self.run_dir / f"epoch{self.schedule.epoch:03d}.pt"
                self.save(path)
                written.append(path)
                if improved:
                    self.save(self.run_dir / "best.pt")
                record = {
                    "event": "epoch",
                    "epoch": self.schedule.epoch,
                    "step": self.schedule.global_step,
                    "train_loss": train_loss,
                    "validation_loss": validation_loss,
                    "best_validation_loss": self.schedule.best_validation_loss,
                    "lr": self.schedule.current_lr,
                    "decays": self.schedule.decay_applied_count,
                    "checkpoint": str(path),
                }
                self._record(record)
                logger.info(
                    "epoch %d: train %.3f, valid %.3f (best %.3f), lr %.3g",
                    self.schedule.epoch, train_loss, validation_loss,
                    self.schedule.best_validation_loss, self.schedule.current_lr,
                )
        finally:
            if self.log is not None:
                self.log.close()
                self.log = None
        return written

    @classmethod
    def resume(
        cls,
        checkpoint_path: str | Path,
        config: TrainConfig,
        batches: BatchSource,
        validation: Sequence[MixtureExample] = (),
        run_dir: str | Path | None = None,
    ) -> "Trainer":
        """Continue from a checkpoint written by fit: parameters, optimizer and schedule"""
        checkpoint = load_checkpoint(checkpoint_path)
        state = checkpoint.training_state
        if "optimizer" not in state or "schedule" not in state:
            raise CheckpointError(f"{checkpoint_path}: no training state to resume from")
        trainer = cls(checkpoint.build_model(config.device), config, batches, validation, run_dir)
        trainer.optimizer.load_state_dict(state["optimizer"])
        trainer.schedule = ScheduleState.from_dict(state["schedule"])
        trainer.schedule.refresh(config)
        logger.info("resumed from %s at epoch %d, step %d", checkpoint_path,
                    trainer.schedule.epoch, trainer.schedule.global_step)
        return trainer


def fine_tune_with_dropout(
    base_checkpoint: str | Path,
    config: TrainConfig,
    fine_tune: FineTuneConfig,
    batches: BatchSource,
    validation: Sequence[MixtureExample] = (),
    run_dir: str | Path | None = None,
    expected_model: ModelConfig | None = None,
) -> list[Path]:
    """
    Start from the base checkpoint's parameters with a fresh optimizer and
    schedule, prompt dropout enabled.
    """
    checkpoint = load_checkpoint(base_checkpoint)
    if expected_model is not None and checkpoint.model_config != expected_model:
        raise CheckpointError(
            f"{base_checkpoint}: stored model configuration does not match the experiment's"
        )
    tuned = fine_tune.apply(config)
    trainer = Trainer(checkpoint.build_model(tuned.device), tuned, batches, validation, run_dir)
    logger.info(
        "fine-tuning %s for %d epochs, peak lr %.3g, dropout p=%.2f",
        base_checkpoint, tuned.epochs, tuned.peak_lr, tuned.prompt_dropout_prob,
    )
    return trainer.fit()


def run_experiment(experiment: ExperimentConfig, resume: str | Path | None = None) -> list[Path]:
    """Everything `promptsep train` does once the configuration is loaded"""
    config: TrainConfig = experiment.train
    try:
        manifest = load_manifest(experiment.data.manifest)
        engine = MixtureEngine(
            manifest,
            experiment.data.sampler,
            duration_s=config.segment_seconds,
            sample_rate_hz=experiment.model.sample_rate_hz,
        )
        if experiment.data.valid_recipes is not None:
            recipes = load_recipes(experiment.data.valid_recipes)
        else:
            recipes = engine.validation_recipes(config.validation_size, config.validation_seed)
        validation = [replay_recipe(r) for r in recipes]
    except OSError as e:
        raise TrainingError(f"cannot prepare data: {e}", 0, 0) from e

    run_dir = experiment.run_dir
    write_recipes(run_dir / "validation_recipes.jsonl", validation)
    batches = StreamBatches(engine, config)

    if experiment.fine_tune is not None and experiment.fine_tune.base_checkpoint is not None:
        tuned = experiment.fine_tune.apply(config)
        batches = StreamBatches(engine, tuned)
        if resume is not None:
            return Trainer.resume(resume, tuned, batches, validation, run_dir).fit()
        return fine_tune_with_dropout(
            experiment.fine_tune.base_checkpoint, config, experiment.fine_tune, batches,
            validation, run_dir, expected_model=experiment.model,
        )
    if resume is not None:
        trainer = Trainer.resume(resume, config, batches, validation, run_dir)
    else:
        trainer = Trainer(build_model(config.model_kind, experiment.model), config, batches,
                          validation, run_dir)
    return trainer.fit()
