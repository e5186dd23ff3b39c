"""
Learning-rate schedule: linear warmup to the peak, then constant, halved at
an epoch boundary whenever validation has not improved for plateau_patience
epochs (only once constant_epochs have completed).
"""

import logging
import math
from dataclasses import asdict, dataclass

from .config import TrainConfig

logger = logging.getLogger(__name__)


def lr_at(step: int, epoch: int, decays_applied: int, config: TrainConfig) -> float:
    """
    Pure function of the schedule position. epoch is accepted for a complete
    position record; decays_applied already encodes its effect.
    """
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    if step < config.warmup_steps:
        return config.peak_lr * step / config.warmup_steps
    return config.peak_lr * config.decay_factor**decays_applied


@dataclass
class ScheduleState:
    global_step: int = 0
    epoch: int = 0
    current_lr: float = 0.0
    best_validation_loss: float = math.inf
    epochs_since_improvement: int = 0
    decay_applied_count: int = 0

    def refresh(self, config: TrainConfig):
        self.current_lr = lr_at(self.global_step, self.epoch, self.decay_applied_count, config)

    def advance_step(self, config: TrainConfig):
        self.global_step += 1
        self.refresh(config)

    def end_epoch(self, validation_loss: float, config: TrainConfig) -> bool:
        """Record one finished epoch; returns True when validation improved"""
        self.epoch += 1
        improved = validation_loss < self.best_validation_loss
        if improved:
            self.best_validation_loss = validation_loss
            self.epochs_since_improvement = 0
        else:
            self.epochs_since_improvement += 1

        if (
            self.epoch >= config.constant_epochs
            and self.epochs_since_improvement >= config.plateau_patience
        ):
            self.decay_applied_count += 1
            self.epochs_since_improvement = 0
            logger.info(
                "epoch %d: no improvement for %d epochs, decaying lr (decay #%d)",
                self.epoch, config.plateau_patience, self.decay_applied_count,
            )
        self.refresh(config)
        return improved

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScheduleState":
        return cls(**data)
