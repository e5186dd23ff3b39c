from .config import (
    DataConfig,
    ExperimentConfig,
    FineTuneConfig,
    TrainConfig,
    load_experiment_config,
)
from .dropout import apply_prompt_dropout, draw_prompt_dropout
from .schedule import ScheduleState, lr_at
from .trainer import FixedBatches, StreamBatches, Trainer, fine_tune_with_dropout, run_experiment
