from .baseline import FixedOutputSeparator
from .checkpoint import Checkpoint, build_model, load_checkpoint, save_checkpoint
from .config import PRESETS, ModelConfig, StackConfig
from .separator import ConditionalExtractor, PromptSeparator, count_parameters
