from .audio import AudioBuffer, read_wav, write_wav
from .dsp import (
    MODEL_RATE_HZ,
    BandSplitSpec,
    Spectrogram,
    StftConfig,
    band_partition,
    istft,
    resample,
    stft,
)
from .errors import (
    CheckpointError,
    ConfigError,
    ManifestError,
    NonFiniteError,
    PromptSetError,
    SeparationError,
    SignalError,
    TrainingError,
)
from .types import PromptCategory, PromptSet
