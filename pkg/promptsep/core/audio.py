"""Mono waveform container and WAV file I/O"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import soundfile as sf
import torch

from .errors import SignalError

# Subtypes the reader accepts; everything is returned as float64 in [-1, 1]
READABLE_SUBTYPES = frozenset({"PCM_16", "PCM_24", "FLOAT"})


@dataclass
class AudioBuffer:
    """Mono waveform plus its sample rate"""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise SignalError(
                f"AudioBuffer holds mono audio; got array with shape {samples.shape}"
            )
        if int(self.sample_rate_hz) <= 0:
            raise SignalError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise SignalError("non-finite input")
        self.samples = samples
        self.sample_rate_hz = int(self.sample_rate_hz)

    @classmethod
    def zeros(cls, num_samples: int, sample_rate_hz: int) -> "AudioBuffer":
        return cls(np.zeros(num_samples), sample_rate_hz)

    @classmethod
    def from_tensor(cls, tensor: torch.Tensor, sample_rate_hz: int) -> "AudioBuffer":
        return cls(tensor.detach().cpu().double().numpy(), sample_rate_hz)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return len(self)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def rms(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))

    def energy(self) -> float:
        return float(np.sum(self.samples**2))

    def scaled(self, factor: float) -> "AudioBuffer":
        return AudioBuffer(self.samples * factor, self.sample_rate_hz)

    def fit_length(self, num_samples: int) -> "AudioBuffer":
        """Trim or zero-pad at the end to exactly num_samples"""
        if num_samples == len(self):
            return self
        if num_samples < len(self):
            return AudioBuffer(self.samples[:num_samples], self.sample_rate_hz)
        padded = np.zeros(num_samples)
        padded[: len(self)] = self.samples
        return AudioBuffer(padded, self.sample_rate_hz)

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.from_numpy(self.samples).to(dtype)


def read_wav(
    path: str | Path, start: int = 0, stop: int | None = None
) -> AudioBuffer:
    """
    Read a 16/24-bit PCM or 32-bit float WAV file.
    Multichannel files are reduced to their first channel.
    start/stop select a sample range without reading the whole file.
    """
    path = Path(path)
    info = sf.info(str(path))
    if info.subtype not in READABLE_SUBTYPES:
        raise SignalError(
            f"{path}: unsupported WAV subtype {info.subtype} "
            f"(supported: {', '.join(sorted(READABLE_SUBTYPES))})"
        )
    data, rate = sf.read(
        str(path), start=start, stop=stop, dtype="float64", always_2d=True
    )
    return AudioBuffer(data[:, 0], rate)


def write_wav(path: str | Path, audio: AudioBuffer):
    """Write mono 32-bit float WAV"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(
        str(path),
        audio.samples.astype(np.float32),
        samplerate=audio.sample_rate_hz,
        subtype="FLOAT",
    )
